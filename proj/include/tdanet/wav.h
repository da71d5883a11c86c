#pragma once

#include <filesystem>
#include <vector>

namespace tdanet {

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  std::vector<float> samples;
  int sample_rate = 16000;
  WavFormat format = WavFormat::kFloat32;
};

// Mono RIFF/WAVE, 16-bit PCM or 32-bit IEEE float. PCM16 decodes to x/32768.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate,
               WavFormat format = WavFormat::kFloat32);

}  // namespace tdanet
