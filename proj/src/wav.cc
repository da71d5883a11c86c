#include "tdanet/wav.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "tdanet/error.h"

namespace tdanet {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < 12) throw FormatError(where + "truncated RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "RIFF chunk is not RIFF/WAVE");
  }
  bool have_fmt = false;
  std::uint16_t codec = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const std::uint32_t len = read_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) throw FormatError(where + "'" + id + "' chunk is truncated");
    if (id == "fmt ") {
      if (len < 16) throw FormatError(where + "'fmt ' chunk is too short");
      codec = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (codec == 0xFFFE && len >= 40) codec = read_u16(bytes.data() + body + 24);
      if (channels != 1) {
        throw FormatError(where + "'fmt ' chunk declares " + std::to_string(channels) + " channels, only mono is supported");
      }
      if (!((codec == 1 && bits == 16) || (codec == 3 && bits == 32))) {
        throw FormatError(where + "'fmt ' chunk codec " + std::to_string(codec) + " with " + std::to_string(bits) +
                          " bits is unsupported (PCM16 or float32 only)");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(where + "'data' chunk precedes 'fmt ' chunk");
      WavData out;
      out.sample_rate = static_cast<int>(rate);
      const unsigned char* p = bytes.data() + body;
      if (codec == 1) {
        out.format = WavFormat::kPcm16;
        out.samples.resize(len / 2);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
          out.samples[i] = static_cast<float>(static_cast<std::int16_t>(read_u16(p + 2 * i))) / 32768.0f;
        }
      } else {
        out.format = WavFormat::kFloat32;
        out.samples.resize(len / 4);
        std::memcpy(out.samples.data(), p, out.samples.size() * 4);
      }
      return out;
    }
    pos = body + len + (len & 1);
  }
  throw FormatError(where + (have_fmt ? "missing 'data' chunk" : "missing 'fmt ' chunk"));
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate,
               WavFormat format) {
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format == WavFormat::kPcm16 ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_len);
  if (format == WavFormat::kPcm16) {
    for (float s : samples) {
      const long q = std::lround(std::clamp(static_cast<double>(s), -1.0, 1.0) * 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
    }
  } else {
    const std::size_t at = out.size();
    out.resize(at + data_len);
    std::memcpy(out.data() + at, samples.data(), data_len);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FileError("write failed for " + path.string());
}

}  // namespace tdanet
