#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tdanet {

using Waveform = std::vector<float>;

enum class SourceKind { kHarmonicVoice, kChirp, kNoiseBurst };
SourceKind parse_source_kind(const std::string& name);
std::string to_string(SourceKind kind);

inline constexpr double kSourcePeak = 0.9;

// Deterministic synthetic source, peak-normalized to kSourcePeak.
Waveform synth_source(SourceKind kind, double duration_s, std::uint64_t seed, int sample_rate = 16000);

// Harmonic voice with an explicit fundamental (used by tests).
Waveform harmonic_voice(double duration_s, double f0, std::uint64_t seed, int sample_rate = 16000);

double energy(const Waveform& x);
double snr_db(const Waveform& signal, const Waveform& interference);

struct MixResult {
  Waveform mixture;
  Waveform s1;
  Waveform s2;
  double scale = 1.0;  // applied to s2
};

// Scales s2 so 10 log10(||s1||^2 / ||s2'||^2) = snr_db; mixture = s1 + s2'.
MixResult mix_at_snr(const Waveform& s1, const Waveform& s2, double snr_db);

enum class Recipe { kLrs2Style, kWhamStyle, kLibri2MixStyle };
Recipe parse_recipe(const std::string& name);
std::string to_string(Recipe recipe);

struct RecipeSpec {
  double duration_s = 2.0;
  bool with_noise = false;
};
RecipeSpec recipe_spec(Recipe recipe);

struct MixtureExample {
  Waveform mixture;
  std::vector<Waveform> sources;
  Waveform noise;  // empty when the recipe has no noise
  double snr_db = 0.0;
  int sample_rate = 16000;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  double rescale = 1.0;  // clipping rescale factor applied jointly
};

// One example of `recipe`; duration_s <= 0 uses the recipe default.
MixtureExample make_example(Recipe recipe, std::uint64_t seed, double duration_s = 0.0, int sample_rate = 16000);

struct ManifestRow {
  std::string mixture;
  std::string src1;
  std::string src2;
  std::string noise;  // empty when absent
  double snr_db = 0.0;
  std::string split;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::filesystem::path path;  // manifest file; row paths are relative to its directory
  std::string recipe;
  std::uint64_t seed = 0;
  std::vector<std::string> comments;  // header lines without the leading '#'
  std::vector<ManifestRow> rows;

  std::vector<const ManifestRow*> split(const std::string& name) const;
  std::filesystem::path resolve(const std::string& relative) const;
};

struct DatasetCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SimulateOptions {
  double duration_s = 0.0;  // <= 0: recipe default
  int sample_rate = 16000;
  std::size_t threads = 0;  // 0: worker_threads()
};

// Per-row seed for example `index` of `split`.
std::uint64_t example_seed(std::uint64_t root_seed, const std::string& split, std::size_t index);

DatasetManifest simulate_dataset(Recipe recipe, const DatasetCounts& counts, const std::filesystem::path& out_dir,
                                 std::uint64_t seed, const SimulateOptions& options = {});

void write_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

// Loads the audio of one row; max_duration_s > 0 truncates every signal.
MixtureExample load_example(const DatasetManifest& manifest, const ManifestRow& row, double max_duration_s = 0.0);

// Worker count from TDANET_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_threads();

}  // namespace tdanet
