#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdanet/complexity.h"
#include "tdanet/datagen.h"
#include "tdanet/loss.h"
#include "tdanet/tdanet.h"

namespace tdanet {

struct Improvement {
  double value_db = 0.0;          // mean over speakers
  std::vector<std::size_t> perm;  // estimate i pairs with target perm[i]
};

// SI-SNR improvement over the mixture under the best permutation.
Improvement si_snri(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                    const Waveform& mixture, const SiSnrOptions& options = {});

// Simplified SDR: gain-only distortion, 10 log10(||a t||^2 / ||est - a t||^2)
// with a = <est, t> / ||t||^2 and no mean removal; clamped like SI-SNR.
double sdr(const Waveform& estimate, const Waveform& target);
Improvement sdri(const std::vector<Waveform>& estimates, const std::vector<Waveform>& targets,
                 const Waveform& mixture);

struct RtfResult {
  double mean_s = 0.0;  // seconds of compute per second of audio
  double std_s = 0.0;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  std::size_t tracks = 0;
  double track_seconds = 1.0;
  std::vector<double> samples;
};

struct RtfOptions {
  std::size_t tracks = 10;
  std::size_t repeats = 100;
  std::size_t warmup = 3;
  double track_seconds = 1.0;
  std::uint64_t seed = 0;
};

// Times separate() over `tracks` random tracks per repeat on the calling
// thread only; each sample is total wall time / tracks.
RtfResult cpu_rtf(const TDANet<float>& model, const RtfOptions& options = {});

struct ExampleMetrics {
  std::string id;
  double si_snri_db = 0.0;
  double sdri_db = 0.0;
  std::vector<std::size_t> perm;
};

struct Environment {
  std::string host;
  std::size_t threads = 1;
  std::string precision = "float32";
};
Environment describe_environment(std::size_t threads);

struct MetricsReport {
  std::string config_hash;
  std::string estimates = "model";  // model | oracle | mixture
  std::string alignment = "per-example PIT";
  std::vector<ExampleMetrics> examples;
  std::optional<double> si_snri_db;
  std::optional<double> sdri_db;
  std::optional<double> params_m;
  std::optional<double> macs_g_per_s;
  std::optional<MacBreakdown> macs;
  std::optional<RtfResult> rtf;
  Environment environment;

  nlohmann::json to_json() const;
  std::string to_text() const;
  void write_per_example_csv(const std::filesystem::path& path) const;
};

// Static counts of `config` (pure function of the config).
MetricsReport profile(const ModelConfig& config);

// Produces estimates for one example.
using Separator = std::function<std::vector<Waveform>(const MixtureExample&)>;

Separator model_separator(const TDANet<float>& model);
Separator oracle_separator();
Separator mixture_separator();

// Metrics over the rows of `split` (empty: every row), in parallel across
// examples; results are ordered as in the manifest.
MetricsReport evaluate_manifest(const DatasetManifest& manifest, const Separator& separator,
                                const std::string& split = "test", std::size_t threads = 0,
                                double max_duration_s = 0.0);

// Same on in-memory examples.
MetricsReport evaluate_examples(const std::vector<MixtureExample>& examples, const Separator& separator,
                                std::size_t threads = 1);

}  // namespace tdanet
