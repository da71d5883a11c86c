#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

namespace tdanet {

enum class GaInput { kFused, kTop };
enum class Fusion { kSum, kConcat };

// Architecture hyperparameters. Defaults are the base configuration
// (N=512, S=4, B=16, 8 heads, 4 ms window at 16 kHz).
struct ModelConfig {
  int sample_rate = 16000;
  double win_ms = 4.0;
  int stride_override = 0;  // samples; 0 means floor(L/4)
  int channels = 512;       // N
  int bottleneck = 128;     // width carried between unfolded blocks
  int depth = 4;            // S down-samplings
  int unfolds = 16;         // B
  int heads = 8;
  int speakers = 2;         // C
  double dropout = 0.1;

  bool use_ga = true;
  bool ga_topdown = true;   // off: transformer output feeds the decoder top
  bool use_transformer_layer = true;
  bool use_mhsa = true;
  bool use_ffn = true;
  bool use_la = true;
  GaInput ga_input = GaInput::kFused;
  Fusion fusion = Fusion::kSum;

  int win_samples() const;     // L
  int stride_samples() const;  // floor(L/4) unless overridden
  int frame_multiple() const { return 1 << depth; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Stable hex digest of the canonical JSON form.
  std::string hash() const;

  static ModelConfig base();
  static ModelConfig large();
  // Applies comma-separated ablations: no_ga, no_la, no_tl, no_mhsa, no_ffn,
  // no_topdown, top_f, concat.
  ModelConfig with_ablations(const std::string& list) const;
};

}  // namespace tdanet
