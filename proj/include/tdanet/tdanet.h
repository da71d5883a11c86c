#pragma once

#include <cstdint>
#include <vector>

#include "tdanet/config.h"
#include "tdanet/layers.h"
#include "tdanet/param_store.h"

namespace tdanet {

// How a waveform of length T is padded so the embedding length T' is a
// multiple of 2^S, and where the original samples sit in the padded signal.
struct FramePlan {
  std::size_t input_len = 0;
  std::size_t frames = 0;      // T'
  std::size_t left_pad = 0;
  std::size_t padded_len = 0;  // (T'-1)*stride + L
};

FramePlan plan_frames(const ModelConfig& config, std::size_t input_len);

// Every learnable tensor of the network for `config`; independent of B.
ParamLayout model_layout(const ModelConfig& config);

// Multi-resolution features F_1..F_{S+1} (index 0 is full resolution).
template <typename T>
struct ScaleLadder {
  std::vector<Var<T>> levels;
  std::size_t size() const { return levels.size(); }
  const Var<T>& operator[](std::size_t i) const { return levels[i]; }
};

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required for dropout when training
};

// The separation network. Stage methods take the parameter binding for the
// current pass so the same code serves training, inference and gradient
// checks; parameters are shared across all B block repeats.
template <typename T>
class TDANet {
 public:
  TDANet(ModelConfig config, std::uint64_t seed);
  TDANet(ModelConfig config, ParamStore<T> params);

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Zero-pads a 1 x T waveform according to plan_frames().
  Tensor<T> pad_waveform(const Tensor<T>& wave) const;

  Var<T> audio_encode(const Var<T>& padded_wave, const ParamBinding<T>& p) const;
  Var<T> bottleneck(const Var<T>& embedding, const ParamBinding<T>& p) const;
  ScaleLadder<T> encoder_path(const Var<T>& x, const ParamBinding<T>& p) const;
  Var<T> ga_fuse(const ScaleLadder<T>& ladder, const ParamBinding<T>& p) const;
  Var<T> ga_transform(const Var<T>& global, const ParamBinding<T>& p,
                      const ForwardOptions& opt) const;
  ScaleLadder<T> ga_modulate(const ScaleLadder<T>& ladder, const Var<T>& global_m) const;
  Var<T> la_decode(const ScaleLadder<T>& modulated, const Var<T>& top,
                   const ParamBinding<T>& p) const;
  // One encoder/GA/decoder cycle mapping the bottleneck width to itself.
  Var<T> block(const Var<T>& x, const ParamBinding<T>& p, const ForwardOptions& opt) const;
  // R_0 = block(x), R_b = block(x + R_{b-1}); returns R_{B-1}.
  Var<T> unfold(const Var<T>& x, const ParamBinding<T>& p, const ForwardOptions& opt) const;
  std::vector<Var<T>> mask_head(const Var<T>& r, const ParamBinding<T>& p) const;
  Var<T> audio_decode(const Var<T>& embedding, const ParamBinding<T>& p) const;

  // Full pipeline: 1 x T waveform -> C waveforms of length T.
  std::vector<Var<T>> forward(const Tensor<T>& wave, const ParamBinding<T>& p,
                              const ForwardOptions& opt = {}) const;
  // Masks and embedding of the full pipeline, for inspection.
  std::vector<Var<T>> forward_masks(const Tensor<T>& wave, const ParamBinding<T>& p,
                                    const ForwardOptions& opt, Var<T>* embedding) const;
  // Inference without a graph; checks the sample rate.
  std::vector<Tensor<T>> separate(const Tensor<T>& wave, int sample_rate) const;
  std::vector<Tensor<T>> separate(const Tensor<T>& wave) const {
    return separate(wave, config_.sample_rate);
  }

 private:
  DropoutContext dropout_for(const ForwardOptions& opt) const;

  ModelConfig config_;
  ParamStore<T> params_;
};

extern template class TDANet<float>;
extern template class TDANet<double>;

}  // namespace tdanet
