#pragma once

#include <string>
#include <vector>

#include "tdanet/ops.h"
#include "tdanet/param_store.h"

namespace tdanet {

inline constexpr double kGlnEps = 1e-8;

// Dropout source for one forward pass. Inactive without an Rng.
struct DropoutContext {
  double p = 0.0;
  Rng* rng = nullptr;
  bool active() const { return rng != nullptr && p > 0.0; }
};

template <typename T>
Var<T> apply_dropout(const Var<T>& x, const DropoutContext& ctx) {
  return ctx.active() ? dropout(x, ctx.p, *ctx.rng) : x;
}

// Global layer norm: standardize over channels and time jointly, then a
// per-channel gain and bias. Parameters: <prefix>.gain, <prefix>.bias (C x 1).
void add_gln(ParamLayout& layout, const std::string& prefix, std::size_t channels);
template <typename T>
Var<T> gln(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(kGlnEps));
template <typename T>
Var<T> gln(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix);

// Single learnable slope, initialized to 0.25. Parameter: <prefix> (1).
void add_prelu(ParamLayout& layout, const std::string& prefix);

// 1x1 convolution; bias is optional (<prefix>.bias).
void add_pointwise(ParamLayout& layout, const std::string& prefix, std::size_t in,
                   std::size_t out, bool bias);
template <typename T>
Var<T> pointwise(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix);

// Depthwise kernel-K convolution, "same" length at stride 1.
void add_depthwise(ParamLayout& layout, const std::string& prefix, std::size_t channels,
                   std::size_t kernel, bool bias);

// Sinusoidal table d (N x t_max): d[2k][t] = sin(t / 10000^(2k/N)),
// d[2k+1][t] = cos(t / 10000^(2k/N)).
template <typename T>
Tensor<T> positional_table(std::size_t channels, std::size_t t_max);

struct AttentionOptions {
  std::size_t heads = 8;
  bool positional = true;
  DropoutContext dropout;
};

// Transformer-style multi-head self-attention over the time axis of an
// N x T feature map, returning x + GLN(MHSA(x + d)).
// Parameters: <prefix>.{q,k,v,o}.{weight,bias}, <prefix>.norm.
void add_mhsa(ParamLayout& layout, const std::string& prefix, std::size_t dim);
template <typename T>
Var<T> mhsa(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix,
            const AttentionOptions& options, std::vector<Tensor<T>>* attention = nullptr);

// Convolutional feed-forward block with channel chain N -> 2N -> 2N -> N:
// x + GLN(Conv1x1(ReLU(GLN(DWConv5(GLN(Conv1x1(x))))))).
void add_ffn(ParamLayout& layout, const std::string& prefix, std::size_t dim);
template <typename T>
Var<T> ffn(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix,
           const DropoutContext& dropout = {});

}  // namespace tdanet
