#include "tdanet/layers.h"

#include <cmath>

namespace tdanet {

void add_gln(ParamLayout& layout, const std::string& prefix, std::size_t channels) {
  layout.add(prefix + ".gain", {channels, 1}, Init::kOnes);
  layout.add(prefix + ".bias", {channels, 1}, Init::kZeros);
}

template <typename T>
Var<T> gln(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  return add_channel(mul_channel(global_normalize(x, eps), gain), bias);
}

template <typename T>
Var<T> gln(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix) {
  return gln(x, p(prefix + ".gain"), p(prefix + ".bias"));
}

void add_prelu(ParamLayout& layout, const std::string& prefix) {
  layout.add(prefix, {1}, Init::kPReLU);
}

void add_pointwise(ParamLayout& layout, const std::string& prefix, std::size_t in,
                   std::size_t out, bool bias) {
  layout.add(prefix + ".weight", {out, in, 1}, Init::kFanIn);
  if (bias) layout.add(prefix + ".bias", {out, 1}, Init::kBiasFanIn, in);
}

template <typename T>
Var<T> pointwise(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix) {
  Var<T> y = conv1d(x, p(prefix + ".weight"));
  const std::string bias = prefix + ".bias";
  return p.contains(bias) ? add_channel(y, p(bias)) : y;
}

void add_depthwise(ParamLayout& layout, const std::string& prefix, std::size_t channels,
                   std::size_t kernel, bool bias) {
  layout.add(prefix + ".weight", {channels, 1, kernel}, Init::kFanIn);
  if (bias) layout.add(prefix + ".bias", {channels, 1}, Init::kBiasFanIn, kernel);
}

template <typename T>
Tensor<T> positional_table(std::size_t channels, std::size_t t_max) {
  if (channels % 2 != 0) {
    throw ConfigError("positional_table: channel count must be even, got " + std::to_string(channels));
  }
  Tensor<T> d({channels, t_max});
  for (std::size_t k = 0; k < channels / 2; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * k) / static_cast<double>(channels));
    for (std::size_t t = 0; t < t_max; ++t) {
      const double phase = static_cast<double>(t) * freq;
      d.at(2 * k, t) = static_cast<T>(std::sin(phase));
      d.at(2 * k + 1, t) = static_cast<T>(std::cos(phase));
    }
  }
  return d;
}

void add_mhsa(ParamLayout& layout, const std::string& prefix, std::size_t dim) {
  for (const char* proj : {".q", ".k", ".v", ".o"}) add_pointwise(layout, prefix + proj, dim, dim, true);
  add_gln(layout, prefix + ".norm", dim);
}

template <typename T>
Var<T> mhsa(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix,
            const AttentionOptions& options, std::vector<Tensor<T>>* attention) {
  require_rank(x.shape(), 2, "mhsa");
  const std::size_t dim = x.value().rows(), frames = x.value().cols();
  if (options.heads == 0 || dim % options.heads != 0) {
    throw ConfigError("mhsa: model dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(options.heads) + " heads");
  }
  if (p(prefix + ".q.weight").shape()[0] != dim) {
    throw ConfigError("mhsa: input has " + std::to_string(dim) + " channels, projections expect " +
                      std::to_string(p(prefix + ".q.weight").shape()[0]));
  }
  const std::size_t head_dim = dim / options.heads;
  Var<T> in = x;
  if (options.positional) in = add(x, Var<T>::leaf(positional_table<T>(dim, frames)));

  const Var<T> q = pointwise(in, p, prefix + ".q");
  const Var<T> k = pointwise(in, p, prefix + ".k");
  const Var<T> v = pointwise(in, p, prefix + ".v");
  const T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));

  std::vector<Var<T>> heads;
  heads.reserve(options.heads);
  if (attention) attention->clear();
  for (std::size_t h = 0; h < options.heads; ++h) {
    const Var<T> qh = slice_rows(q, h * head_dim, head_dim);
    const Var<T> kh = slice_rows(k, h * head_dim, head_dim);
    const Var<T> vh = slice_rows(v, h * head_dim, head_dim);
    // rows: queries, columns: keys
    Var<T> weights = softmax_rows(scale(matmul(qh, kh, true, false), inv_scale));
    if (attention) attention->push_back(weights.value());
    weights = apply_dropout(weights, options.dropout);
    heads.push_back(matmul(vh, weights, false, true));
  }
  const Var<T> merged = options.heads == 1 ? heads[0] : concat_rows(heads);
  const Var<T> out = pointwise(merged, p, prefix + ".o");
  return add(x, gln(out, p, prefix + ".norm"));
}

void add_ffn(ParamLayout& layout, const std::string& prefix, std::size_t dim) {
  add_pointwise(layout, prefix + ".conv1", dim, 2 * dim, false);
  add_gln(layout, prefix + ".norm1", 2 * dim);
  add_depthwise(layout, prefix + ".dw", 2 * dim, 5, true);
  add_gln(layout, prefix + ".norm2", 2 * dim);
  add_pointwise(layout, prefix + ".conv3", 2 * dim, dim, false);
  add_gln(layout, prefix + ".norm3", dim);
}

template <typename T>
Var<T> ffn(const Var<T>& x, const ParamBinding<T>& p, const std::string& prefix,
           const DropoutContext& dropout) {
  const std::size_t wide = p(prefix + ".dw.weight").shape()[0];
  Var<T> h = gln(pointwise(x, p, prefix + ".conv1"), p, prefix + ".norm1");
  h = apply_dropout(h, dropout);
  ConvSpec dw;
  dw.padding = 2;
  dw.groups = static_cast<int>(wide);
  h = add_channel(conv1d(h, p(prefix + ".dw.weight"), dw), p(prefix + ".dw.bias"));
  h = relu(gln(h, p, prefix + ".norm2"));
  h = apply_dropout(h, dropout);
  h = gln(pointwise(h, p, prefix + ".conv3"), p, prefix + ".norm3");
  h = apply_dropout(h, dropout);
  return add(x, h);
}

#define TDANET_INSTANTIATE_LAYERS(T)                                                          \
  template Var<T> gln(const Var<T>&, const Var<T>&, const Var<T>&, T);                        \
  template Var<T> gln(const Var<T>&, const ParamBinding<T>&, const std::string&);             \
  template Var<T> pointwise(const Var<T>&, const ParamBinding<T>&, const std::string&);       \
  template Tensor<T> positional_table<T>(std::size_t, std::size_t);                           \
  template Var<T> mhsa(const Var<T>&, const ParamBinding<T>&, const std::string&,             \
                       const AttentionOptions&, std::vector<Tensor<T>>*);                     \
  template Var<T> ffn(const Var<T>&, const ParamBinding<T>&, const std::string&,              \
                      const DropoutContext&);

TDANET_INSTANTIATE_LAYERS(float)
TDANET_INSTANTIATE_LAYERS(double)

#undef TDANET_INSTANTIATE_LAYERS

}  // namespace tdanet
