#include "tdanet/gradcheck_suite.h"

#include <functional>

#include "tdanet/layers.h"
#include "tdanet/loss.h"
#include "tdanet/tdanet.h"

namespace tdanet {

namespace {

using V = Var<double>;
using Tn = Tensor<double>;

Tn random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tn t(std::move(shape));
  for (double& v : t.values()) v = rng.normal() * scale;
  return t;
}

// Fixed random linear functional of y, so every output element matters.
V project(const V& y, std::uint64_t seed) {
  Rng rng(seed);
  Tn r(y.shape());
  for (double& v : r.values()) v = rng.normal();
  return sum(mul(y, V::leaf(r)));
}

using ParamFn = std::function<V(const ParamBinding<double>&, const std::vector<V>&)>;

// Checks fn with respect to both `xs` and every parameter of `layout`.
GradCheckReport check_with_params(const ParamLayout& layout, std::uint64_t seed, const std::vector<Tn>& xs,
                                  const ParamFn& fn, const GradCheckOptions& opt) {
  ParamStore<double> store(layout, seed);
  std::vector<Tn> inputs = xs;
  std::vector<std::string> names;
  for (auto& p : store) {
    // Perturb initial values so zero-initialized biases and unit gains
    // do not hide errors.
    Rng rng = Rng(seed).split(p.name);
    for (double& v : p.value.values()) v += 0.1 * rng.normal();
    inputs.push_back(p.value);
    names.push_back(p.name);
  }
  const std::size_t nx = xs.size();
  const std::uint64_t proj_seed = seed ^ 0xabcdefULL;
  auto f = [&](const std::vector<V>& vars) {
    std::vector<V> x(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(nx));
    std::vector<V> pv(vars.begin() + static_cast<std::ptrdiff_t>(nx), vars.end());
    return project(fn(ParamBinding<double>(names, pv), x), proj_seed);
  };
  return grad_check(f, inputs, opt);
}

GradCheckReport check_plain(const std::vector<Tn>& xs, const std::function<V(const std::vector<V>&)>& fn,
                            std::uint64_t seed, const GradCheckOptions& opt) {
  const std::uint64_t proj_seed = seed ^ 0x12345ULL;
  return grad_check([&](const std::vector<V>& v) { return project(fn(v), proj_seed); }, xs, opt);
}

ModelConfig stage_config() {
  ModelConfig c;
  c.channels = 8;
  c.bottleneck = 6;
  c.depth = 2;
  c.unfolds = 1;
  c.heads = 2;
  c.dropout = 0.0;
  return c;
}

}  // namespace

ModelConfig tiny_gradcheck_config() {
  ModelConfig c;
  c.channels = 16;
  c.bottleneck = 16;
  c.depth = 2;
  c.unfolds = 2;
  c.heads = 4;
  c.dropout = 0.0;
  return c;
}

std::vector<NamedCheck> layer_gradchecks(std::uint64_t seed, double tolerance) {
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  Rng rng = Rng(seed).split("gradcheck");
  std::vector<NamedCheck> out;
  auto add = [&](const std::string& name, GradCheckReport r) { out.push_back({name, tolerance, std::move(r)}); };

  auto conv_case = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, ConvSpec spec,
                       std::size_t t) {
    const Tn x = random_tensor({cin, t}, rng);
    const Tn w = random_tensor({cout, cin / spec.groups, k}, rng, 0.5);
    add(name, check_plain({x, w}, [spec](const std::vector<V>& v) { return conv1d(v[0], v[1], spec); }, seed, opt));
  };
  conv_case("conv1d", 3, 4, 3, {1, 1, 1, 1}, 11);
  conv_case("conv1d_strided_dilated", 2, 3, 5, {2, 2, 4, 1}, 16);
  conv_case("conv1d_depthwise", 4, 4, 5, {2, 2, 4, 4}, 16);
  conv_case("conv1d_encoder_stride", 1, 5, 8, {2, 1, 0, 1}, 30);
  {
    const Tn x = random_tensor({4, 7}, rng);
    const Tn w = random_tensor({4, 1, 8}, rng, 0.5);
    ConvSpec spec;
    spec.stride = 2;
    add("conv_transpose1d",
        check_plain({x, w}, [spec](const std::vector<V>& v) { return conv_transpose1d(v[0], v[1], spec); }, seed, opt));
    const Tn w2 = random_tensor({4, 2, 3}, rng, 0.5);
    ConvSpec spec2;
    spec2.stride = 2;
    spec2.padding = 1;
    spec2.groups = 2;
    add("conv_transpose1d_grouped", check_plain({x, w2}, [spec2](const std::vector<V>& v) {
          return conv_transpose1d(v[0], v[1], spec2, 1);
        }, seed, opt));
  }
  {
    ParamLayout l;
    add_pointwise(l, "pw", 3, 5, true);
    add("pointwise", check_with_params(l, seed, {random_tensor({3, 6}, rng)},
                                       [](const ParamBinding<double>& p, const std::vector<V>& x) {
                                         return pointwise(x[0], p, "pw");
                                       }, opt));
  }
  {
    ParamLayout l;
    add_gln(l, "norm", 4);
    add("gln", check_with_params(l, seed, {random_tensor({4, 9}, rng)},
                                 [](const ParamBinding<double>& p, const std::vector<V>& x) {
                                   return gln(x[0], p, "norm");
                                 }, opt));
  }
  {
    ParamLayout l;
    add_prelu(l, "act");
    add("prelu", check_with_params(l, seed, {random_tensor({3, 8}, rng)},
                                   [](const ParamBinding<double>& p, const std::vector<V>& x) {
                                     return prelu(x[0], p("act"));
                                   }, opt));
  }
  add("sigmoid", check_plain({random_tensor({3, 7}, rng, 2.0)}, [](const std::vector<V>& v) { return sigmoid(v[0]); },
                             seed, opt));
  add("relu", check_plain({random_tensor({3, 7}, rng)}, [](const std::vector<V>& v) { return relu(v[0]); }, seed, opt));
  add("avg_pool1d", check_plain({random_tensor({3, 16}, rng)},
                                [](const std::vector<V>& v) { return avg_pool1d(v[0], 4); }, seed, opt));
  add("nearest_interp1d", check_plain({random_tensor({3, 4}, rng)},
                                      [](const std::vector<V>& v) { return nearest_interp1d(v[0], 16); }, seed, opt));
  add("matmul", check_plain({random_tensor({4, 3}, rng), random_tensor({5, 4}, rng)},
                            [](const std::vector<V>& v) { return matmul(v[0], v[1], true, true); }, seed, opt));
  add("softmax_rows", check_plain({random_tensor({3, 6}, rng)},
                                  [](const std::vector<V>& v) { return softmax_rows(v[0]); }, seed, opt));
  add("channel_affine", check_plain({random_tensor({3, 5}, rng), random_tensor({3, 1}, rng), random_tensor({3, 1}, rng)},
                                    [](const std::vector<V>& v) { return add_channel(mul_channel(v[0], v[1]), v[2]); },
                                    seed, opt));
  add("concat_slice", check_plain({random_tensor({2, 5}, rng), random_tensor({3, 5}, rng)},
                                  [](const std::vector<V>& v) {
                                    return slice_cols(slice_rows(concat_rows(std::vector<V>{v[0], v[1]}), 1, 3), 1, 3);
                                  }, seed, opt));
  {
    ParamLayout l;
    add_mhsa(l, "attn", 8);
    AttentionOptions a;
    a.heads = 2;
    add("mhsa", check_with_params(l, seed, {random_tensor({8, 6}, rng)},
                                  [a](const ParamBinding<double>& p, const std::vector<V>& x) {
                                    return mhsa(x[0], p, "attn", a);
                                  }, opt));
  }
  {
    ParamLayout l;
    add_ffn(l, "ffn", 4);
    add("ffn", check_with_params(l, seed, {random_tensor({4, 8}, rng)},
                                 [](const ParamBinding<double>& p, const std::vector<V>& x) {
                                   return ffn(x[0], p, "ffn");
                                 }, opt));
  }

  // Model stages on a small configuration.
  const ModelConfig sc = stage_config();
  const TDANet<double> model(sc, seed);
  const ParamLayout layout = model_layout(sc);
  const std::size_t frames = 16;
  const std::size_t n = static_cast<std::size_t>(sc.channels);
  const std::size_t w = static_cast<std::size_t>(sc.bottleneck);
  {
    const std::size_t len = (frames - 1) * static_cast<std::size_t>(sc.stride_samples()) + sc.win_samples();
    add("audio_encoder", check_with_params(layout, seed, {random_tensor({1, len}, rng)},
                                           [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                             return model.audio_encode(x[0], p);
                                           }, opt));
  }
  add("bottleneck", check_with_params(layout, seed, {random_tensor({n, frames}, rng)},
                                      [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                        return model.bottleneck(x[0], p);
                                      }, opt));
  add("encoder_path", check_with_params(layout, seed, {random_tensor({w, frames}, rng)},
                                        [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                          ScaleLadder<double> l = model.encoder_path(x[0], p);
                                          return concat_rows(std::vector<V>{avg_pool1d(l[0], 4), avg_pool1d(l[1], 4),
                                                                            l[2]});
                                        }, opt));
  auto ladder_inputs = [&] {
    return std::vector<Tn>{random_tensor({n, frames}, rng), random_tensor({n, frames / 2}, rng),
                           random_tensor({n, frames / 4}, rng)};
  };
  add("ga_module", check_with_params(layout, seed, ladder_inputs(),
                                     [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                       ScaleLadder<double> l;
                                       l.levels = x;
                                       const V g = model.ga_transform(model.ga_fuse(l, p), p, {});
                                       ScaleLadder<double> m = model.ga_modulate(l, g);
                                       return concat_rows(std::vector<V>{avg_pool1d(m[0], 4), avg_pool1d(m[1], 4),
                                                                         m[2]});
                                     }, opt));
  add("la_decoder", check_with_params(layout, seed, ladder_inputs(),
                                      [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                        ScaleLadder<double> l;
                                        l.levels = x;
                                        return model.la_decode(l, x.back(), p);
                                      }, opt));
  add("mask_head", check_with_params(layout, seed, {random_tensor({w, frames}, rng)},
                                     [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                       return concat_rows(model.mask_head(x[0], p));
                                     }, opt));
  add("audio_decoder", check_with_params(layout, seed, {random_tensor({n, frames}, rng)},
                                         [&](const ParamBinding<double>& p, const std::vector<V>& x) {
                                           return model.audio_decode(x[0], p);
                                         }, opt));
  {
    const Tn t1 = random_tensor({1, 32}, rng), t2 = random_tensor({1, 32}, rng);
    add("si_snr", check_plain({random_tensor({1, 32}, rng)},
                              [&](const std::vector<V>& v) { return si_snr(v[0], t1); }, seed, opt));
    add("pit_loss", check_plain({random_tensor({1, 32}, rng), random_tensor({1, 32}, rng)},
                                [&](const std::vector<V>& v) {
                                  return pit_loss(std::vector<V>{v[0], v[1]}, std::vector<Tn>{t1, t2}).loss;
                                }, seed, opt));
  }
  return out;
}

NamedCheck full_model_gradcheck(const ModelConfig& config, std::size_t samples, std::uint64_t seed, double tolerance,
                                std::size_t max_elements_per_input) {
  GradCheckOptions opt;
  opt.tolerance = tolerance;
  opt.max_elements_per_input = max_elements_per_input;
  const TDANet<double> model(config, seed);
  Rng rng = Rng(seed).split("full");
  Tn wave({1, samples});
  std::vector<Tn> targets;
  for (int c = 0; c < config.speakers; ++c) targets.push_back(random_tensor({1, samples}, rng, 0.3));
  for (std::size_t i = 0; i < samples; ++i) {
    for (const auto& t : targets) wave[i] += t[i];
  }
  std::vector<Tn> inputs;
  std::vector<std::string> names;
  for (const auto& p : model.params()) {
    Tn v = p.value;
    Rng r = Rng(seed).split(p.name);
    for (double& x : v.values()) x += 0.05 * r.normal();
    inputs.push_back(std::move(v));
    names.push_back(p.name);
  }
  auto f = [&](const std::vector<V>& vars) {
    const ParamBinding<double> binding(names, vars);
    return pit_loss(model.forward(wave, binding), targets).loss;
  };
  return {"full_model", tolerance, grad_check(f, inputs, opt)};
}

}  // namespace tdanet
