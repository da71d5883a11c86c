#include "tdanet/tdanet.h"

namespace tdanet {

namespace {

std::string level_name(const char* kind, int i) { return std::string("block.") + kind + std::to_string(i); }

ConvSpec downsample_spec(int channels) {
  ConvSpec s;
  s.stride = 2;
  s.dilation = 2;
  s.padding = 4;  // halves even lengths exactly for K=5, dilation 2
  s.groups = channels;
  return s;
}

ConvSpec same_depthwise(int channels) {
  ConvSpec s;
  s.padding = 2;
  s.groups = channels;
  return s;
}

}  // namespace

FramePlan plan_frames(const ModelConfig& config, std::size_t input_len) {
  const std::size_t L = static_cast<std::size_t>(config.win_samples());
  const std::size_t stride = static_cast<std::size_t>(config.stride_samples());
  if (input_len < L) {
    throw InputError("audio of " + std::to_string(input_len) + " samples is shorter than one " +
                     std::to_string(L) + "-sample encoder window");
  }
  const std::size_t needed = (input_len - L + stride - 1) / stride + 1;
  const std::size_t multiple = static_cast<std::size_t>(config.frame_multiple());
  FramePlan plan;
  plan.input_len = input_len;
  plan.frames = (needed + multiple - 1) / multiple * multiple;
  plan.padded_len = (plan.frames - 1) * stride + L;
  plan.left_pad = (plan.padded_len - input_len) / 2;
  return plan;
}

ParamLayout model_layout(const ModelConfig& c) {
  c.validate();
  const std::size_t N = c.channels, W = c.bottleneck;
  const std::size_t L = c.win_samples();
  ParamLayout layout;
  layout.add("encoder.weight", {N, 1, L}, Init::kFanIn);
  add_pointwise(layout, "bottleneck", N, W, true);
  add_gln(layout, "bottleneck.norm", W);

  add_pointwise(layout, "block.proj", W, N, true);
  add_gln(layout, "block.proj.norm", N);
  add_prelu(layout, "block.proj.prelu");
  for (int i = 1; i <= c.depth; ++i) {
    const std::string d = level_name("down", i);
    add_depthwise(layout, d, N, 5, false);
    add_gln(layout, d + ".norm", N);
    add_prelu(layout, d + ".prelu");
  }
  if (c.use_ga) {
    if (c.ga_input == GaInput::kFused && c.fusion == Fusion::kConcat) {
      add_pointwise(layout, "block.ga.concat", (c.depth + 1) * N, N, true);
    }
    if (c.use_transformer_layer) {
      if (c.use_mhsa) add_mhsa(layout, "block.ga.mhsa", N);
      if (c.use_ffn) add_ffn(layout, "block.ga.ffn", N);
    }
  }
  if (c.use_la) {
    for (int i = 1; i <= c.depth; ++i) {
      const std::string la = level_name("la", i);
      add_depthwise(layout, la + ".gate", N, 5, false);
      add_gln(layout, la + ".gate.norm", N);
      add_depthwise(layout, la + ".shift", N, 5, false);
      add_gln(layout, la + ".shift.norm", N);
    }
  }
  add_pointwise(layout, "block.res", N, W, true);
  for (int s = 1; s <= c.speakers; ++s) add_pointwise(layout, "mask" + std::to_string(s), W, N, true);
  layout.add("decoder.weight", {N, 1, L}, Init::kFanIn);
  layout.add("decoder.bias", {1, 1}, Init::kZeros);
  return layout;
}

template <typename T>
TDANet<T>::TDANet(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(model_layout(config_), seed) {}

template <typename T>
TDANet<T>::TDANet(ModelConfig config, ParamStore<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  const ParamLayout layout = model_layout(config_);
  if (layout.specs().size() != params_.size()) {
    throw ConfigError("parameter store has " + std::to_string(params_.size()) +
                      " tensors, config expects " + std::to_string(layout.specs().size()));
  }
  for (const auto& spec : layout.specs()) {
    if (!params_.contains(spec.name)) throw ConfigError("parameter store lacks " + spec.name);
    require_same_shape(params_.get(spec.name).value.shape(), spec.shape, spec.name.c_str());
  }
}

template <typename T>
DropoutContext TDANet<T>::dropout_for(const ForwardOptions& opt) const {
  DropoutContext ctx;
  if (opt.training && opt.dropout_rng) {
    ctx.p = config_.dropout;
    ctx.rng = opt.dropout_rng;
  }
  return ctx;
}

template <typename T>
Tensor<T> TDANet<T>::pad_waveform(const Tensor<T>& wave) const {
  if (wave.rank() != 2 || wave.rows() != 1) {
    throw InputError("expected a mono 1 x T waveform, got " + shape_to_string(wave.shape()));
  }
  const FramePlan plan = plan_frames(config_, wave.cols());
  Tensor<T> padded({1, plan.padded_len});
  std::copy(wave.data(), wave.data() + wave.size(), padded.data() + plan.left_pad);
  return padded;
}

template <typename T>
Var<T> TDANet<T>::audio_encode(const Var<T>& padded_wave, const ParamBinding<T>& p) const {
  ConvSpec spec;
  spec.stride = config_.stride_samples();
  return relu(conv1d(padded_wave, p("encoder.weight"), spec));
}

template <typename T>
Var<T> TDANet<T>::bottleneck(const Var<T>& embedding, const ParamBinding<T>& p) const {
  return gln(pointwise(embedding, p, "bottleneck"), p, "bottleneck.norm");
}

template <typename T>
ScaleLadder<T> TDANet<T>::encoder_path(const Var<T>& x, const ParamBinding<T>& p) const {
  const std::size_t frames = x.shape()[1];
  if (frames % static_cast<std::size_t>(config_.frame_multiple()) != 0) {
    throw StateError("encoder_path: length " + std::to_string(frames) + " not divisible by 2^S");
  }
  ScaleLadder<T> ladder;
  Var<T> f = prelu(gln(pointwise(x, p, "block.proj"), p, "block.proj.norm"), p("block.proj.prelu"));
  ladder.levels.push_back(f);
  for (int i = 1; i <= config_.depth; ++i) {
    const std::string d = level_name("down", i);
    f = conv1d(f, p(d + ".weight"), downsample_spec(config_.channels));
    f = prelu(gln(f, p, d + ".norm"), p(d + ".prelu"));
    ladder.levels.push_back(f);
  }
  return ladder;
}

template <typename T>
Var<T> TDANet<T>::ga_fuse(const ScaleLadder<T>& ladder, const ParamBinding<T>& p) const {
  const Var<T>& top = ladder.levels.back();
  if (config_.ga_input == GaInput::kTop) return top;
  const std::size_t coarse = top.shape()[1];
  std::vector<Var<T>> pooled;
  pooled.reserve(ladder.size());
  for (const auto& f : ladder.levels) pooled.push_back(avg_pool1d(f, coarse));
  if (config_.fusion == Fusion::kSum) return add_n(pooled);
  return pointwise(concat_rows(pooled), p, "block.ga.concat");
}

template <typename T>
Var<T> TDANet<T>::ga_transform(const Var<T>& global, const ParamBinding<T>& p,
                               const ForwardOptions& opt) const {
  if (!config_.use_transformer_layer) return global;
  const DropoutContext drop = dropout_for(opt);
  Var<T> g = global;
  if (config_.use_mhsa) {
    AttentionOptions attn;
    attn.heads = static_cast<std::size_t>(config_.heads);
    attn.dropout = drop;
    g = mhsa(g, p, "block.ga.mhsa", attn);
  }
  if (config_.use_ffn) g = ffn(g, p, "block.ga.ffn", drop);
  return g;
}

template <typename T>
ScaleLadder<T> TDANet<T>::ga_modulate(const ScaleLadder<T>& ladder, const Var<T>& global_m) const {
  ScaleLadder<T> out;
  out.levels.reserve(ladder.size());
  for (const auto& f : ladder.levels) {
    out.levels.push_back(mul(sigmoid(nearest_interp1d(global_m, f.shape()[1])), f));
  }
  return out;
}

template <typename T>
Var<T> TDANet<T>::la_decode(const ScaleLadder<T>& modulated, const Var<T>& top,
                            const ParamBinding<T>& p) const {
  Var<T> d = top;
  const int channels = config_.channels;
  for (int i = config_.depth; i >= 1; --i) {
    const Var<T>& lateral = modulated[static_cast<std::size_t>(i - 1)];
    const Var<T> up = nearest_interp1d(d, lateral.shape()[1]);
    if (config_.use_la) {
      const std::string la = level_name("la", i);
      const Var<T> gate =
          sigmoid(gln(conv1d(up, p(la + ".gate.weight"), same_depthwise(channels)), p, la + ".gate.norm"));
      const Var<T> shift =
          gln(conv1d(up, p(la + ".shift.weight"), same_depthwise(channels)), p, la + ".shift.norm");
      d = add(mul(gate, lateral), shift);
    } else {
      d = add(up, lateral);
    }
  }
  return d;
}

template <typename T>
Var<T> TDANet<T>::block(const Var<T>& x, const ParamBinding<T>& p, const ForwardOptions& opt) const {
  ScaleLadder<T> ladder = encoder_path(x, p);
  Var<T> top = ladder.levels.back();
  if (config_.use_ga) {
    const Var<T> global_m = ga_transform(ga_fuse(ladder, p), p, opt);
    if (config_.ga_topdown) {
      ladder = ga_modulate(ladder, global_m);
      top = ladder.levels.back();
    } else {
      top = global_m;
    }
  }
  return pointwise(la_decode(ladder, top, p), p, "block.res");
}

template <typename T>
Var<T> TDANet<T>::unfold(const Var<T>& x, const ParamBinding<T>& p, const ForwardOptions& opt) const {
  Var<T> r = block(x, p, opt);
  for (int b = 1; b < config_.unfolds; ++b) r = block(add(x, r), p, opt);
  return r;
}

template <typename T>
std::vector<Var<T>> TDANet<T>::mask_head(const Var<T>& r, const ParamBinding<T>& p) const {
  std::vector<Var<T>> masks;
  for (int s = 1; s <= config_.speakers; ++s) masks.push_back(relu(pointwise(r, p, "mask" + std::to_string(s))));
  return masks;
}

template <typename T>
Var<T> TDANet<T>::audio_decode(const Var<T>& embedding, const ParamBinding<T>& p) const {
  ConvSpec spec;
  spec.stride = config_.stride_samples();
  return add_channel(conv_transpose1d(embedding, p("decoder.weight"), spec), p("decoder.bias"));
}

template <typename T>
std::vector<Var<T>> TDANet<T>::forward_masks(const Tensor<T>& wave, const ParamBinding<T>& p,
                                             const ForwardOptions& opt, Var<T>* embedding) const {
  const Var<T> e = audio_encode(Var<T>::leaf(pad_waveform(wave)), p);
  if (embedding) *embedding = e;
  return mask_head(unfold(bottleneck(e, p), p, opt), p);
}

template <typename T>
std::vector<Var<T>> TDANet<T>::forward(const Tensor<T>& wave, const ParamBinding<T>& p,
                                       const ForwardOptions& opt) const {
  const FramePlan plan = plan_frames(config_, wave.cols());
  Var<T> e;
  const std::vector<Var<T>> masks = forward_masks(wave, p, opt, &e);
  std::vector<Var<T>> outputs;
  outputs.reserve(masks.size());
  for (const auto& m : masks) {
    outputs.push_back(slice_cols(audio_decode(mul(e, m), p), plan.left_pad, plan.input_len));
  }
  return outputs;
}

template <typename T>
std::vector<Tensor<T>> TDANet<T>::separate(const Tensor<T>& wave, int sample_rate) const {
  if (sample_rate != config_.sample_rate) {
    throw InputError("sample rate " + std::to_string(sample_rate) + " Hz does not match model rate " +
                     std::to_string(config_.sample_rate) + " Hz");
  }
  NoGradGuard no_grad;
  const ParamBinding<T> p = params_.bind_constant();
  std::vector<Tensor<T>> out;
  for (auto& v : forward(wave, p)) out.push_back(v.value());
  return out;
}

template class TDANet<float>;
template class TDANet<double>;

}  // namespace tdanet
