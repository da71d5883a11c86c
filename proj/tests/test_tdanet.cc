#include <doctest.h>

#include <filesystem>

#include "tdanet/checkpoint.h"
#include "tdanet/complexity.h"
#include "tdanet/error.h"
#include "tdanet/gradcheck_suite.h"
#include "tdanet/run_config.h"
#include "tdanet/tdanet.h"
#include "test_helpers.h"

using namespace tdanet;
using testing::constant;
using testing::random_tensor;

namespace {

ModelConfig small_config(int depth = 3) {
  ModelConfig c;
  c.channels = 8;
  c.bottleneck = 8;
  c.depth = depth;
  c.unfolds = 2;
  c.heads = 2;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("tdanet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

Tensor<float> wave(std::size_t t, std::uint64_t seed) { return random_tensor<float>({1, t}, seed, 0.3); }

}  // namespace

TEST_CASE("config defaults and derived sizes") {
  const ModelConfig c;
  CHECK(c.win_samples() == 64);
  CHECK(c.stride_samples() == 16);
  CHECK(c.frame_multiple() == 16);
  CHECK(ModelConfig::large().win_samples() == 32);
  CHECK(ModelConfig::large().stride_samples() == 8);
}

TEST_CASE("config validation and serialization") {
  ModelConfig c = small_config();
  CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK(ModelConfig::from_json(c.to_json()).hash() == c.hash());
  nlohmann::json j = c.to_json();
  j["nonsense"] = 1;
  CHECK_THROWS_AS(ModelConfig::from_json(j), ConfigError);
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig{}.with_ablations("no_such_thing"), ConfigError);
  const ModelConfig a = ModelConfig{}.with_ablations("no_ga,no_la");
  CHECK_FALSE(a.use_ga);
  CHECK_FALSE(a.use_la);
  CHECK(ModelConfig{}.with_ablations("concat").fusion == Fusion::kConcat);
  CHECK(ModelConfig{}.with_ablations("top_f").ga_input == GaInput::kTop);
}

TEST_CASE("frame plan for one second of audio") {
  const FramePlan p = plan_frames(ModelConfig{}, 16000);
  CHECK(p.frames == 1008);
  CHECK(p.padded_len == (1008 - 1) * 16 + 64);
  CHECK(p.left_pad == (p.padded_len - 16000) / 2);
  CHECK_THROWS_AS(plan_frames(ModelConfig{}, 63), InputError);
  for (std::size_t t : {64u, 100u, 1600u, 16001u, 31999u}) {
    const FramePlan q = plan_frames(ModelConfig{}, t);
    CHECK(q.frames % 16 == 0);
    CHECK(q.padded_len >= t);
    CHECK(q.padded_len - t < 16 * 16 + 64);
  }
}

TEST_CASE("zero waveform encodes to zero") {
  const TDANet<float> m(small_config(), 1);
  const Tensor<float> padded = m.pad_waveform(Tensor<float>({1, 800}, 0.0f));
  const auto e = m.audio_encode(constant(padded), m.params().bind_constant()).value();
  for (float v : e.values()) CHECK(v == 0.0f);
  CHECK(e.dim(0) == 8);
  CHECK(e.dim(1) == plan_frames(small_config(), 800).frames);
}

TEST_CASE("scale ladder lengths halve exactly") {
  ModelConfig c = small_config(4);
  const TDANet<float> m(c, 2);
  const auto ladder = m.encoder_path(constant(random_tensor<float>({8, 1008}, 3)), m.params().bind_constant());
  REQUIRE(ladder.size() == 5);
  const std::size_t expect[] = {1008, 504, 252, 126, 63};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(ladder[i].shape() == Shape{8, expect[i]});
  }
  for (std::size_t t : {16u, 32u}) {
    const auto l = m.encoder_path(constant(random_tensor<float>({8, t}, 4)), m.params().bind_constant());
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(l[i].shape()[1] == t >> i);
  }
  CHECK_THROWS_AS(m.encoder_path(constant(random_tensor<float>({8, 40}, 5)), m.params().bind_constant()), StateError);
  const TDANet<float> one(small_config(1), 2);
  CHECK(one.encoder_path(constant(random_tensor<float>({8, 16}, 6)), one.params().bind_constant()).size() == 2);
}

TEST_CASE("global attention fusion") {
  ModelConfig c = small_config(1);
  const TDANet<double> m(c, 3);
  const auto p = m.params().bind_constant();
  ScaleLadder<double> zeros;
  zeros.levels = {constant(Tensor<double>({8, 16}, 0.0)), constant(Tensor<double>({8, 8}, 0.0))};
  const auto fused_zero = m.ga_fuse(zeros, p);
  for (double v : fused_zero.value().values()) CHECK(v == 0.0);

  ScaleLadder<double> constant_ladder;
  Tensor<double> f1({8, 16}), f2({8, 8});
  for (std::size_t ch = 0; ch < 8; ++ch) {
    for (std::size_t t = 0; t < 16; ++t) f1.at(ch, t) = 0.5 * static_cast<double>(ch);
    for (std::size_t t = 0; t < 8; ++t) f2.at(ch, t) = 0.5 * static_cast<double>(ch);
  }
  constant_ladder.levels = {constant(f1), constant(f2)};
  const auto g = m.ga_fuse(constant_ladder, p).value();
  CHECK(g.shape() == Shape{8, 8});
  for (std::size_t ch = 0; ch < 8; ++ch) {
    for (std::size_t t = 0; t < 8; ++t) CHECK(g.at(ch, t) == doctest::Approx(1.0 * static_cast<double>(ch)));
  }
  c.ga_input = GaInput::kTop;
  const TDANet<double> top(c, 3);
  CHECK(top.ga_fuse(constant_ladder, top.params().bind_constant()).value() == f2);
  const TDANet<double> cat(small_config(1).with_ablations("concat"), 3);
  CHECK(cat.ga_fuse(constant_ladder, cat.params().bind_constant()).shape() == Shape{8, 8});
}

TEST_CASE("transformer layer with both sublayers off is the identity") {
  ModelConfig c = small_config();
  c.use_mhsa = false;
  c.use_ffn = false;
  const TDANet<double> m(c, 4);
  const auto x = random_tensor<double>({8, 4}, 5);
  CHECK(m.ga_transform(constant(x), m.params().bind_constant(), {}).value() == x);
}

TEST_CASE("top-down modulation gates every level with sigmoid") {
  const TDANet<double> m(small_config(1), 5);
  ScaleLadder<double> l;
  const auto f1 = random_tensor<double>({8, 16}, 6), f2 = random_tensor<double>({8, 8}, 7);
  l.levels = {constant(f1), constant(f2)};
  const auto half = m.ga_modulate(l, constant(Tensor<double>({8, 8}, 0.0)));
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(half[0].value()[i] == doctest::Approx(0.5 * f1[i]));
  for (std::size_t i = 0; i < f2.size(); ++i) CHECK(half[1].value()[i] == doctest::Approx(0.5 * f2[i]));
  const auto full = m.ga_modulate(l, constant(Tensor<double>({8, 8}, 50.0)));
  for (std::size_t i = 0; i < f1.size(); ++i) CHECK(full[0].value()[i] == doctest::Approx(f1[i]).epsilon(1e-12));
}

TEST_CASE("local attention decoder") {
  ModelConfig c = small_config(2);
  TDANet<double> m(c, 6);
  for (auto& prm : m.params()) {
    if (prm.name.find(".gate.") != std::string::npos || prm.name.find(".shift.") != std::string::npos) {
      if (prm.name.find("gain") == std::string::npos) prm.value.fill(0.0);
    }
  }
  ScaleLadder<double> l;
  const auto f1 = random_tensor<double>({8, 16}, 7);
  l.levels = {constant(f1), constant(random_tensor<double>({8, 8}, 8)), constant(random_tensor<double>({8, 4}, 9))};
  const auto d = m.la_decode(l, l.levels.back(), m.params().bind_constant()).value();
  CHECK(d.shape() == Shape{8, 16});
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(0.5 * f1[i]));

  c.use_la = false;
  const TDANet<double> off(c, 6);
  Tensor<double> top({8, 4});
  for (std::size_t i = 0; i < top.size(); ++i) top[i] = static_cast<double>(i % 5);
  ScaleLadder<double> z;
  z.levels = {constant(Tensor<double>({8, 16}, 0.0)), constant(Tensor<double>({8, 8}, 0.0)), constant(top)};
  const auto up = off.la_decode(z, z.levels.back(), off.params().bind_constant()).value();
  for (std::size_t ch = 0; ch < 8; ++ch) {
    for (std::size_t t = 0; t < 16; ++t) CHECK(up.at(ch, t) == top.at(ch, t / 4));
  }
}

TEST_CASE("unfolding shares weights") {
  ModelConfig c = small_config();
  c.unfolds = 1;
  const TDANet<float> one(c, 7);
  const auto x = random_tensor<float>({8, 32}, 8);
  const auto p = one.params().bind_constant();
  CHECK(one.unfold(constant(x), p, {}).value() == one.block(constant(x), p, {}).value());
  ModelConfig c3 = c;
  c3.unfolds = 3;
  CHECK(count_params(c) == count_params(c3));
  CHECK(model_layout(c).specs().size() == model_layout(c3).specs().size());
  const TDANet<float> three(c3, 7);
  const auto r0 = three.block(constant(x), p, {});
  const auto r1 = three.block(add(constant(x), r0), p, {});
  const auto r2 = three.block(add(constant(x), r1), p, {});
  CHECK(three.unfold(constant(x), p, {}).value() == r2.value());
}

TEST_CASE("mask head") {
  ModelConfig c = small_config();
  TDANet<float> m(c, 8);
  const auto masks = m.mask_head(constant(random_tensor<float>({8, 32}, 9)), m.params().bind_constant());
  REQUIRE(masks.size() == 2);
  for (const auto& mk : masks) {
    CHECK(mk.shape() == Shape{8, 32});
    for (float v : mk.value().values()) CHECK(v >= 0.0f);
  }
  m.params().get("mask1.bias").value.fill(0.0f);
  const auto zero = m.mask_head(constant(Tensor<float>({8, 32}, 0.0f)), m.params().bind_constant());
  for (float v : zero[0].value().values()) CHECK(v == 0.0f);
  c.speakers = 3;
  const TDANet<float> three(c, 8);
  CHECK(three.separate(wave(1600, 1)).size() == 3);
}

TEST_CASE("separation with fixed masks") {
  TDANet<float> m(small_config(), 9);
  for (const char* n : {"mask1.weight", "mask2.weight"}) m.params().get(n).value.fill(0.0f);
  m.params().get("mask1.bias").value.fill(1.0f);
  m.params().get("mask2.bias").value.fill(1.0f);
  m.params().get("decoder.bias").value.fill(0.125f);
  const auto x = wave(1600, 2);
  auto out = m.separate(x);
  CHECK(out[0] == out[1]);
  // Reference: decode the unmasked embedding directly.
  const auto p = m.params().bind_constant();
  const FramePlan plan = plan_frames(m.config(), 1600);
  const auto e = m.audio_encode(constant(m.pad_waveform(x)), p);
  const auto d = m.audio_decode(e, p).value();
  for (std::size_t t = 0; t < 1600; ++t) CHECK(out[0][t] == doctest::Approx(d[plan.left_pad + t]).epsilon(1e-6));

  m.params().get("mask2.bias").value.fill(0.0f);
  out = m.separate(x);
  for (float v : out[1].values()) CHECK(v == 0.125f);
}

TEST_CASE("separate returns C waveforms of the input length") {
  const TDANet<float> m(desk_config(), 10);
  for (std::size_t t : {1600u, 16000u, 16001u, 31999u}) {
    const auto out = m.separate(wave(t, t));
    REQUIRE(out.size() == 2);
    for (const auto& o : out) CHECK(o.shape() == Shape{1, t});
  }
  CHECK_THROWS_AS(m.separate(wave(1600, 1), 8000), InputError);
  CHECK_THROWS_AS(m.separate(wave(40, 1)), InputError);
}

TEST_CASE("construction is deterministic per seed") {
  const TDANet<float> a(small_config(), 11), b(small_config(), 11), c(small_config(), 12);
  const auto x = wave(1600, 3);
  CHECK(a.separate(x)[0] == b.separate(x)[0]);
  CHECK_FALSE(a.separate(x)[0] == c.separate(x)[0]);
}

TEST_CASE("executed MACs match the analytic count") {
  for (const char* ablation : {"", "no_ga", "no_la", "concat", "no_mhsa"}) {
    const ModelConfig c = desk_config().with_ablations(ablation);
    const TDANet<float> m(c, 12);
    reset_executed_macs();
    m.separate(wave(16000, 4));
    INFO(ablation);
    CHECK(executed_macs() == count_macs(c, 1.0));
  }
}

TEST_CASE("complexity counts") {
  const ModelConfig base;
  const auto with_ga = count_params(base), no_ga = count_params(base.with_ablations("no_ga"));
  CHECK(with_ga > no_ga);
  CHECK(count_params(base) == model_layout(base).total_elements());
  ModelConfig b1 = base, b16 = base;
  b1.unfolds = 1;
  b16.unfolds = 16;
  const MacBreakdown m1 = count_mac_breakdown(b1), m16 = count_mac_breakdown(b16);
  CHECK(m16.blocks == 16 * m1.blocks);
  CHECK(m16.encoder == m1.encoder);
  CHECK(m16.decoder == m1.decoder);
  CHECK(m1.total == m1.encoder + m1.bottleneck + m1.blocks + m1.masks + m1.decoder);
  CHECK(count_macs(base, 2.0) > count_macs(base, 1.0));
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto dir = temp_dir("ckpt");
  const TDANet<float> m(small_config(), 13);
  save_checkpoint(dir / "m.json", m, {{"note", "x"}});
  const Checkpoint ck = load_checkpoint(dir / "m.json");
  CHECK(ck.config.to_json() == m.config().to_json());
  CHECK(ck.params.seed() == 13);
  CHECK(ck.extra["note"] == "x");
  REQUIRE(ck.params.size() == m.params().size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(ck.params[i].name == m.params()[i].name);
    CHECK(ck.params[i].value == m.params()[i].value);
  }
  const TDANet<float> back = load_model(dir / "m.json");
  const auto x = wave(1600, 5);
  CHECK(back.separate(x)[1] == m.separate(x)[1]);
}

TEST_CASE("serialized size does not depend on the number of unfolds") {
  const auto dir = temp_dir("ckpt_b");
  std::uintmax_t sizes[3];
  int i = 0;
  for (int b : {1, 8, 16}) {
    ModelConfig c = desk_config();
    c.unfolds = b;
    save_checkpoint(dir / ("b" + std::to_string(b) + ".json"), TDANet<float>(c, 1));
    sizes[i++] = std::filesystem::file_size(binary_path(dir / ("b" + std::to_string(b) + ".json")));
  }
  CHECK(sizes[0] == sizes[1]);
  CHECK(sizes[1] == sizes[2]);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto dir = temp_dir("ckpt_bad");
  save_checkpoint(dir / "m.json", TDANet<float>(small_config(), 1));
  std::filesystem::resize_file(binary_path(dir / "m.json"), 16);
  CHECK_THROWS_AS(load_checkpoint(dir / "m.json"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), FileError);
  ParamStore<float> wrong(model_layout(small_config(2)), 1);
  CHECK_THROWS_AS(TDANet<float>(small_config(3), std::move(wrong)), ConfigError);
}

TEST_CASE("full tiny model passes the finite-difference check") {
  const NamedCheck c = full_model_gradcheck(tiny_gradcheck_config(), 512, 2);
  INFO(c.report.summary());
  CHECK(c.passed());
  CHECK(c.report.max_rel_error < 1e-3);
}
