#include "tdanet/complexity.h"

#include <cmath>

#include "tdanet/tdanet.h"

namespace tdanet {

std::uint64_t count_params(const ModelConfig& config) { return model_layout(config).total_elements(); }

MacBreakdown count_mac_breakdown(const ModelConfig& c, double seconds) {
  c.validate();
  const auto samples = static_cast<std::size_t>(std::llround(seconds * c.sample_rate));
  const FramePlan plan = plan_frames(c, samples);
  const std::uint64_t N = c.channels, W = c.bottleneck, L = c.win_samples();
  const std::uint64_t frames = plan.frames;
  const std::uint64_t S = c.depth, C = c.speakers;

  MacBreakdown m;
  m.encoder = N * L * frames;
  m.bottleneck = W * N * frames;

  std::uint64_t block = W * N * frames;  // projection to N channels
  for (std::uint64_t i = 1; i <= S; ++i) block += N * 5 * (frames >> i);
  if (c.use_ga) {
    const std::uint64_t coarse = frames >> S;
    std::uint64_t ga = 0;
    if (c.ga_input == GaInput::kFused && c.fusion == Fusion::kConcat) ga += N * (S + 1) * N * coarse;
    if (c.use_transformer_layer) {
      if (c.use_mhsa) ga += 4 * N * N * coarse + 2 * coarse * coarse * N;
      if (c.use_ffn) ga += 2 * N * N * coarse + 2 * N * 5 * coarse + N * 2 * N * coarse;
    }
    m.ga_per_unfold = ga;
    block += ga;
  }
  if (c.use_la) {
    std::uint64_t la = 0;
    for (std::uint64_t i = 1; i <= S; ++i) la += 2 * N * 5 * (frames >> (i - 1));
    m.la_per_unfold = la;
    block += la;
  }
  block += N * W * frames;  // back to the bottleneck width
  m.block_per_unfold = block;
  m.blocks = block * static_cast<std::uint64_t>(c.unfolds);
  m.masks = C * N * W * frames;
  m.decoder = C * N * L * frames;
  m.total = m.encoder + m.bottleneck + m.blocks + m.masks + m.decoder;
  return m;
}

std::uint64_t count_macs(const ModelConfig& config, double seconds) {
  return count_mac_breakdown(config, seconds).total;
}

}  // namespace tdanet
