#pragma once

#include <cstdint>

#include "tdanet/config.h"

namespace tdanet {

// Multiply-accumulate counts by stage. One MAC per multiply in convolution
// inner loops; attention adds Q/K/V/O projections plus the QK^T and AV
// products. Normalizations, activations, pooling and masking are free.
struct MacBreakdown {
  std::uint64_t encoder = 0;
  std::uint64_t bottleneck = 0;
  std::uint64_t block_per_unfold = 0;
  std::uint64_t ga_per_unfold = 0;  // included in block_per_unfold
  std::uint64_t la_per_unfold = 0;  // included in block_per_unfold
  std::uint64_t blocks = 0;         // block_per_unfold * B
  std::uint64_t masks = 0;
  std::uint64_t decoder = 0;        // all C decoder applications
  std::uint64_t total = 0;
};

std::uint64_t count_params(const ModelConfig& config);
MacBreakdown count_mac_breakdown(const ModelConfig& config, double seconds = 1.0);
// MACs to process `seconds` of audio at the configured sample rate.
std::uint64_t count_macs(const ModelConfig& config, double seconds = 1.0);

}  // namespace tdanet
