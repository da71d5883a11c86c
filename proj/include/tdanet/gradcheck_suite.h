#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdanet/config.h"
#include "tdanet/gradcheck.h"

namespace tdanet {

struct NamedCheck {
  std::string name;
  double tolerance = 0.0;
  GradCheckReport report;
  bool passed() const { return report.passed; }
};

// One check per layer type and model stage, at 64-bit precision.
std::vector<NamedCheck> layer_gradchecks(std::uint64_t seed = 1, double tolerance = 1e-4);

// N=16, S=2, B=2 model used for the full-network check.
ModelConfig tiny_gradcheck_config();

// Whole pipeline (waveform -> PIT loss) on a T-sample input; probes at most
// `max_elements_per_input` entries of every parameter (0: all).
NamedCheck full_model_gradcheck(const ModelConfig& config, std::size_t samples = 512, std::uint64_t seed = 1,
                                double tolerance = 1e-3, std::size_t max_elements_per_input = 16);

}  // namespace tdanet
