#pragma once

#include <span>
#include <vector>

#include "tdanet/autograd.h"

namespace tdanet {

inline constexpr double kSiSnrClampDb = 60.0;

struct SiSnrOptions {
  bool zero_mean = true;
  double clamp_db = kSiSnrClampDb;
  // Floor for ||target||^2 in the projection, and for the residual energy
  // relative to the estimate energy.
  double eps = 1e-8;
};

// Orthogonal decomposition estimate = a_target + e_noise.
struct SiSnrTerms {
  std::vector<double> a_target;
  std::vector<double> e_noise;
  double value_db = 0.0;
};

template <typename T>
SiSnrTerms si_snr_terms(std::span<const T> estimate, std::span<const T> target,
                        const SiSnrOptions& options = {});
template <typename T>
double si_snr(std::span<const T> estimate, std::span<const T> target, const SiSnrOptions& options = {});

// Differentiable SI-SNR (dB) of a graph estimate against a constant target.
template <typename T>
Var<T> si_snr(const Var<T>& estimate, const Tensor<T>& target, const SiSnrOptions& options = {});

template <typename T>
struct PitLoss {
  Var<T> loss;                    // -mean SI-SNR under the best permutation
  std::vector<std::size_t> perm;  // estimate i is paired with target perm[i]
};

// Exhaustive permutation search (C <= 4); ties keep the first permutation
// in lexicographic order.
template <typename T>
PitLoss<T> pit_loss(const std::vector<Var<T>>& estimates, const std::vector<Tensor<T>>& targets,
                    const SiSnrOptions& options = {});

struct PitResult {
  double loss = 0.0;
  std::vector<std::size_t> perm;
};

// Same search on plain signals. pairwise[i][j] = si_snr(est_i, tgt_j).
PitResult best_permutation(const std::vector<std::vector<double>>& pairwise);

}  // namespace tdanet
