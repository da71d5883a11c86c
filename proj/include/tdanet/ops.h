#pragma once

#include <cstdint>
#include <vector>

#include "tdanet/autograd.h"
#include "tdanet/rng.h"

namespace tdanet {

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
  int groups = 1;
};

// Output length of a strided, dilated, padded correlation.
std::size_t conv_output_length(std::size_t in_len, std::size_t kernel, const ConvSpec& spec);
std::size_t conv_transpose_output_length(std::size_t in_len, std::size_t kernel,
                                         const ConvSpec& spec, int output_padding);

// Multiply-accumulates executed by conv/matmul kernels on this thread.
std::uint64_t executed_macs();
void reset_executed_macs();

// Elementwise, same shape.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
// Sum of any number of same-shape tensors.
template <typename T> Var<T> add_n(const std::vector<Var<T>>& xs);

// Per-channel broadcast over time: x is C x T, v has C elements.
template <typename T> Var<T> add_channel(const Var<T>& x, const Var<T>& v);
template <typename T> Var<T> mul_channel(const Var<T>& x, const Var<T>& v);
// x times a 1-element tensor.
template <typename T> Var<T> mul_scalar(const Var<T>& x, const Var<T>& s);

template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
// Single learnable slope shared by all elements.
template <typename T> Var<T> prelu(const Var<T>& x, const Var<T>& slope);

// x: C_in x T, w: C_out x (C_in/groups) x K.
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec = {});
// x: C_in x T, w: C_in x (C_out/groups) x K. Adjoint of conv1d with the same w.
template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec = {},
                        int output_padding = 0);

template <typename T> Var<T> avg_pool1d(const Var<T>& x, std::size_t target_len);
template <typename T> Var<T> nearest_interp1d(const Var<T>& x, std::size_t target_len);

// Standardizes over all elements jointly (no affine).
template <typename T> Var<T> global_normalize(const Var<T>& x, T eps);

// C = op(A) * op(B) for rank-2 operands.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a = false, bool trans_b = false);
template <typename T> Var<T> softmax_rows(const Var<T>& x);
template <typename T> Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count);
template <typename T> Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& xs);

// Inverted dropout; identity when p == 0.
template <typename T> Var<T> dropout(const Var<T>& x, double p, Rng& rng);

// Reductions to a 1-element tensor.
template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> dot(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sum_squares(const Var<T>& x);
// Subtracts the global mean.
template <typename T> Var<T> center(const Var<T>& x);
// a / b for 1-element tensors.
template <typename T> Var<T> divide(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_constant(const Var<T>& a, T c);
// 10*log10(x) clamped to [lo_db, hi_db]; zero gradient where clamped.
template <typename T> Var<T> decibels_clamped(const Var<T>& x, T lo_db, T hi_db);

}  // namespace tdanet
