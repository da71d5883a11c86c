#include "tdanet/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tdanet {

namespace {

thread_local std::uint64_t t_macs = 0;

template <typename T>
Tensor<T>& grad_of(Node<T>& self, std::size_t i) {
  return self.inputs[i]->grad_buffer();
}

template <typename T>
bool wants(Node<T>& self, std::size_t i) {
  return self.inputs[i]->requires_grad;
}

void check_spec(const ConvSpec& s) {
  if (s.stride <= 0 || s.dilation <= 0) {
    throw ConfigError("conv: stride and dilation must be positive (stride=" +
                      std::to_string(s.stride) + ", dilation=" + std::to_string(s.dilation) + ")");
  }
  if (s.padding < 0 || s.groups <= 0) throw ConfigError("conv: invalid padding or groups");
}

// Range of output frames t with 0 <= t*stride + offset < in_len.
inline void valid_range(long in_len, long out_len, long stride, long offset, long& lo, long& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  long last = in_len - 1 - offset;
  hi = last < 0 ? 0 : std::min(out_len, last / stride + 1);
  if (lo > hi) lo = hi;
}

struct ConvGeom {
  long c_in, c_out, in_len, out_len, kernel, cin_g, cout_g;
  ConvSpec spec;
};

// out[oc][t] += w[oc][icl][k] * x[ic][t*s + k*d - p]
template <typename T>
void conv_forward_kernel(const ConvGeom& g, const T* x, const T* w, T* out) {
  const long s = g.spec.stride, d = g.spec.dilation, p = g.spec.padding;
  for (long grp = 0; grp < g.spec.groups; ++grp) {
    for (long ocl = 0; ocl < g.cout_g; ++ocl) {
      const long oc = grp * g.cout_g + ocl;
      T* orow = out + oc * g.out_len;
      for (long icl = 0; icl < g.cin_g; ++icl) {
        const long ic = grp * g.cin_g + icl;
        const T* xrow = x + ic * g.in_len;
        const T* wrow = w + (oc * g.cin_g + icl) * g.kernel;
        for (long k = 0; k < g.kernel; ++k) {
          const T wv = wrow[k];
          const long off = k * d - p;
          long lo, hi;
          valid_range(g.in_len, g.out_len, s, off, lo, hi);
          if (s == 1) {
            for (long t = lo; t < hi; ++t) orow[t] += wv * xrow[t + off];
          } else {
            for (long t = lo; t < hi; ++t) orow[t] += wv * xrow[t * s + off];
          }
        }
      }
    }
  }
  t_macs += static_cast<std::uint64_t>(g.c_out) * g.cin_g * g.kernel * g.out_len;
}

// dx[ic][t*s + off] += w * dy[oc][t]  (also the transposed-conv forward)
template <typename T>
void conv_input_grad_kernel(const ConvGeom& g, const T* dy, const T* w, T* dx) {
  const long s = g.spec.stride, d = g.spec.dilation, p = g.spec.padding;
  for (long grp = 0; grp < g.spec.groups; ++grp) {
    for (long ocl = 0; ocl < g.cout_g; ++ocl) {
      const long oc = grp * g.cout_g + ocl;
      const T* dyrow = dy + oc * g.out_len;
      for (long icl = 0; icl < g.cin_g; ++icl) {
        const long ic = grp * g.cin_g + icl;
        T* dxrow = dx + ic * g.in_len;
        const T* wrow = w + (oc * g.cin_g + icl) * g.kernel;
        for (long k = 0; k < g.kernel; ++k) {
          const T wv = wrow[k];
          const long off = k * d - p;
          long lo, hi;
          valid_range(g.in_len, g.out_len, s, off, lo, hi);
          if (s == 1) {
            for (long t = lo; t < hi; ++t) dxrow[t + off] += wv * dyrow[t];
          } else {
            for (long t = lo; t < hi; ++t) dxrow[t * s + off] += wv * dyrow[t];
          }
        }
      }
    }
  }
  t_macs += static_cast<std::uint64_t>(g.c_out) * g.cin_g * g.kernel * g.out_len;
}

template <typename T>
void conv_weight_grad_kernel(const ConvGeom& g, const T* dy, const T* x, T* dw) {
  const long s = g.spec.stride, d = g.spec.dilation, p = g.spec.padding;
  for (long grp = 0; grp < g.spec.groups; ++grp) {
    for (long ocl = 0; ocl < g.cout_g; ++ocl) {
      const long oc = grp * g.cout_g + ocl;
      const T* dyrow = dy + oc * g.out_len;
      for (long icl = 0; icl < g.cin_g; ++icl) {
        const long ic = grp * g.cin_g + icl;
        const T* xrow = x + ic * g.in_len;
        T* dwrow = dw + (oc * g.cin_g + icl) * g.kernel;
        for (long k = 0; k < g.kernel; ++k) {
          const long off = k * d - p;
          long lo, hi;
          valid_range(g.in_len, g.out_len, s, off, lo, hi);
          T acc = 0;
          if (s == 1) {
            for (long t = lo; t < hi; ++t) acc += dyrow[t] * xrow[t + off];
          } else {
            for (long t = lo; t < hi; ++t) acc += dyrow[t] * xrow[t * s + off];
          }
          dwrow[k] += acc;
        }
      }
    }
  }
}

// C[m x n] += A[m x k] * B[k x n], row-major, no transposes.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
Tensor<T> transposed(const Tensor<T>& a) {
  Tensor<T> out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(c, r) = a.at(r, c);
  return out;
}

template <typename T>
std::size_t channel_count(const Var<T>& v) {
  return v.size();
}

template <typename T>
Tensor<T> scalar_tensor(T v) {
  return Tensor<T>({1}, v);
}

}  // namespace

std::uint64_t executed_macs() { return t_macs; }
void reset_executed_macs() { t_macs = 0; }

std::size_t conv_output_length(std::size_t in_len, std::size_t kernel, const ConvSpec& spec) {
  check_spec(spec);
  const long span = static_cast<long>(spec.dilation) * (static_cast<long>(kernel) - 1) + 1;
  const long padded = static_cast<long>(in_len) + 2L * spec.padding;
  if (padded < span) {
    throw DimensionError("conv: input length " + std::to_string(in_len) + " with padding " +
                         std::to_string(spec.padding) + " is shorter than the kernel span " +
                         std::to_string(span));
  }
  return static_cast<std::size_t>((padded - span) / spec.stride + 1);
}

std::size_t conv_transpose_output_length(std::size_t in_len, std::size_t kernel,
                                         const ConvSpec& spec, int output_padding) {
  check_spec(spec);
  const long len = (static_cast<long>(in_len) - 1) * spec.stride - 2L * spec.padding +
                   static_cast<long>(spec.dilation) * (static_cast<long>(kernel) - 1) + 1 +
                   output_padding;
  if (len <= 0) throw DimensionError("conv_transpose1d: non-positive output length");
  return static_cast<std::size_t>(len);
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  out += b.value();
  return make_result<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t i = 0; i < 2; ++i)
      if (wants(self, i)) grad_of(self, i) += self.grad;
  });
}

template <typename T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw DimensionError("add_n: no operands");
  Tensor<T> out = xs[0].value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(out.shape(), xs[i].shape(), "add_n");
    out += xs[i].value();
  }
  return make_result<T>("add_n", std::move(out), xs, [](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (wants(self, i)) grad_of(self, i) += self.grad;
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    if (wants(self, 0)) grad_of(self, 0) += self.grad;
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= factor;
  return make_result<T>("scale", std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Var<T> add_channel(const Var<T>& x, const Var<T>& v) {
  require_rank(x.shape(), 2, "add_channel");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  if (channel_count(v) != rows) {
    throw DimensionError("add_channel: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(v.shape()));
  }
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T b = v.value()[r];
    T* o = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] += b;
  }
  return make_result<T>("add_channel", std::move(out), {x, v}, [rows, cols](Node<T>& self) {
    if (wants(self, 0)) grad_of(self, 0) += self.grad;
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = self.grad.row(r);
        T acc = 0;
        for (std::size_t c = 0; c < cols; ++c) acc += gr[c];
        g[r] += acc;
      }
    }
  });
}

template <typename T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& v) {
  require_rank(x.shape(), 2, "mul_channel");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  if (channel_count(v) != rows) {
    throw DimensionError("mul_channel: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(v.shape()));
  }
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T s = v.value()[r];
    T* o = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] *= s;
  }
  return make_result<T>("mul_channel", std::move(out), {x, v}, [rows, cols](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t r = 0; r < rows; ++r) {
        const T s = vv[r];
        const T* gr = self.grad.row(r);
        T* gx = g.row(r);
        for (std::size_t c = 0; c < cols; ++c) gx[c] += s * gr[c];
      }
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = self.grad.row(r);
        const T* xr = xv.row(r);
        T acc = 0;
        for (std::size_t c = 0; c < cols; ++c) acc += gr[c] * xr[c];
        g[r] += acc;
      }
    }
  });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, const Var<T>& s) {
  if (s.size() != 1) throw DimensionError("mul_scalar: factor must have one element");
  Tensor<T> out = x.value();
  const T f = s.item();
  for (auto& v : out.storage()) v *= f;
  return make_result<T>("mul_scalar", std::move(out), {x, s}, [](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const T f = self.inputs[1]->value[0];
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * self.grad[i];
    }
    if (wants(self, 1)) {
      T acc = 0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      grad_of(self, 1)[0] += acc;
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  Tensor<T> saved = out;
  return make_result<T>("sigmoid", std::move(out), {x},
                        [saved = std::move(saved)](Node<T>& self) {
                          auto& g = grad_of(self, 0);
                          for (std::size_t i = 0; i < g.size(); ++i)
                            g[i] += self.grad[i] * saved[i] * (T(1) - saved[i]);
                        });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = v > T(0) ? v : T(0);
  return make_result<T>("relu", std::move(out), {x}, [](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  if (slope.size() != 1) throw DimensionError("prelu: slope must have one element");
  const T a = slope.item();
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = v >= T(0) ? v : a * v;
  return make_result<T>("prelu", std::move(out), {x, slope}, [](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const T a = self.inputs[1]->value[0];
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += xv[i] >= T(0) ? self.grad[i] : a * self.grad[i];
    }
    if (wants(self, 1)) {
      T acc = 0;
      for (std::size_t i = 0; i < xv.size(); ++i)
        if (xv[i] < T(0)) acc += self.grad[i] * xv[i];
      grad_of(self, 1)[0] += acc;
    }
  });
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec) {
  check_spec(spec);
  require_rank(x.shape(), 2, "conv1d input");
  require_rank(w.shape(), 3, "conv1d kernels");
  ConvGeom g;
  g.spec = spec;
  g.c_in = static_cast<long>(x.shape()[0]);
  g.in_len = static_cast<long>(x.shape()[1]);
  g.c_out = static_cast<long>(w.shape()[0]);
  g.kernel = static_cast<long>(w.shape()[2]);
  if (g.c_in % spec.groups != 0 || g.c_out % spec.groups != 0 ||
      static_cast<long>(w.shape()[1]) * spec.groups != g.c_in) {
    throw DimensionError("conv1d: input " + shape_to_string(x.shape()) + " incompatible with kernels " +
                         shape_to_string(w.shape()) + " at groups=" + std::to_string(spec.groups));
  }
  g.cin_g = g.c_in / spec.groups;
  g.cout_g = g.c_out / spec.groups;
  g.out_len = static_cast<long>(conv_output_length(g.in_len, g.kernel, spec));
  Tensor<T> out({static_cast<std::size_t>(g.c_out), static_cast<std::size_t>(g.out_len)});
  conv_forward_kernel(g, x.value().data(), w.value().data(), out.data());
  return make_result<T>("conv1d", std::move(out), {x, w}, [g](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const std::uint64_t macs = t_macs;
    if (wants(self, 0)) conv_input_grad_kernel(g, self.grad.data(), wv.data(), grad_of(self, 0).data());
    if (wants(self, 1)) conv_weight_grad_kernel(g, self.grad.data(), xv.data(), grad_of(self, 1).data());
    t_macs = macs;  // only forward work is counted
  });
}

template <typename T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& w, const ConvSpec& spec, int output_padding) {
  check_spec(spec);
  require_rank(x.shape(), 2, "conv_transpose1d input");
  require_rank(w.shape(), 3, "conv_transpose1d kernels");
  // Geometry of the conv1d this op is the adjoint of: its input is our output.
  ConvGeom g;
  g.spec = spec;
  g.c_out = static_cast<long>(x.shape()[0]);
  g.out_len = static_cast<long>(x.shape()[1]);
  g.kernel = static_cast<long>(w.shape()[2]);
  if (static_cast<long>(w.shape()[0]) != g.c_out || g.c_out % spec.groups != 0) {
    throw DimensionError("conv_transpose1d: input " + shape_to_string(x.shape()) +
                         " incompatible with kernels " + shape_to_string(w.shape()));
  }
  g.cout_g = g.c_out / spec.groups;
  g.cin_g = static_cast<long>(w.shape()[1]);
  g.c_in = g.cin_g * spec.groups;
  g.in_len = static_cast<long>(conv_transpose_output_length(g.out_len, g.kernel, spec, output_padding));
  Tensor<T> out({static_cast<std::size_t>(g.c_in), static_cast<std::size_t>(g.in_len)});
  conv_input_grad_kernel(g, x.value().data(), w.value().data(), out.data());
  return make_result<T>("conv_transpose1d", std::move(out), {x, w}, [g](Node<T>& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const std::uint64_t macs = t_macs;
    if (wants(self, 0)) conv_forward_kernel(g, self.grad.data(), wv.data(), grad_of(self, 0).data());
    if (wants(self, 1)) conv_weight_grad_kernel(g, xv.data(), self.grad.data(), grad_of(self, 1).data());
    t_macs = macs;
  });
}

template <typename T>
Var<T> avg_pool1d(const Var<T>& x, std::size_t target_len) {
  require_rank(x.shape(), 2, "avg_pool1d");
  const std::size_t rows = x.value().rows(), len = x.value().cols();
  if (target_len == 0 || len % target_len != 0) {
    throw DimensionError("avg_pool1d: length " + std::to_string(len) + " not divisible by target " +
                         std::to_string(target_len));
  }
  const std::size_t win = len / target_len;
  const T inv = T(1) / static_cast<T>(win);
  Tensor<T> out({rows, target_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.value().row(r);
    T* o = out.row(r);
    for (std::size_t j = 0; j < target_len; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < win; ++k) acc += xr[j * win + k];
      o[j] = acc * inv;
    }
  }
  return make_result<T>("avg_pool1d", std::move(out), {x}, [rows, target_len, win, inv](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = self.grad.row(r);
      T* gx = g.row(r);
      for (std::size_t j = 0; j < target_len; ++j)
        for (std::size_t k = 0; k < win; ++k) gx[j * win + k] += gr[j] * inv;
    }
  });
}

template <typename T>
Var<T> nearest_interp1d(const Var<T>& x, std::size_t target_len) {
  require_rank(x.shape(), 2, "nearest_interp1d");
  if (target_len == 0) throw DimensionError("nearest_interp1d: target length must be >= 1");
  const std::size_t rows = x.value().rows(), len = x.value().cols();
  std::vector<std::size_t> src(target_len);
  for (std::size_t t = 0; t < target_len; ++t) src[t] = (t * len) / target_len;
  Tensor<T> out({rows, target_len});
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.value().row(r);
    T* o = out.row(r);
    for (std::size_t t = 0; t < target_len; ++t) o[t] = xr[src[t]];
  }
  return make_result<T>("nearest_interp1d", std::move(out), {x},
                        [rows, src = std::move(src)](Node<T>& self) {
                          auto& g = grad_of(self, 0);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* gr = self.grad.row(r);
                            T* gx = g.row(r);
                            for (std::size_t t = 0; t < src.size(); ++t) gx[src[t]] += gr[t];
                          }
                        });
}

template <typename T>
Var<T> global_normalize(const Var<T>& x, T eps) {
  const std::size_t n = x.size();
  const T* xv = x.value().data();
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += xv[i];
  mean /= static_cast<double>(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = xv[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
  const T mu = static_cast<T>(mean);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < n; ++i) out[i] = (xv[i] - mu) * inv_std;
  Tensor<T> saved = out;
  return make_result<T>("global_normalize", std::move(out), {x},
                        [saved = std::move(saved), inv_std](Node<T>& self) {
                          const std::size_t n = saved.size();
                          const T* g = self.grad.data();
                          double mg = 0, mgx = 0;
                          for (std::size_t i = 0; i < n; ++i) {
                            mg += g[i];
                            mgx += static_cast<double>(g[i]) * saved[i];
                          }
                          mg /= static_cast<double>(n);
                          mgx /= static_cast<double>(n);
                          const T a = static_cast<T>(mg), b = static_cast<T>(mgx);
                          auto& gx = grad_of(self, 0);
                          for (std::size_t i = 0; i < n; ++i)
                            gx[i] += inv_std * (g[i] - a - saved[i] * b);
                        });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool trans_a, bool trans_b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  const Tensor<T> av = trans_a ? transposed(a.value()) : a.value();
  const Tensor<T> bv = trans_b ? transposed(b.value()) : b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: " + shape_to_string(av.shape()) + " * " + shape_to_string(bv.shape()));
  }
  Tensor<T> out({m, n});
  gemm(m, n, k, av.data(), bv.data(), out.data());
  t_macs += static_cast<std::uint64_t>(m) * n * k;
  return make_result<T>("matmul", std::move(out), {a, b},
                        [av, bv, trans_a, trans_b, m, n, k](Node<T>& self) {
                          if (wants(self, 0)) {
                            // d op(A) = dC * op(B)^T
                            Tensor<T> bt = transposed(bv);
                            Tensor<T> da({m, k});
                            gemm(m, k, n, self.grad.data(), bt.data(), da.data());
                            grad_of(self, 0) += trans_a ? transposed(da) : da;
                          }
                          if (wants(self, 1)) {
                            // d op(B) = op(A)^T * dC
                            Tensor<T> at = transposed(av);
                            Tensor<T> db({k, n});
                            gemm(k, n, m, at.data(), self.grad.data(), db.data());
                            grad_of(self, 1) += trans_b ? transposed(db) : db;
                          }
                        });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
  require_rank(x.shape(), 2, "softmax_rows");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.value().row(r);
    T* o = out.row(r);
    const T mx = *std::max_element(xr, xr + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(xr[c] - mx);
      total += o[c];
    }
    const T inv = T(1) / total;
    for (std::size_t c = 0; c < cols; ++c) o[c] *= inv;
  }
  Tensor<T> saved = out;
  return make_result<T>("softmax_rows", std::move(out), {x},
                        [saved = std::move(saved), rows, cols](Node<T>& self) {
                          auto& g = grad_of(self, 0);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* y = saved.row(r);
                            const T* gy = self.grad.row(r);
                            T s = 0;
                            for (std::size_t c = 0; c < cols; ++c) s += gy[c] * y[c];
                            T* gx = g.row(r);
                            for (std::size_t c = 0; c < cols; ++c) gx[c] += y[c] * (gy[c] - s);
                          }
                        });
}

template <typename T>
Var<T> slice_rows(const Var<T>& x, std::size_t begin, std::size_t count) {
  require_rank(x.shape(), 2, "slice_rows");
  const std::size_t cols = x.value().cols();
  if (begin + count > x.value().rows() || count == 0) {
    throw DimensionError("slice_rows: range out of bounds for " + shape_to_string(x.shape()));
  }
  Tensor<T> out({count, cols});
  std::copy(x.value().row(begin), x.value().row(begin) + count * cols, out.data());
  return make_result<T>("slice_rows", std::move(out), {x}, [begin, count, cols](Node<T>& self) {
    auto& g = grad_of(self, 0);
    T* dst = g.row(begin);
    for (std::size_t i = 0; i < count * cols; ++i) dst[i] += self.grad[i];
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, std::size_t begin, std::size_t count) {
  require_rank(x.shape(), 2, "slice_cols");
  const std::size_t rows = x.value().rows(), cols = x.value().cols();
  if (begin + count > cols || count == 0) {
    throw DimensionError("slice_cols: range out of bounds for " + shape_to_string(x.shape()));
  }
  Tensor<T> out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(x.value().row(r) + begin, x.value().row(r) + begin + count, out.row(r));
  return make_result<T>("slice_cols", std::move(out), {x}, [rows, begin, count](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = g.row(r) + begin;
      const T* src = self.grad.row(r);
      for (std::size_t c = 0; c < count; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t cols = xs[0].value().cols();
  std::size_t rows = 0;
  for (const auto& v : xs) {
    require_rank(v.shape(), 2, "concat_rows");
    if (v.value().cols() != cols) throw DimensionError("concat_rows: column counts differ");
    rows += v.value().rows();
  }
  Tensor<T> out({rows, cols});
  std::size_t offset = 0;
  for (const auto& v : xs) {
    std::copy(v.value().data(), v.value().data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  return make_result<T>("concat_rows", std::move(out), xs, [](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const std::size_t n = self.inputs[i]->value.size();
      if (wants(self, i)) {
        auto& g = grad_of(self, i);
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[offset + j];
      }
      offset += n;
    }
  });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> mask(x.shape());
  std::bernoulli_distribution keep(1.0 - p);
  for (auto& m : mask.storage()) m = keep(rng.engine()) ? keep_scale : T(0);
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result<T>("dropout", std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().storage()) acc += v;
  return make_result<T>("sum", scalar_tensor(acc), {x}, [](Node<T>& self) {
    auto& g = grad_of(self, 0);
    const T s = self.grad[0];
    for (auto& v : g.storage()) v += s;
  });
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  T acc = 0;
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += av[i] * bv[i];
  return make_result<T>("dot", scalar_tensor(acc), {a, b}, [](Node<T>& self) {
    const T s = self.grad[0];
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      auto& g = grad_of(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * bv[i];
    }
    if (wants(self, 1)) {
      auto& g = grad_of(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * av[i];
    }
  });
}

template <typename T>
Var<T> sum_squares(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().storage()) acc += v * v;
  return make_result<T>("sum_squares", scalar_tensor(acc), {x}, [](Node<T>& self) {
    const T s = T(2) * self.grad[0];
    const auto& xv = self.inputs[0]->value;
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * xv[i];
  });
}

template <typename T>
Var<T> center(const Var<T>& x) {
  const std::size_t n = x.size();
  double mean = 0;
  for (T v : x.value().storage()) mean += v;
  mean /= static_cast<double>(n);
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = static_cast<T>(v - mean);
  return make_result<T>("center", std::move(out), {x}, [n](Node<T>& self) {
    double mg = 0;
    for (T v : self.grad.storage()) mg += v;
    const T m = static_cast<T>(mg / static_cast<double>(n));
    auto& g = grad_of(self, 0);
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] - m;
  });
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  if (a.size() != 1 || b.size() != 1) throw DimensionError("divide: operands must be scalars");
  const T num = a.item(), den = b.item();
  return make_result<T>("divide", scalar_tensor(num / den), {a, b}, [num, den](Node<T>& self) {
    const T s = self.grad[0];
    if (wants(self, 0)) grad_of(self, 0)[0] += s / den;
    if (wants(self, 1)) grad_of(self, 1)[0] -= s * num / (den * den);
  });
}

template <typename T>
Var<T> add_constant(const Var<T>& a, T c) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v += c;
  return make_result<T>("add_constant", std::move(out), {a},
                        [](Node<T>& self) { grad_of(self, 0) += self.grad; });
}

template <typename T>
Var<T> decibels_clamped(const Var<T>& x, T lo_db, T hi_db) {
  if (x.size() != 1) throw DimensionError("decibels_clamped: operand must be scalar");
  const T v = x.item();
  T db;
  bool clamped;
  if (!(v > T(0))) {
    db = lo_db;
    clamped = true;
  } else {
    db = T(10) * std::log10(v);
    clamped = db <= lo_db || db >= hi_db;
    db = std::clamp(db, lo_db, hi_db);
  }
  return make_result<T>("decibels_clamped", scalar_tensor(db), {x}, [v, clamped](Node<T>& self) {
    if (clamped) return;
    grad_of(self, 0)[0] += self.grad[0] * T(10) / (v * static_cast<T>(std::log(10.0)));
  });
}

#define TDANET_INSTANTIATE_OPS(T)                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                      \
  template Var<T> add_n(const std::vector<Var<T>>&);                                      \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale(const Var<T>&, T);                                                \
  template Var<T> add_channel(const Var<T>&, const Var<T>&);                              \
  template Var<T> mul_channel(const Var<T>&, const Var<T>&);                              \
  template Var<T> mul_scalar(const Var<T>&, const Var<T>&);                               \
  template Var<T> sigmoid(const Var<T>&);                                                 \
  template Var<T> relu(const Var<T>&);                                                    \
  template Var<T> prelu(const Var<T>&, const Var<T>&);                                    \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const ConvSpec&);                  \
  template Var<T> conv_transpose1d(const Var<T>&, const Var<T>&, const ConvSpec&, int);   \
  template Var<T> avg_pool1d(const Var<T>&, std::size_t);                                 \
  template Var<T> nearest_interp1d(const Var<T>&, std::size_t);                           \
  template Var<T> global_normalize(const Var<T>&, T);                                     \
  template Var<T> matmul(const Var<T>&, const Var<T>&, bool, bool);                       \
  template Var<T> softmax_rows(const Var<T>&);                                            \
  template Var<T> slice_rows(const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> slice_cols(const Var<T>&, std::size_t, std::size_t);                    \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                                \
  template Var<T> dropout(const Var<T>&, double, Rng&);                                   \
  template Var<T> sum(const Var<T>&);                                                     \
  template Var<T> dot(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sum_squares(const Var<T>&);                                             \
  template Var<T> center(const Var<T>&);                                                  \
  template Var<T> divide(const Var<T>&, const Var<T>&);                                   \
  template Var<T> add_constant(const Var<T>&, T);                                         \
  template Var<T> decibels_clamped(const Var<T>&, T, T);

TDANET_INSTANTIATE_OPS(float)
TDANET_INSTANTIATE_OPS(double)

#undef TDANET_INSTANTIATE_OPS

}  // namespace tdanet
