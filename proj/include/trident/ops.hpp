// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "trident/tensor.hpp"

namespace trident::nn {

namespace detail {

template <class Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <class Real>
using CMatMap = Eigen::Map<const RowMat<Real>>;

// C[m,n] = (or +=) opA(A) * opB(B); a_t/b_t read A as (k,m) / B as (n,k).
template <class Real>
inline void gemm(bool a_t, bool b_t, int m, int n, int k, const Real* A, const Real* B, Real* C,
                 bool accumulate) {
  MatMap<Real> c(C, m, n);
  if (!a_t && !b_t) {
    CMatMap<Real> a(A, m, k), b(B, k, n);
    if (accumulate)
      c.noalias() += a * b;
    else
      c.noalias() = a * b;
  } else if (!a_t && b_t) {
    CMatMap<Real> a(A, m, k), b(B, n, k);
    if (accumulate)
      c.noalias() += a * b.transpose();
    else
      c.noalias() = a * b.transpose();
  } else if (a_t && !b_t) {
    CMatMap<Real> a(A, k, m), b(B, k, n);
    if (accumulate)
      c.noalias() += a.transpose() * b;
    else
      c.noalias() = a.transpose() * b;
  } else {
    CMatMap<Real> a(A, k, m), b(B, n, k);
    if (accumulate)
      c.noalias() += a.transpose() * b.transpose();
    else
      c.noalias() = a.transpose() * b.transpose();
  }
}

template <class Real>
inline void audit_finite(const char* op, const Tensor<Real>& t) {
  for (Real v : t.data())
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

// Registers the op on the active tape when any input carries gradient.
template <class Real>
inline void finish(const char* op, std::initializer_list<Tensor<Real>> inputs, Tensor<Real>& out,
                   const std::function<void()>& backward) {
  auto* tp = current_tape<Real>();
  if (!tp) return;
  if (tp->finite_checks) audit_finite(op, out);
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  tp->record(op, std::vector<Tensor<Real>>(inputs), out, backward);
}

template <class Real>
inline void require_same_shape(const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary / scalar ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("add", a, b);
  auto out = Tensor<Real>::zeros(a.shape());
  const auto &av = a.data(), &bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("add", {a, b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
    }
  });
  return out;
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = Tensor<Real>::zeros(a.shape());
  const auto &av = a.data(), &bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("sub", {a, b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
    }
  });
  return out;
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = Tensor<Real>::zeros(a.shape());
  const auto &av = a.data(), &bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("mul", {a, b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
  return out;
}

template <class Real>
Tensor<Real> scale(const Tensor<Real>& a, Real s) {
  auto out = Tensor<Real>::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  auto an = a.node(), on = out.node();
  detail::finish<Real>("scale", {a}, out, [an, on, s] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * s;
  });
  return out;
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& a, Real s) {
  auto out = Tensor<Real>::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + s;
  auto an = a.node(), on = out.node();
  detail::finish<Real>("add_scalar", {a}, out, [an, on] {
    if (on->grad.empty() || !an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
  });
  return out;
}

// x[..., C] + b[C]
template <class Real>
Tensor<Real> add_bias(const Tensor<Real>& x, const Tensor<Real>& b) {
  if (b.rank() != 1 || x.dim(x.rank() - 1) != b.dim(0))
    throw std::invalid_argument("add_bias: bias must match trailing axis");
  const int c = b.dim(0);
  const int64_t rows = x.numel() / c;
  auto out = Tensor<Real>::zeros(x.shape());
  const auto &xv = x.data(), &bv = b.data();
  auto& ov = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) ov[r * c + j] = xv[r * c + j] + bv[j];
  auto xn = x.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("add_bias", {x, b}, out, [xn, bn, on, rows, c] {
    if (on->grad.empty()) return;
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) bn->grad[j] += on->grad[r * c + j];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  auto out = Tensor<Real>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("relu", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i)
      if (xn->value[i] > Real(0)) xn->grad[i] += on->grad[i];
  });
  return out;
}

namespace detail {
template <class Real>
inline Real gauss_cdf(Real x) {
  return Real(0.5) * std::erfc(-x * Real(0.7071067811865475244));
}
template <class Real>
inline Real gauss_pdf(Real x) {
  return Real(0.3989422804014326779) * std::exp(Real(-0.5) * x * x);
}
}  // namespace detail

// Exact Gaussian-CDF form: x * Phi(x).
template <class Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  auto out = Tensor<Real>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * detail::gauss_cdf(xv[i]);
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("gelu", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) {
      const Real v = xn->value[i];
      xn->grad[i] += on->grad[i] * (detail::gauss_cdf(v) + v * detail::gauss_pdf(v));
    }
  });
  return out;
}

template <class Real>
Tensor<Real> tanh_act(const Tensor<Real>& x) {
  auto out = Tensor<Real>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("tanh", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) {
      const Real y = on->value[i];
      xn->grad[i] += on->grad[i] * (Real(1) - y * y);
    }
  });
  return out;
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  auto out = Tensor<Real>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = Real(1) / (Real(1) + std::exp(-xv[i]));
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("sigmoid", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) {
      const Real y = on->value[i];
      xn->grad[i] += on->grad[i] * y * (Real(1) - y);
    }
  });
  return out;
}

enum class Activation { relu, gelu, tanh, sigmoid };

template <class Real>
Tensor<Real> activation(const Tensor<Real>& x, Activation kind) {
  switch (kind) {
    case Activation::relu: return relu(x);
    case Activation::gelu: return gelu(x);
    case Activation::tanh: return tanh_act(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  throw std::invalid_argument("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  auto out = Tensor<Real>::scalar(s);
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("sum_all", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    const Real g = on->grad[0];
    for (auto& d : xn->grad) d += g;
  });
  return out;
}

template <class Real>
Tensor<Real> mean_all(const Tensor<Real>& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  const Real inv = Real(1) / Real(x.numel());
  auto out = Tensor<Real>::scalar(s * inv);
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("mean_all", {x}, out, [xn, on, inv] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    const Real g = on->grad[0] * inv;
    for (auto& d : xn->grad) d += g;
  });
  return out;
}

// Mean over all elements of (a - b)^2.
template <class Real>
Tensor<Real> mse(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("mse", a, b);
  const auto &av = a.data(), &bv = b.data();
  Real s = 0;
  for (size_t i = 0; i < av.size(); ++i) {
    const Real d = av[i] - bv[i];
    s += d * d;
  }
  const Real inv = Real(1) / Real(a.numel());
  auto out = Tensor<Real>::scalar(s * inv);
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("mse", {a, b}, out, [an, bn, on, inv] {
    if (on->grad.empty()) return;
    const Real g = Real(2) * on->grad[0] * inv;
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (size_t i = 0; i < an->value.size(); ++i) {
      const Real d = g * (an->value[i] - bn->value[i]);
      if (an->requires_grad) an->grad[i] += d;
      if (bn->requires_grad) bn->grad[i] -= d;
    }
  });
  return out;
}

// x[..., C] -> [C], averaging over leading axes.
template <class Real>
Tensor<Real> mean_over_leading(const Tensor<Real>& x) {
  if (x.rank() < 2) throw std::invalid_argument("mean_over_leading: rank must be >= 2");
  const int c = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / c;
  auto out = Tensor<Real>::zeros({c});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) ov[j] += xv[r * c + j];
  const Real inv = Real(1) / Real(rows);
  for (int j = 0; j < c; ++j) ov[j] *= inv;
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("mean_over_leading", {x}, out, [xn, on, rows, c, inv] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) xn->grad[r * c + j] += on->grad[j] * inv;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch for " + shape_str(shape));
  auto out = Tensor<Real>::from_data(std::move(shape), x.data());
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("reshape", {x}, out, [xn, on] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
  });
  return out;
}

namespace detail {
inline void permute_index_setup(const Shape& in_shape, const std::vector<int>& perm, int d4[4],
                                int64_t in_stride[4], int64_t out_stride_for_in_axis[4]) {
  const int r = static_cast<int>(in_shape.size());
  const int pad = 4 - r;
  int dims[4] = {1, 1, 1, 1};
  for (int i = 0; i < r; ++i) dims[pad + i] = in_shape[static_cast<size_t>(i)];
  int64_t istr[4];
  istr[3] = 1;
  for (int i = 2; i >= 0; --i) istr[i] = istr[i + 1] * dims[i + 1];
  // output dims follow perm; compute output strides, then map to input axes
  int odims[4] = {1, 1, 1, 1};
  for (int i = 0; i < r; ++i) odims[pad + i] = in_shape[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  int64_t ostr[4];
  ostr[3] = 1;
  for (int i = 2; i >= 0; --i) ostr[i] = ostr[i + 1] * odims[i + 1];
  int64_t out_for_in[4] = {0, 0, 0, 0};
  for (int o = 0; o < r; ++o) out_for_in[pad + perm[static_cast<size_t>(o)]] = ostr[pad + o];
  for (int i = 0; i < 4; ++i) {
    d4[i] = dims[i];
    in_stride[i] = istr[i];
    out_stride_for_in_axis[i] = out_for_in[i];
  }
}
}  // namespace detail

// Permutes axes; rank up to 4.
template <class Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (r > 4 || static_cast<int>(perm.size()) != r)
    throw std::invalid_argument("permute: rank must be <= 4 and match perm length");
  Shape out_shape(static_cast<size_t>(r));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
      throw std::invalid_argument("permute: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
    out_shape[static_cast<size_t>(i)] = x.dim(p);
  }
  auto out = Tensor<Real>::zeros(out_shape);
  int d[4];
  int64_t istr[4], omap[4];
  detail::permute_index_setup(x.shape(), perm, d, istr, omap);
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int a = 0; a < d[0]; ++a)
    for (int b = 0; b < d[1]; ++b)
      for (int c = 0; c < d[2]; ++c) {
        const int64_t ibase = a * istr[0] + b * istr[1] + c * istr[2];
        const int64_t obase = a * omap[0] + b * omap[1] + c * omap[2];
        for (int e = 0; e < d[3]; ++e) ov[obase + e * omap[3]] = xv[ibase + e];
      }
  auto xn = x.node(), on = out.node();
  Shape in_shape = x.shape();
  std::vector<int> perm_copy = perm;
  detail::finish<Real>("permute", {x}, out, [xn, on, in_shape, perm_copy] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    int d[4];
    int64_t istr[4], omap[4];
    detail::permute_index_setup(in_shape, perm_copy, d, istr, omap);
    for (int a = 0; a < d[0]; ++a)
      for (int b = 0; b < d[1]; ++b)
        for (int c = 0; c < d[2]; ++c) {
          const int64_t ibase = a * istr[0] + b * istr[1] + c * istr[2];
          const int64_t obase = a * omap[0] + b * omap[1] + c * omap[2];
          for (int e = 0; e < d[3]; ++e) xn->grad[ibase + e] += on->grad[obase + e * omap[3]];
        }
  });
  return out;
}

// (a, b) elementwise -> [..., 2] with a in slot 0 and b in slot 1.
template <class Real>
Tensor<Real> stack_last(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("stack_last", a, b);
  Shape out_shape = a.shape();
  out_shape.push_back(2);
  auto out = Tensor<Real>::zeros(out_shape);
  const auto &av = a.data(), &bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < av.size(); ++i) {
    ov[2 * i] = av[i];
    ov[2 * i + 1] = bv[i];
  }
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("stack_last", {a, b}, out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < an->value.size(); ++i) an->grad[i] += on->grad[2 * i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += on->grad[2 * i + 1];
    }
  });
  return out;
}

// x[M, C] -> [M, n, C] by repetition along the middle axis.
template <class Real>
Tensor<Real> expand_mid(const Tensor<Real>& x, int n) {
  if (x.rank() != 2) throw std::invalid_argument("expand_mid: input must be rank 2");
  const int m = x.dim(0), c = x.dim(1);
  auto out = Tensor<Real>::zeros({m, n, c});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      std::memcpy(&ov[(static_cast<int64_t>(i) * n + j) * c], &xv[static_cast<int64_t>(i) * c],
                  sizeof(Real) * static_cast<size_t>(c));
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("expand_mid", {x}, out, [xn, on, m, n, c] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < c; ++k)
          xn->grad[static_cast<int64_t>(i) * c + k] +=
              on->grad[(static_cast<int64_t>(i) * n + j) * c + k];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = Tensor<Real>::zeros({m, n});
  detail::gemm<Real>(false, false, m, n, k, a.data().data(), b.data().data(), out.data().data(),
                     false);
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("matmul", {a, b}, out, [an, bn, on, m, k, n] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      an->ensure_grad();
      detail::gemm<Real>(false, true, m, k, n, on->grad.data(), bn->value.data(), an->grad.data(),
                         true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::gemm<Real>(true, false, k, n, m, an->value.data(), on->grad.data(), bn->grad.data(),
                         true);
    }
  });
  return out;
}

// a[B,m,k] x b[B,k,n] -> [B,m,n]
template <class Real>
Tensor<Real> bmm(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw std::invalid_argument("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  auto out = Tensor<Real>::zeros({B, m, n});
  for (int i = 0; i < B; ++i)
    detail::gemm<Real>(false, false, m, n, k, a.data().data() + static_cast<int64_t>(i) * m * k,
                       b.data().data() + static_cast<int64_t>(i) * k * n,
                       out.data().data() + static_cast<int64_t>(i) * m * n, false);
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("bmm", {a, b}, out, [an, bn, on, B, m, k, n] {
    if (on->grad.empty()) return;
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (int i = 0; i < B; ++i) {
      const Real* g = on->grad.data() + static_cast<int64_t>(i) * m * n;
      if (an->requires_grad)
        detail::gemm<Real>(false, true, m, k, n, g,
                           bn->value.data() + static_cast<int64_t>(i) * k * n,
                           an->grad.data() + static_cast<int64_t>(i) * m * k, true);
      if (bn->requires_grad)
        detail::gemm<Real>(true, false, k, n, m,
                           an->value.data() + static_cast<int64_t>(i) * m * k, g,
                           bn->grad.data() + static_cast<int64_t>(i) * k * n, true);
    }
  });
  return out;
}

// a[B,m,d] x b[B,n,d]^T -> [B,m,n]
template <class Real>
Tensor<Real> bmm_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int B = a.dim(0), m = a.dim(1), d = a.dim(2), n = b.dim(1);
  auto out = Tensor<Real>::zeros({B, m, n});
  for (int i = 0; i < B; ++i)
    detail::gemm<Real>(false, true, m, n, d, a.data().data() + static_cast<int64_t>(i) * m * d,
                       b.data().data() + static_cast<int64_t>(i) * n * d,
                       out.data().data() + static_cast<int64_t>(i) * m * n, false);
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("bmm_nt", {a, b}, out, [an, bn, on, B, m, d, n] {
    if (on->grad.empty()) return;
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (int i = 0; i < B; ++i) {
      const Real* g = on->grad.data() + static_cast<int64_t>(i) * m * n;
      if (an->requires_grad)
        detail::gemm<Real>(false, false, m, d, n, g,
                           bn->value.data() + static_cast<int64_t>(i) * n * d,
                           an->grad.data() + static_cast<int64_t>(i) * m * d, true);
      if (bn->requires_grad)
        detail::gemm<Real>(true, false, n, d, m, g,
                           an->value.data() + static_cast<int64_t>(i) * m * d,
                           bn->grad.data() + static_cast<int64_t>(i) * n * d, true);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / normalization
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("softmax: axis out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= x.dim(i);
  const int len = x.dim(axis);
  auto out = Tensor<Real>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      Real mx = xv[base];
      for (int j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      Real sum = 0;
      for (int j = 0; j < len; ++j) {
        const Real e = std::exp(xv[base + j * inner] - mx);
        ov[base + j * inner] = e;
        sum += e;
      }
      const Real inv = Real(1) / sum;
      for (int j = 0; j < len; ++j) ov[base + j * inner] *= inv;
    }
  auto xn = x.node(), on = out.node();
  detail::finish<Real>("softmax", {x}, out, [xn, on, outer, inner, len] {
    if (on->grad.empty() || !xn->requires_grad) return;
    xn->ensure_grad();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        Real dot = 0;
        for (int j = 0; j < len; ++j) dot += on->grad[base + j * inner] * on->value[base + j * inner];
        for (int j = 0; j < len; ++j) {
          const int64_t idx = base + j * inner;
          xn->grad[idx] += (on->grad[idx] - dot) * on->value[idx];
        }
      }
  });
  return out;
}

// Normalizes over the trailing (channel) axis, then applies gamma/beta.
template <class Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        Real eps = Real(1e-5)) {
  const int c = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.dim(0) != c || beta.dim(0) != c)
    throw std::invalid_argument("layer_norm: gamma/beta must have the channel extent");
  if (eps <= Real(0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const int64_t rows = x.numel() / c;
  auto out = Tensor<Real>::zeros(x.shape());
  std::vector<Real> mu(static_cast<size_t>(rows)), ivar(static_cast<size_t>(rows));
  const auto &xv = x.data(), &gv = gamma.data(), &bv = beta.data();
  auto& ov = out.data();
  const Real invc = Real(1) / Real(c);
  for (int64_t r = 0; r < rows; ++r) {
    const Real* row = &xv[r * c];
    Real m = 0;
    for (int j = 0; j < c; ++j) m += row[j];
    m *= invc;
    Real v = 0;
    for (int j = 0; j < c; ++j) {
      const Real d = row[j] - m;
      v += d * d;
    }
    v *= invc;
    const Real iv = Real(1) / std::sqrt(v + eps);
    mu[static_cast<size_t>(r)] = m;
    ivar[static_cast<size_t>(r)] = iv;
    for (int j = 0; j < c; ++j) ov[r * c + j] = (row[j] - m) * iv * gv[j] + bv[j];
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
  detail::finish<Real>(
      "layer_norm", {x, gamma, beta}, out,
      [xn, gn, bn, on, rows, c, invc, mu = std::move(mu), ivar = std::move(ivar)] {
        if (on->grad.empty()) return;
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
          const Real m = mu[static_cast<size_t>(r)];
          const Real iv = ivar[static_cast<size_t>(r)];
          const Real* row = &xn->value[r * c];
          const Real* g = &on->grad[r * c];
          Real sum_dxh = 0, sum_dxh_xh = 0;
          for (int j = 0; j < c; ++j) {
            const Real xh = (row[j] - m) * iv;
            const Real dxh = g[j] * gn->value[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            if (gn->requires_grad) gn->grad[j] += g[j] * xh;
            if (bn->requires_grad) bn->grad[j] += g[j];
          }
          if (xn->requires_grad) {
            for (int j = 0; j < c; ++j) {
              const Real xh = (row[j] - m) * iv;
              const Real dxh = g[j] * gn->value[j];
              xn->grad[r * c + j] += iv * (dxh - invc * sum_dxh - invc * xh * sum_dxh_xh);
            }
          }
        }
      });
  return out;
}

// Per-channel statistics over all leading axes; channel axis is trailing.
// Updates running stats in training mode (first batch copies, then momentum
// keeps 0.9 of history). Inference with no recorded batches is an error.
template <class Real>
struct BatchNormState {
  Tensor<Real> running_mean, running_var, count;  // count: scalar batch counter
};

template <class Real>
Tensor<Real> batch_norm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                        BatchNormState<Real>& state, bool training, Real momentum = Real(0.9),
                        Real eps = Real(1e-5)) {
  const int c = x.dim(x.rank() - 1);
  if (gamma.dim(0) != c || beta.dim(0) != c || state.running_mean.dim(0) != c ||
      state.running_var.dim(0) != c)
    throw std::invalid_argument("batch_norm: channel extents disagree");
  const int64_t rows = x.numel() / c;
  auto out = Tensor<Real>::zeros(x.shape());
  const auto &xv = x.data(), &gv = gamma.data(), &bv = beta.data();
  auto& ov = out.data();
  if (training) {
    std::vector<Real> mu(static_cast<size_t>(c), Real(0)), var(static_cast<size_t>(c), Real(0));
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) mu[static_cast<size_t>(j)] += xv[r * c + j];
    const Real invr = Real(1) / Real(rows);
    for (int j = 0; j < c; ++j) mu[static_cast<size_t>(j)] *= invr;
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) {
        const Real d = xv[r * c + j] - mu[static_cast<size_t>(j)];
        var[static_cast<size_t>(j)] += d * d;
      }
    for (int j = 0; j < c; ++j) var[static_cast<size_t>(j)] *= invr;
    auto& rm = state.running_mean.data();
    auto& rv = state.running_var.data();
    if (state.count.data()[0] == Real(0)) {
      for (int j = 0; j < c; ++j) {
        rm[j] = mu[static_cast<size_t>(j)];
        rv[j] = var[static_cast<size_t>(j)];
      }
    } else {
      for (int j = 0; j < c; ++j) {
        rm[j] = momentum * rm[j] + (Real(1) - momentum) * mu[static_cast<size_t>(j)];
        rv[j] = momentum * rv[j] + (Real(1) - momentum) * var[static_cast<size_t>(j)];
      }
    }
    state.count.data()[0] += Real(1);
    std::vector<Real> ivar(static_cast<size_t>(c));
    for (int j = 0; j < c; ++j)
      ivar[static_cast<size_t>(j)] = Real(1) / std::sqrt(var[static_cast<size_t>(j)] + eps);
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j)
        ov[r * c + j] =
            (xv[r * c + j] - mu[static_cast<size_t>(j)]) * ivar[static_cast<size_t>(j)] * gv[j] +
            bv[j];
    auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
    detail::finish<Real>(
        "batch_norm", {x, gamma, beta}, out,
        [xn, gn, bn, on, rows, c, mu = std::move(mu), ivar = std::move(ivar)] {
          if (on->grad.empty()) return;
          if (xn->requires_grad) xn->ensure_grad();
          if (gn->requires_grad) gn->ensure_grad();
          if (bn->requires_grad) bn->ensure_grad();
          const Real invr = Real(1) / Real(rows);
          std::vector<Real> sum_g(static_cast<size_t>(c), Real(0)),
              sum_gxh(static_cast<size_t>(c), Real(0));
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j) {
              const Real xh =
                  (xn->value[r * c + j] - mu[static_cast<size_t>(j)]) * ivar[static_cast<size_t>(j)];
              const Real g = on->grad[r * c + j];
              sum_g[static_cast<size_t>(j)] += g;
              sum_gxh[static_cast<size_t>(j)] += g * xh;
            }
          if (gn->requires_grad)
            for (int j = 0; j < c; ++j) gn->grad[j] += sum_gxh[static_cast<size_t>(j)];
          if (bn->requires_grad)
            for (int j = 0; j < c; ++j) bn->grad[j] += sum_g[static_cast<size_t>(j)];
          if (xn->requires_grad) {
            for (int64_t r = 0; r < rows; ++r)
              for (int j = 0; j < c; ++j) {
                const Real xh = (xn->value[r * c + j] - mu[static_cast<size_t>(j)]) *
                                ivar[static_cast<size_t>(j)];
                const Real g = on->grad[r * c + j];
                xn->grad[r * c + j] += gn->value[j] * ivar[static_cast<size_t>(j)] *
                                       (g - invr * sum_g[static_cast<size_t>(j)] -
                                        invr * xh * sum_gxh[static_cast<size_t>(j)]);
              }
          }
        });
    return out;
  }
  // inference
  if (state.count.data()[0] == Real(0))
    throw std::runtime_error("batch_norm: inference requested before any training batch");
  const auto& rm = state.running_mean.data();
  const auto& rv = state.running_var.data();
  std::vector<Real> ivar(static_cast<size_t>(c));
  for (int j = 0; j < c; ++j) ivar[static_cast<size_t>(j)] = Real(1) / std::sqrt(rv[j] + eps);
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j)
      ov[r * c + j] = (xv[r * c + j] - rm[j]) * ivar[static_cast<size_t>(j)] * gv[j] + bv[j];
  auto xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
  std::vector<Real> rm_copy(rm), ivar_b(ivar);
  detail::finish<Real>("batch_norm_inf", {x, gamma, beta}, out,
                       [xn, gn, bn, on, rows, c, rm = std::move(rm_copy),
                        ivar = std::move(ivar_b)] {
                         if (on->grad.empty()) return;
                         if (xn->requires_grad) xn->ensure_grad();
                         if (gn->requires_grad) gn->ensure_grad();
                         if (bn->requires_grad) bn->ensure_grad();
                         for (int64_t r = 0; r < rows; ++r)
                           for (int j = 0; j < c; ++j) {
                             const Real g = on->grad[r * c + j];
                             const Real xh =
                                 (xn->value[r * c + j] - rm[j]) * ivar[static_cast<size_t>(j)];
                             if (xn->requires_grad)
                               xn->grad[r * c + j] += g * gn->value[j] * ivar[static_cast<size_t>(j)];
                             if (gn->requires_grad) gn->grad[j] += g * xh;
                             if (bn->requires_grad) bn->grad[j] += g;
                           }
                       });
  return out;
}

}  // namespace trident::nn
