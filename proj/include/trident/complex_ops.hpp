// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "trident/ops.hpp"

namespace trident::nn {

namespace detail {
template <class Real>
inline void require_complex_pair(const char* op, const Tensor<Real>& t) {
  if (t.rank() < 1 || t.dim(t.rank() - 1) != 2)
    throw std::invalid_argument(std::string(op) + ": trailing axis must have extent 2");
}
}  // namespace detail

// Elementwise complex product of [..., 2] pairs.
template <class Real>
Tensor<Real> complex_mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape("complex_mul", a, b);
  detail::require_complex_pair("complex_mul", a);
  auto out = Tensor<Real>::zeros(a.shape());
  const auto &av = a.data(), &bv = b.data();
  auto& ov = out.data();
  const size_t n = av.size() / 2;
  for (size_t i = 0; i < n; ++i) {
    const Real ar = av[2 * i], ai = av[2 * i + 1];
    const Real br = bv[2 * i], bi = bv[2 * i + 1];
    ov[2 * i] = ar * br - ai * bi;
    ov[2 * i + 1] = ar * bi + ai * br;
  }
  auto an = a.node(), bn = b.node(), on = out.node();
  detail::finish<Real>("complex_mul", {a, b}, out, [an, bn, on, n] {
    if (on->grad.empty()) return;
    if (an->requires_grad) an->ensure_grad();
    if (bn->requires_grad) bn->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const Real gr = on->grad[2 * i], gi = on->grad[2 * i + 1];
      const Real ar = an->value[2 * i], ai = an->value[2 * i + 1];
      const Real br = bn->value[2 * i], bi = bn->value[2 * i + 1];
      if (an->requires_grad) {
        an->grad[2 * i] += gr * br + gi * bi;
        an->grad[2 * i + 1] += -gr * bi + gi * br;
      }
      if (bn->requires_grad) {
        bn->grad[2 * i] += gr * ar + gi * ai;
        bn->grad[2 * i + 1] += -gr * ai + gi * ar;
      }
    }
  });
  return out;
}

// z -> z * |z|^(p-1), magnitude smoothed by eps so silent bins stay stable.
template <class Real>
Tensor<Real> complex_compress(const Tensor<Real>& s, Real p, Real eps) {
  detail::require_complex_pair("complex_compress", s);
  auto out = Tensor<Real>::zeros(s.shape());
  const auto& sv = s.data();
  auto& ov = out.data();
  const size_t n = sv.size() / 2;
  const Real eps2 = eps * eps;
  for (size_t i = 0; i < n; ++i) {
    const Real sr = sv[2 * i], si = sv[2 * i + 1];
    const Real r = std::sqrt(sr * sr + si * si + eps2);
    const Real c = std::pow(r, p - Real(1));
    ov[2 * i] = sr * c;
    ov[2 * i + 1] = si * c;
  }
  auto sn = s.node(), on = out.node();
  detail::finish<Real>("complex_compress", {s}, out, [sn, on, n, p, eps2] {
    if (on->grad.empty() || !sn->requires_grad) return;
    sn->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const Real sr = sn->value[2 * i], si = sn->value[2 * i + 1];
      const Real gr = on->grad[2 * i], gi = on->grad[2 * i + 1];
      const Real r = std::sqrt(sr * sr + si * si + eps2);
      const Real c = std::pow(r, p - Real(1));
      const Real k = (p - Real(1)) * std::pow(r, p - Real(3));
      const Real common = sr * gr + si * gi;
      sn->grad[2 * i] += c * gr + k * sr * common;
      sn->grad[2 * i + 1] += c * gi + k * si * common;
    }
  });
  return out;
}

// [..., 2] -> [...]: |z|^p with smoothed magnitude.
template <class Real>
Tensor<Real> complex_abs_pow(const Tensor<Real>& s, Real p, Real eps) {
  detail::require_complex_pair("complex_abs_pow", s);
  Shape out_shape(s.shape().begin(), s.shape().end() - 1);
  auto out = Tensor<Real>::zeros(out_shape);
  const auto& sv = s.data();
  auto& ov = out.data();
  const size_t n = ov.size();
  const Real eps2 = eps * eps;
  for (size_t i = 0; i < n; ++i) {
    const Real sr = sv[2 * i], si = sv[2 * i + 1];
    ov[i] = std::pow(std::sqrt(sr * sr + si * si + eps2), p);
  }
  auto sn = s.node(), on = out.node();
  detail::finish<Real>("complex_abs_pow", {s}, out, [sn, on, n, p, eps2] {
    if (on->grad.empty() || !sn->requires_grad) return;
    sn->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const Real sr = sn->value[2 * i], si = sn->value[2 * i + 1];
      const Real r = std::sqrt(sr * sr + si * si + eps2);
      const Real k = on->grad[i] * p * std::pow(r, p - Real(2));
      sn->grad[2 * i] += k * sr;
      sn->grad[2 * i + 1] += k * si;
    }
  });
  return out;
}

// z -> tanh(|z|) * z / |z|; z = 0 maps to 0 and |out| < 1 everywhere.
// tanh(r)/r and its derivative switch to series below r = 1e-3.
template <class Real>
Tensor<Real> tanh_radial_clamp(const Tensor<Real>& z) {
  detail::require_complex_pair("tanh_radial_clamp", z);
  auto out = Tensor<Real>::zeros(z.shape());
  const auto& zv = z.data();
  auto& ov = out.data();
  const size_t n = zv.size() / 2;
  const Real small = Real(1e-3);
  for (size_t i = 0; i < n; ++i) {
    const Real zr = zv[2 * i], zi = zv[2 * i + 1];
    const Real r = std::sqrt(zr * zr + zi * zi);
    Real s;
    if (r < small) {
      const Real r2 = r * r;
      s = Real(1) - r2 / Real(3) + Real(2) / Real(15) * r2 * r2;
    } else {
      s = std::tanh(r) / r;
    }
    ov[2 * i] = zr * s;
    ov[2 * i + 1] = zi * s;
  }
  auto zn = z.node(), on = out.node();
  detail::finish<Real>("tanh_radial_clamp", {z}, out, [zn, on, n, small] {
    if (on->grad.empty() || !zn->requires_grad) return;
    zn->ensure_grad();
    for (size_t i = 0; i < n; ++i) {
      const Real zr = zn->value[2 * i], zi = zn->value[2 * i + 1];
      const Real gr = on->grad[2 * i], gi = on->grad[2 * i + 1];
      const Real r2 = zr * zr + zi * zi;
      const Real r = std::sqrt(r2);
      Real s, q;  // q = s'(r)/r
      if (r < small) {
        s = Real(1) - r2 / Real(3) + Real(2) / Real(15) * r2 * r2;
        q = Real(-2) / Real(3) + Real(8) / Real(15) * r2;
      } else {
        const Real t = std::tanh(r);
        s = t / r;
        q = ((Real(1) - t * t) - s) / r2;
      }
      const Real common = zr * gr + zi * gi;
      zn->grad[2 * i] += s * gr + q * zr * common;
      zn->grad[2 * i + 1] += s * gi + q * zi * common;
    }
  });
  return out;
}

}  // namespace trident::nn
