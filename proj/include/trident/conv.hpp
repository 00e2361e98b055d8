// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "trident/ops.hpp"

namespace trident::nn {

namespace detail {

struct Conv2dDims {
  int in_t, in_f, c_in, k_t, k_f, c_out, stride_t, stride_f, pad_t, pad_f, out_t, out_f;
};

inline Conv2dDims conv2d_dims(const Shape& x, const Shape& w, int stride_t, int stride_f, int pad_t,
                              int pad_f) {
  Conv2dDims d;
  d.in_t = x[0];
  d.in_f = x[1];
  d.c_in = x[2];
  d.k_t = w[0];
  d.k_f = w[1];
  if (w[2] != d.c_in) throw std::invalid_argument("conv2d: input channel extents disagree");
  d.c_out = w[3];
  d.stride_t = stride_t;
  d.stride_f = stride_f;
  d.pad_t = pad_t;
  d.pad_f = pad_f;
  d.out_t = (d.in_t + 2 * pad_t - d.k_t) / stride_t + 1;
  d.out_f = (d.in_f + 2 * pad_f - d.k_f) / stride_f + 1;
  if (d.out_t <= 0 || d.out_f <= 0) throw std::invalid_argument("conv2d: empty output");
  return d;
}

// Builds im2col rows for output rows [t0, t1): ((t1-t0)*out_f, k_t*k_f*c_in).
template <class Real>
inline void im2col_rows(const Real* x, const Conv2dDims& d, int t0, int t1, Real* cols) {
  const int patch = d.k_t * d.k_f * d.c_in;
  for (int ot = t0; ot < t1; ++ot) {
    for (int of = 0; of < d.out_f; ++of) {
      Real* row = cols + (static_cast<int64_t>(ot - t0) * d.out_f + of) * patch;
      int idx = 0;
      for (int kt = 0; kt < d.k_t; ++kt) {
        const int it = ot * d.stride_t + kt - d.pad_t;
        for (int kf = 0; kf < d.k_f; ++kf) {
          const int fi = of * d.stride_f + kf - d.pad_f;
          if (it < 0 || it >= d.in_t || fi < 0 || fi >= d.in_f) {
            std::fill(row + idx, row + idx + d.c_in, Real(0));
          } else {
            const Real* src = x + (static_cast<int64_t>(it) * d.in_f + fi) * d.c_in;
            std::copy(src, src + d.c_in, row + idx);
          }
          idx += d.c_in;
        }
      }
    }
  }
}

// Scatter-adds col gradients for output rows [t0, t1) back into dx.
template <class Real>
inline void col2im_rows(const Real* cols, const Conv2dDims& d, int t0, int t1, Real* dx) {
  const int patch = d.k_t * d.k_f * d.c_in;
  for (int ot = t0; ot < t1; ++ot) {
    for (int of = 0; of < d.out_f; ++of) {
      const Real* row = cols + (static_cast<int64_t>(ot - t0) * d.out_f + of) * patch;
      int idx = 0;
      for (int kt = 0; kt < d.k_t; ++kt) {
        const int it = ot * d.stride_t + kt - d.pad_t;
        for (int kf = 0; kf < d.k_f; ++kf) {
          const int fi = of * d.stride_f + kf - d.pad_f;
          if (it >= 0 && it < d.in_t && fi >= 0 && fi < d.in_f) {
            Real* dst = dx + (static_cast<int64_t>(it) * d.in_f + fi) * d.c_in;
            for (int c = 0; c < d.c_in; ++c) dst[c] += row[idx + c];
          }
          idx += d.c_in;
        }
      }
    }
  }
}

inline int conv_chunk_rows(const Conv2dDims& d) {
  const int64_t patch = static_cast<int64_t>(d.k_t) * d.k_f * d.c_in;
  const int64_t budget = 1 << 21;  // elements per chunk buffer
  int rows = static_cast<int>(std::max<int64_t>(1, budget / std::max<int64_t>(1, patch * d.out_f)));
  return std::min(rows, d.out_t);
}

}  // namespace detail

// x[T,F,Cin] * w[kT,kF,Cin,Cout] (+ b[Cout]) with zero padding.
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b,
                    int stride_t = 1, int stride_f = 1, int pad_t = 0, int pad_f = 0) {
  if (x.rank() != 3 || w.rank() != 4) throw std::invalid_argument("conv2d: expects x rank 3, w rank 4");
  const auto d = detail::conv2d_dims(x.shape(), w.shape(), stride_t, stride_f, pad_t, pad_f);
  if (b.defined() && (b.rank() != 1 || b.dim(0) != d.c_out))
    throw std::invalid_argument("conv2d: bias extent disagrees with output channels");
  auto out = Tensor<Real>::zeros({d.out_t, d.out_f, d.c_out});
  const int patch = d.k_t * d.k_f * d.c_in;
  const int chunk = detail::conv_chunk_rows(d);
  std::vector<Real> cols(static_cast<size_t>(chunk) * d.out_f * patch);
  for (int t0 = 0; t0 < d.out_t; t0 += chunk) {
    const int t1 = std::min(d.out_t, t0 + chunk);
    detail::im2col_rows(x.data().data(), d, t0, t1, cols.data());
    detail::gemm<Real>(false, false, (t1 - t0) * d.out_f, d.c_out, patch, cols.data(),
                       w.data().data(),
                       out.data().data() + static_cast<int64_t>(t0) * d.out_f * d.c_out, false);
  }
  if (b.defined()) {
    auto& ov = out.data();
    const auto& bv = b.data();
    const int64_t rows = out.numel() / d.c_out;
    for (int64_t r = 0; r < rows; ++r)
      for (int c = 0; c < d.c_out; ++c) ov[r * d.c_out + c] += bv[c];
  }
  auto xn = x.node(), wn = w.node(), on = out.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  std::vector<Tensor<Real>> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  auto* tp = current_tape<Real>();
  if (tp) {
    if (tp->finite_checks) detail::audit_finite("conv2d", out);
    bool any = false;
    for (auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      out.set_requires_grad(true);
      tp->record("conv2d", inputs, out, [xn, wn, bnode, on, d, patch] {
        if (on->grad.empty()) return;
        const int chunk = detail::conv_chunk_rows(d);
        std::vector<Real> cols(static_cast<size_t>(chunk) * d.out_f * patch);
        std::vector<Real> dcols;
        if (xn->requires_grad) {
          xn->ensure_grad();
          dcols.resize(cols.size());
        }
        if (wn->requires_grad) wn->ensure_grad();
        for (int t0 = 0; t0 < d.out_t; t0 += chunk) {
          const int t1 = std::min(d.out_t, t0 + chunk);
          const Real* g = on->grad.data() + static_cast<int64_t>(t0) * d.out_f * d.c_out;
          if (wn->requires_grad || xn->requires_grad)
            detail::im2col_rows(xn->value.data(), d, t0, t1, cols.data());
          if (wn->requires_grad)
            detail::gemm<Real>(true, false, patch, d.c_out, (t1 - t0) * d.out_f, cols.data(), g,
                               wn->grad.data(), true);
          if (xn->requires_grad) {
            detail::gemm<Real>(false, true, (t1 - t0) * d.out_f, patch, d.c_out, g,
                               wn->value.data(), dcols.data(), false);
            detail::col2im_rows(dcols.data(), d, t0, t1, xn->grad.data());
          }
        }
        if (bnode && bnode->requires_grad) {
          bnode->ensure_grad();
          const int64_t rows = static_cast<int64_t>(d.out_t) * d.out_f;
          for (int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < d.c_out; ++c) bnode->grad[c] += on->grad[r * d.c_out + c];
        }
      });
    }
  }
  return out;
}

// Per-channel KxK convolution, stride 1, same (zero) padding. Odd kernels only.
template <class Real>
Tensor<Real> depthwise_conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& b) {
  if (x.rank() != 3 || w.rank() != 3) throw std::invalid_argument("depthwise_conv2d: bad ranks");
  const int T = x.dim(0), F = x.dim(1), C = x.dim(2);
  const int kt = w.dim(0), kf = w.dim(1);
  if (w.dim(2) != C) throw std::invalid_argument("depthwise_conv2d: channel extents disagree");
  if (kt % 2 == 0 || kf % 2 == 0)
    throw std::invalid_argument("depthwise_conv2d: even kernel size makes same padding ambiguous");
  if (b.defined() && (b.rank() != 1 || b.dim(0) != C))
    throw std::invalid_argument("depthwise_conv2d: bias extent disagrees");
  const int pt = kt / 2, pf = kf / 2;
  auto out = Tensor<Real>::zeros({T, F, C});
  const auto &xv = x.data(), &wv = w.data();
  auto& ov = out.data();
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) {
      Real* dst = &ov[(static_cast<int64_t>(t) * F + f) * C];
      for (int a = 0; a < kt; ++a) {
        const int it = t + a - pt;
        if (it < 0 || it >= T) continue;
        for (int bb = 0; bb < kf; ++bb) {
          const int jf = f + bb - pf;
          if (jf < 0 || jf >= F) continue;
          const Real* src = &xv[(static_cast<int64_t>(it) * F + jf) * C];
          const Real* ker = &wv[(static_cast<int64_t>(a) * kf + bb) * C];
          for (int c = 0; c < C; ++c) dst[c] += src[c] * ker[c];
        }
      }
      if (b.defined()) {
        const auto& bv = b.data();
        for (int c = 0; c < C; ++c) dst[c] += bv[c];
      }
    }
  auto xn = x.node(), wn = w.node(), on = out.node();
  auto bnode = b.defined() ? b.node() : nullptr;
  std::vector<Tensor<Real>> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  auto* tp = current_tape<Real>();
  if (tp) {
    if (tp->finite_checks) detail::audit_finite("depthwise_conv2d", out);
    bool any = false;
    for (auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      out.set_requires_grad(true);
      tp->record("depthwise_conv2d", inputs, out, [xn, wn, bnode, on, T, F, C, kt, kf, pt, pf] {
        if (on->grad.empty()) return;
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bnode && bnode->requires_grad) bnode->ensure_grad();
        for (int t = 0; t < T; ++t)
          for (int f = 0; f < F; ++f) {
            const Real* g = &on->grad[(static_cast<int64_t>(t) * F + f) * C];
            for (int a = 0; a < kt; ++a) {
              const int it = t + a - pt;
              if (it < 0 || it >= T) continue;
              for (int bb = 0; bb < kf; ++bb) {
                const int jf = f + bb - pf;
                if (jf < 0 || jf >= F) continue;
                const int64_t xi = (static_cast<int64_t>(it) * F + jf) * C;
                const int64_t wi = (static_cast<int64_t>(a) * kf + bb) * C;
                if (xn->requires_grad)
                  for (int c = 0; c < C; ++c) xn->grad[xi + c] += g[c] * wn->value[wi + c];
                if (wn->requires_grad)
                  for (int c = 0; c < C; ++c) wn->grad[wi + c] += g[c] * xn->value[xi + c];
              }
            }
            if (bnode && bnode->requires_grad)
              for (int c = 0; c < C; ++c) bnode->grad[c] += g[c];
          }
      });
    }
  }
  return out;
}

// Depthwise KxK then pointwise 1x1, the standard separable composition.
template <class Real>
Tensor<Real> depthwise_separable_conv2d(const Tensor<Real>& x, const Tensor<Real>& dw_w,
                                        const Tensor<Real>& dw_b, const Tensor<Real>& pw_w,
                                        const Tensor<Real>& pw_b) {
  auto mid = depthwise_conv2d(x, dw_w, dw_b);
  return conv2d(mid, pw_w, pw_b, 1, 1, 0, 0);
}

}  // namespace trident::nn
