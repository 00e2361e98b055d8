// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "trident/ops.hpp"
#include "trident/signal.hpp"

namespace trident::nn {

// Constant state of the istft_synthesize primitive for one (frames, out_len).
template <class Real>
struct IstftPlan {
  int frames = 0, bins = 0, fft = 0, hop = 0, pad = 0, frame_len = 0;
  int64_t out_len = 0;
  std::vector<Real> inv_cos, inv_sin;  // (bins, fft)
  std::vector<Real> window;            // frame_len
  std::vector<Real> inv_den;           // 1/den over the extended range, 0 where unused
};

template <class Real>
IstftPlan<Real> make_istft_plan(int frames, int64_t out_len,
                                const signal::StftConfig& cfg = {}) {
  IstftPlan<Real> plan;
  plan.frames = frames;
  plan.bins = cfg.bins();
  plan.fft = cfg.fft_size;
  plan.hop = cfg.hop;
  plan.frame_len = cfg.frame_len;
  plan.pad = cfg.frame_len / 2;
  plan.out_len = out_len;
  const auto& tab = signal::detail::dft_tables(cfg.fft_size);
  plan.inv_cos.assign(tab.inv_cos.begin(), tab.inv_cos.end());
  plan.inv_sin.assign(tab.inv_sin.begin(), tab.inv_sin.end());
  const auto win = signal::hann_periodic(cfg.frame_len);
  plan.window.assign(win.begin(), win.end());
  const int64_t ext_len = static_cast<int64_t>(frames - 1) * cfg.hop + cfg.fft_size;
  std::vector<double> den(static_cast<size_t>(ext_len), 0.0);
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < cfg.frame_len; ++i)
      den[static_cast<size_t>(static_cast<int64_t>(t) * cfg.hop + i)] +=
          win[static_cast<size_t>(i)] * win[static_cast<size_t>(i)];
  plan.inv_den.assign(static_cast<size_t>(ext_len), Real(0));
  for (int64_t n = 0; n < out_len; ++n) {
    const int64_t m = n + plan.pad;
    if (m >= ext_len || den[static_cast<size_t>(m)] <= 1e-10)
      throw std::runtime_error("istft_synthesize: zero normalization denominator at sample " +
                               std::to_string(n));
    plan.inv_den[static_cast<size_t>(m)] = Real(1.0 / den[static_cast<size_t>(m)]);
  }
  return plan;
}

// [T,F,2] -> [out_len]: Hermitian inverse DFT per frame, windowed overlap-add,
// squared-window normalization, trim of the reflect padding. Linear in S.
template <class Real>
Tensor<Real> istft_synthesize(const Tensor<Real>& s, const std::shared_ptr<IstftPlan<Real>>& plan) {
  if (s.rank() != 3 || s.dim(0) != plan->frames || s.dim(1) != plan->bins || s.dim(2) != 2)
    throw std::invalid_argument("istft_synthesize: spectrogram shape disagrees with plan");
  const int T = plan->frames, F = plan->bins, N = plan->fft;
  // split planes for the two GEMMs
  std::vector<Real> sr(static_cast<size_t>(T) * F), si(static_cast<size_t>(T) * F);
  const auto& sv = s.data();
  for (size_t i = 0; i < sr.size(); ++i) {
    sr[i] = sv[2 * i];
    si[i] = sv[2 * i + 1];
  }
  std::vector<Real> frames(static_cast<size_t>(T) * N);
  detail::gemm<Real>(false, false, T, N, F, sr.data(), plan->inv_cos.data(), frames.data(), false);
  detail::gemm<Real>(false, false, T, N, F, si.data(), plan->inv_sin.data(), frames.data(), true);
  auto out = Tensor<Real>::zeros({static_cast<int>(plan->out_len)});
  std::vector<Real> acc(plan->inv_den.size(), Real(0));
  for (int t = 0; t < T; ++t) {
    const int64_t base = static_cast<int64_t>(t) * plan->hop;
    const Real* fr = &frames[static_cast<size_t>(t) * N];
    for (int i = 0; i < plan->frame_len; ++i)
      acc[static_cast<size_t>(base + i)] += fr[i] * plan->window[static_cast<size_t>(i)];
  }
  auto& ov = out.data();
  for (int64_t n = 0; n < plan->out_len; ++n) {
    const int64_t m = n + plan->pad;
    ov[static_cast<size_t>(n)] = acc[static_cast<size_t>(m)] * plan->inv_den[static_cast<size_t>(m)];
  }
  auto sn = s.node(), on = out.node();
  detail::finish<Real>("istft_synthesize", {s}, out, [sn, on, plan] {
    if (on->grad.empty() || !sn->requires_grad) return;
    sn->ensure_grad();
    const int T = plan->frames, F = plan->bins, N = plan->fft;
    // adjoint of crop + normalize + overlap-add: scatter into frame grads
    std::vector<Real> dframes(static_cast<size_t>(T) * N, Real(0));
    for (int t = 0; t < T; ++t) {
      const int64_t base = static_cast<int64_t>(t) * plan->hop;
      Real* df = &dframes[static_cast<size_t>(t) * N];
      for (int i = 0; i < plan->frame_len; ++i) {
        const int64_t m = base + i;
        const int64_t n = m - plan->pad;
        if (n < 0 || n >= plan->out_len) continue;
        df[i] = on->grad[static_cast<size_t>(n)] * plan->inv_den[static_cast<size_t>(m)] *
                plan->window[static_cast<size_t>(i)];
      }
    }
    // adjoint of the inverse-DFT GEMMs
    std::vector<Real> dsr(static_cast<size_t>(T) * F), dsi(static_cast<size_t>(T) * F);
    detail::gemm<Real>(false, true, T, F, N, dframes.data(), plan->inv_cos.data(), dsr.data(),
                       false);
    detail::gemm<Real>(false, true, T, F, N, dframes.data(), plan->inv_sin.data(), dsi.data(),
                       false);
    for (size_t i = 0; i < dsr.size(); ++i) {
      sn->grad[2 * i] += dsr[i];
      sn->grad[2 * i + 1] += dsi[i];
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Boundary conversions between the double DSP types and Real tensors.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> spec_to_tensor(const signal::ComplexSpectrogram& s) {
  auto out = Tensor<Real>::zeros({s.frames, s.bins, 2});
  auto& ov = out.data();
  for (size_t i = 0; i < s.re.size(); ++i) {
    ov[2 * i] = static_cast<Real>(s.re[i]);
    ov[2 * i + 1] = static_cast<Real>(s.im[i]);
  }
  return out;
}

template <class Real>
signal::ComplexSpectrogram tensor_to_spec(const Tensor<Real>& t,
                                          const signal::StftConfig& cfg = {}) {
  if (t.rank() != 3 || t.dim(2) != 2)
    throw std::invalid_argument("tensor_to_spec: expects [T,F,2]");
  signal::ComplexSpectrogram s;
  s.frames = t.dim(0);
  s.bins = t.dim(1);
  s.cfg = cfg;
  s.re.resize(static_cast<size_t>(s.frames) * s.bins);
  s.im.resize(s.re.size());
  const auto& tv = t.data();
  for (size_t i = 0; i < s.re.size(); ++i) {
    s.re[i] = static_cast<double>(tv[2 * i]);
    s.im[i] = static_cast<double>(tv[2 * i + 1]);
  }
  return s;
}

template <class Real>
Tensor<Real> wave_to_tensor(const signal::Waveform& w) {
  auto out = Tensor<Real>::zeros({static_cast<int>(w.size())});
  auto& ov = out.data();
  for (int64_t i = 0; i < w.size(); ++i) ov[static_cast<size_t>(i)] = static_cast<Real>(w.samples[static_cast<size_t>(i)]);
  return out;
}

template <class Real>
signal::Waveform tensor_to_wave(const Tensor<Real>& t) {
  signal::Waveform w;
  w.samples.resize(static_cast<size_t>(t.numel()));
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = static_cast<double>(t.data()[i]);
  return w;
}

}  // namespace trident::nn
