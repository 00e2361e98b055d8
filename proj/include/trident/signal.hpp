// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace trident::signal {

constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

inline void require_rate(const Waveform& w, const char* who) {
  if (w.sample_rate != kSampleRate)
    throw std::invalid_argument(std::string(who) + ": sample rate must be 16000 Hz, got " +
                                std::to_string(w.sample_rate));
}

struct StftConfig {
  int frame_len = 320;  // 20 ms
  int hop = 160;        // 10 ms
  int fft_size = 324;

  int bins() const { return fft_size / 2 + 1; }
};

struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> re, im;  // row-major (frames, bins)
  StftConfig cfg;

  double& real_at(int t, int f) { return re[static_cast<size_t>(t) * bins + f]; }
  double& imag_at(int t, int f) { return im[static_cast<size_t>(t) * bins + f]; }
  double real_at(int t, int f) const { return re[static_cast<size_t>(t) * bins + f]; }
  double imag_at(int t, int f) const { return im[static_cast<size_t>(t) * bins + f]; }
};

// Periodic Hann, w[n] = 0.5 (1 - cos(2 pi n / N)).
inline std::vector<double> hann_periodic(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

namespace detail {

struct DftTables {
  // analysis: re[f*n], im[f*n] for X_f = sum_n x_n e^{-j 2 pi f n / N}
  std::vector<double> fwd_cos, fwd_sin;
  // synthesis row weights fold Hermitian symmetry and 1/N.
  std::vector<double> inv_cos, inv_sin;  // (bins, N): x_n = sum_f Xr*inv_cos + Xi*inv_sin
  int n = 0, bins = 0;
};

inline const DftTables& dft_tables(int n) {
  static std::mutex mu;
  static std::map<int, DftTables> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  DftTables t;
  t.n = n;
  t.bins = n / 2 + 1;
  t.fwd_cos.resize(static_cast<size_t>(t.bins) * n);
  t.fwd_sin.resize(static_cast<size_t>(t.bins) * n);
  t.inv_cos.resize(static_cast<size_t>(t.bins) * n);
  t.inv_sin.resize(static_cast<size_t>(t.bins) * n);
  for (int f = 0; f < t.bins; ++f) {
    const double wgt = (f == 0 || 2 * f == n) ? 1.0 : 2.0;
    for (int i = 0; i < n; ++i) {
      const double ang = 2.0 * M_PI * f * i / n;
      t.fwd_cos[static_cast<size_t>(f) * n + i] = std::cos(ang);
      t.fwd_sin[static_cast<size_t>(f) * n + i] = -std::sin(ang);
      t.inv_cos[static_cast<size_t>(f) * n + i] = wgt * std::cos(ang) / n;
      t.inv_sin[static_cast<size_t>(f) * n + i] = -wgt * std::sin(ang) / n;
    }
  }
  return cache.emplace(n, std::move(t)).first->second;
}

inline int64_t reflect_index(int64_t j, int64_t len) {
  if (j < 0) j = -j;
  if (j >= len) j = 2 * (len - 1) - j;
  return j;
}

}  // namespace detail

inline int stft_frames_for_length(int64_t len, const StftConfig& cfg = {}) {
  return static_cast<int>((len + cfg.hop - 1) / cfg.hop);
}

// Reflect-padded framing, periodic Hann, zero-padding to fft_size.
inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  require_rate(w, "stft");
  const int64_t len = w.size();
  if (len < cfg.frame_len)
    throw std::invalid_argument("stft: waveform shorter than one frame (" + std::to_string(len) +
                                " < " + std::to_string(cfg.frame_len) + ")");
  const int T = stft_frames_for_length(len, cfg);
  const int pad = cfg.frame_len / 2;
  const auto window = hann_periodic(cfg.frame_len);
  const auto& tab = detail::dft_tables(cfg.fft_size);
  ComplexSpectrogram out;
  out.frames = T;
  out.bins = cfg.bins();
  out.cfg = cfg;
  out.re.assign(static_cast<size_t>(T) * out.bins, 0.0);
  out.im.assign(static_cast<size_t>(T) * out.bins, 0.0);
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size), 0.0);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < cfg.frame_len; ++i) {
      const int64_t j = detail::reflect_index(static_cast<int64_t>(t) * cfg.hop + i - pad, len);
      frame[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(j)] * window[static_cast<size_t>(i)];
    }
    for (int f = 0; f < out.bins; ++f) {
      const double* c = &tab.fwd_cos[static_cast<size_t>(f) * cfg.fft_size];
      const double* s = &tab.fwd_sin[static_cast<size_t>(f) * cfg.fft_size];
      double re = 0.0, im = 0.0;
      for (int i = 0; i < cfg.frame_len; ++i) {
        re += frame[static_cast<size_t>(i)] * c[i];
        im += frame[static_cast<size_t>(i)] * s[i];
      }
      out.real_at(t, f) = re;
      out.imag_at(t, f) = im;
    }
  }
  return out;
}

// Windowed overlap-add normalized by the summed squared window.
inline Waveform istft(const ComplexSpectrogram& spec, int64_t target_len) {
  const StftConfig& cfg = spec.cfg;
  if (spec.bins != cfg.bins())
    throw std::invalid_argument("istft: spectrogram metadata disagrees with configuration");
  const int T = spec.frames;
  const int pad = cfg.frame_len / 2;
  const auto window = hann_periodic(cfg.frame_len);
  const auto& tab = detail::dft_tables(cfg.fft_size);
  const int64_t ext_len = static_cast<int64_t>(T - 1) * cfg.hop + cfg.fft_size;
  std::vector<double> acc(static_cast<size_t>(ext_len), 0.0), den(static_cast<size_t>(ext_len), 0.0);
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < cfg.fft_size; ++i) {
      double v = 0.0;
      for (int f = 0; f < spec.bins; ++f) {
        v += spec.real_at(t, f) * tab.inv_cos[static_cast<size_t>(f) * cfg.fft_size + i] +
             spec.imag_at(t, f) * tab.inv_sin[static_cast<size_t>(f) * cfg.fft_size + i];
      }
      frame[static_cast<size_t>(i)] = v;
    }
    const int64_t base = static_cast<int64_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.frame_len; ++i) {
      const double wv = window[static_cast<size_t>(i)];
      acc[static_cast<size_t>(base + i)] += frame[static_cast<size_t>(i)] * wv;
      den[static_cast<size_t>(base + i)] += wv * wv;
    }
  }
  Waveform out;
  out.samples.resize(static_cast<size_t>(target_len));
  for (int64_t n = 0; n < target_len; ++n) {
    const int64_t m = n + pad;
    if (m >= ext_len || den[static_cast<size_t>(m)] <= 1e-10)
      throw std::runtime_error("istft: zero normalization denominator at sample " +
                               std::to_string(n));
    out.samples[static_cast<size_t>(n)] = acc[static_cast<size_t>(m)] / den[static_cast<size_t>(m)];
  }
  return out;
}

// z -> |z|^p * z / |z|; zero stays zero (guard 1e-12).
inline ComplexSpectrogram power_compress(const ComplexSpectrogram& in, double p = 0.3) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("power_compress: p must lie in (0, 1]");
  ComplexSpectrogram out = in;
  for (size_t i = 0; i < out.re.size(); ++i) {
    const double r = std::hypot(in.re[i], in.im[i]);
    if (r < 1e-12) {
      out.re[i] = 0.0;
      out.im[i] = 0.0;
    } else {
      const double c = std::pow(r, p - 1.0);
      out.re[i] = in.re[i] * c;
      out.im[i] = in.im[i] * c;
    }
  }
  return out;
}

inline ComplexSpectrogram power_decompress(const ComplexSpectrogram& in, double p = 0.3) {
  if (p <= 0.0 || p > 1.0) throw std::invalid_argument("power_decompress: p must lie in (0, 1]");
  ComplexSpectrogram out = in;
  for (size_t i = 0; i < out.re.size(); ++i) {
    const double r = std::hypot(in.re[i], in.im[i]);
    if (r < 1e-12) {
      out.re[i] = 0.0;
      out.im[i] = 0.0;
    } else {
      const double c = std::pow(r, 1.0 / p - 1.0);
      out.re[i] = in.re[i] * c;
      out.im[i] = in.im[i] * c;
    }
  }
  return out;
}

// Elementwise complex product; the mask rides in a spectrogram-shaped carrier.
inline ComplexSpectrogram apply_complex_mask(const ComplexSpectrogram& noisy,
                                             const ComplexSpectrogram& mask) {
  if (noisy.frames != mask.frames || noisy.bins != mask.bins)
    throw std::invalid_argument("apply_complex_mask: shape mismatch");
  ComplexSpectrogram out = noisy;
  for (size_t i = 0; i < out.re.size(); ++i) {
    const double xr = noisy.re[i], xi = noisy.im[i];
    const double mr = mask.re[i], mi = mask.im[i];
    out.re[i] = mr * xr - mi * xi;
    out.im[i] = mr * xi + mi * xr;
  }
  return out;
}

// Scale-invariant SNR in dB, bounded to [-60, 60].
inline double si_snr_db(const Waveform& est, const Waveform& ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_snr: lengths disagree");
  double rr = 0.0, er = 0.0;
  for (int64_t i = 0; i < ref.size(); ++i) {
    rr += ref.samples[static_cast<size_t>(i)] * ref.samples[static_cast<size_t>(i)];
    er += est.samples[static_cast<size_t>(i)] * ref.samples[static_cast<size_t>(i)];
  }
  if (rr == 0.0) throw std::invalid_argument("si_snr: reference is all-zero");
  const double alpha = er / rr;
  double ps = 0.0, pe = 0.0;
  for (int64_t i = 0; i < ref.size(); ++i) {
    const double st = alpha * ref.samples[static_cast<size_t>(i)];
    const double e = est.samples[static_cast<size_t>(i)] - st;
    ps += st * st;
    pe += e * e;
  }
  if (pe == 0.0 || ps / pe >= 1e6) return 60.0;
  if (ps == 0.0) return -60.0;
  return std::clamp(10.0 * std::log10(ps / pe), -60.0, 60.0);
}

}  // namespace trident::signal
