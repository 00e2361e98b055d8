// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fstream>
#include <random>
#include <sstream>

#include "trident/signal.hpp"

namespace trident::data {

enum class NoiseKind { white, pink, babble };

inline const char* noise_kind_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble: return "babble";
  }
  throw std::invalid_argument("noise_kind_name: unknown kind");
}

inline NoiseKind noise_kind_from(const std::string& s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble") return NoiseKind::babble;
  throw std::invalid_argument("unknown noise kind '" + s + "'");
}

struct MixSpec {
  double snr_db = 0.0;
  uint64_t clean_seed = 0;
  uint64_t noise_seed = 0;
  NoiseKind kind = NoiseKind::white;
  double duration_s = 3.0;
};

struct SynthOptions {
  double fixed_f0 = 0.0;  // > 0 pins the fundamental (test hook)
  bool resonators = true;
  bool envelope = true;
};

namespace detail {

inline double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline void normalize_rms(std::vector<double>& v, double target) {
  const double r = rms(v);
  if (r == 0.0) throw std::logic_error("synth: produced an all-zero signal");
  const double g = target / r;
  for (double& x : v) x *= g;
}

struct Resonator {
  double b0 = 1.0, a1 = 0.0, a2 = 0.0;
  double y1 = 0.0, y2 = 0.0;

  Resonator(double fc, double bw, double fs) {
    const double r = std::exp(-M_PI * bw / fs);
    a1 = 2.0 * r * std::cos(2.0 * M_PI * fc / fs);
    a2 = -r * r;
    b0 = (1.0 - r);  // keeps the peak gain in a sane range
  }

  double step(double x) {
    const double y = b0 * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace detail

// Harmonic source with a wandering fundamental, two vocal-tract-style
// resonators, and a syllabic on/off envelope. RMS pinned to 0.1.
inline signal::Waveform synth_clean(uint64_t seed, double duration_s,
                                    const SynthOptions& opts = {}) {
  const double fs = signal::kSampleRate;
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * fs));
  std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
  std::uniform_real_distribution<double> uf(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  double f0 = opts.fixed_f0 > 0.0 ? opts.fixed_f0 : 100.0 + 150.0 * uf(rng);
  detail::Resonator res1(300.0 + 500.0 * uf(rng), 80.0 + 120.0 * uf(rng), fs);
  detail::Resonator res2(1000.0 + 1500.0 * uf(rng), 120.0 + 180.0 * uf(rng), fs);

  // syllable plan: 2-6 Hz periods, voiced fraction with silence gaps
  std::vector<double> env(static_cast<size_t>(n), 0.0);
  int64_t pos = 0;
  while (pos < n) {
    const double period = 1.0 / (2.0 + 4.0 * uf(rng));
    const double voiced = 0.55 + 0.25 * uf(rng);
    const int64_t syl = std::max<int64_t>(1, static_cast<int64_t>(period * voiced * fs));
    const int64_t gap = static_cast<int64_t>(period * (1.0 - voiced) * fs);
    for (int64_t i = 0; i < syl && pos + i < n; ++i) {
      const double ph = static_cast<double>(i) / static_cast<double>(syl);
      env[static_cast<size_t>(pos + i)] = std::sin(M_PI * ph) * std::sin(M_PI * ph);
    }
    pos += syl + gap;
  }
  if (!opts.envelope) std::fill(env.begin(), env.end(), 1.0);

  std::vector<double> out(static_cast<size_t>(n));
  double phase = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (opts.fixed_f0 <= 0.0) {
      f0 += 0.0005 * (180.0 - f0) + 0.5 * gauss(rng);
      f0 = std::clamp(f0, 80.0, 300.0);
    }
    phase += 2.0 * M_PI * f0 / fs;
    if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
    double s = 0.0;
    for (int k = 1; k <= 8; ++k) {
      if (k * f0 >= 7600.0) break;
      s += std::sin(k * phase) / k;
    }
    if (opts.resonators) s = res2.step(res1.step(s));
    out[static_cast<size_t>(i)] = s * env[static_cast<size_t>(i)];
  }
  detail::normalize_rms(out, 0.1);
  signal::Waveform w;
  w.samples = std::move(out);
  return w;
}

namespace detail {

// First-order pole/zero ladder approximating a -3 dB/octave magnitude slope
// between roughly 30 Hz and 5.6 kHz at fs = 16 kHz.
inline void pinking_filter(std::vector<double>& x) {
  const double fs = signal::kSampleRate;
  const double poles_hz[5] = {31.62, 100.0, 316.2, 1000.0, 3162.0};
  const double zeros_hz[5] = {56.23, 177.8, 562.3, 1778.0, 5623.0};
  double ap[5], az[5];
  for (int k = 0; k < 5; ++k) {
    ap[k] = std::exp(-2.0 * M_PI * poles_hz[k] / fs);
    az[k] = std::exp(-2.0 * M_PI * zeros_hz[k] / fs);
  }
  double xs[5] = {0, 0, 0, 0, 0}, ys[5] = {0, 0, 0, 0, 0};
  for (double& v : x) {
    double s = v;
    for (int k = 0; k < 5; ++k) {
      const double y = s - az[k] * xs[k] + ap[k] * ys[k];
      xs[k] = s;
      ys[k] = y;
      s = y;
    }
    v = s;
  }
}

}  // namespace detail

inline signal::Waveform synth_noise(uint64_t seed, NoiseKind kind, double duration_s) {
  const int64_t n = static_cast<int64_t>(std::llround(duration_s * signal::kSampleRate));
  signal::Waveform w;
  switch (kind) {
    case NoiseKind::white: {
      std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      w.samples.resize(static_cast<size_t>(n));
      for (auto& v : w.samples) v = gauss(rng);
      break;
    }
    case NoiseKind::pink: {
      std::mt19937 rng(static_cast<uint32_t>(seed ^ (seed >> 32)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      w.samples.resize(static_cast<size_t>(n));
      for (auto& v : w.samples) v = gauss(rng);
      detail::pinking_filter(w.samples);
      break;
    }
    case NoiseKind::babble: {
      w.samples.assign(static_cast<size_t>(n), 0.0);
      for (uint64_t k = 0; k < 6; ++k) {
        auto talker = synth_clean(seed * 6007 + k * 131 + 1, duration_s);
        for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += talker.samples[i];
      }
      break;
    }
    default:
      throw std::invalid_argument("synth_noise: unknown kind");
  }
  detail::normalize_rms(w.samples, 0.1);
  return w;
}

// clean + noise scaled so the achieved SNR is exact by construction.
inline signal::Waveform mix_at_snr(const signal::Waveform& clean, const signal::Waveform& noise,
                                   double snr_db) {
  if (clean.size() != noise.size()) throw std::invalid_argument("mix_at_snr: lengths disagree");
  double pc = 0.0;
  for (double v : clean.samples) pc += v * v;
  double pn = 0.0;
  for (double v : noise.samples) pn += v * v;
  if (pc == 0.0 || pn == 0.0) throw std::invalid_argument("mix_at_snr: zero-power input");
  const double g = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  signal::Waveform out = clean;
  for (size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += g * noise.samples[i];
  return out;
}

struct TrainPair {
  signal::Waveform noisy, clean;
  double gain = 1.0;  // applied to both when the mixture peaked above 1
};

// Renders a pair; if the mixture clips, both sides are rescaled together so
// the SNR and the target correspondence survive.
inline TrainPair render_pair(const MixSpec& spec) {
  TrainPair pair;
  pair.clean = synth_clean(spec.clean_seed, spec.duration_s);
  auto noise = synth_noise(spec.noise_seed, spec.kind, spec.duration_s);
  pair.noisy = mix_at_snr(pair.clean, noise, spec.snr_db);
  double peak = 0.0;
  for (double v : pair.noisy.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    pair.gain = 1.0 / peak;
    for (auto& v : pair.noisy.samples) v *= pair.gain;
    for (auto& v : pair.clean.samples) v *= pair.gain;
  }
  return pair;
}

inline std::vector<MixSpec> make_corpus(uint64_t seed, int count, double snr_lo, double snr_hi,
                                        const std::vector<NoiseKind>& kinds, double duration_s) {
  if (kinds.empty()) throw std::invalid_argument("make_corpus: no noise kinds");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> snr(snr_lo, snr_hi);
  std::vector<MixSpec> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    MixSpec m;
    m.clean_seed = rng();
    m.noise_seed = rng();
    m.kind = kinds[static_cast<size_t>(rng() % kinds.size())];
    m.snr_db = snr(rng);
    m.duration_s = duration_s;
    out.push_back(m);
  }
  return out;
}

// VoiceBank-style discrete SNR levels drawn uniformly.
inline std::vector<MixSpec> make_corpus_discrete(uint64_t seed, int count,
                                                 const std::vector<NoiseKind>& kinds,
                                                 double duration_s) {
  static const double levels[4] = {0.0, 5.0, 10.0, 15.0};
  auto out = make_corpus(seed, count, 0.0, 1.0, kinds, duration_s);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  for (auto& m : out) m.snr_db = levels[rng() % 4];
  return out;
}

// Line-oriented records: clean_seed noise_seed kind snr_db
inline void write_manifest(const std::vector<MixSpec>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  for (const auto& m : corpus)
    out << m.clean_seed << " " << m.noise_seed << " " << noise_kind_name(m.kind) << " " << m.snr_db
        << "\n";
  if (!out) throw std::runtime_error("write_manifest: short write to " + path);
}

inline std::vector<MixSpec> read_manifest(const std::string& path, double duration_s = 3.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  std::vector<MixSpec> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    MixSpec m;
    std::string kind;
    if (!(ss >> m.clean_seed >> m.noise_seed >> kind >> m.snr_db))
      throw std::runtime_error("read_manifest: malformed line '" + line + "'");
    m.kind = noise_kind_from(kind);
    m.duration_s = duration_s;
    out.push_back(m);
  }
  return out;
}

}  // namespace trident::data
