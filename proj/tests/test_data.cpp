// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <random>

#include "trident/data.hpp"
#include "trident/wav.hpp"

using namespace trident;
using namespace trident::data;
using Catch::Approx;

namespace {

// Welch-style averaged power spectrum: Hann segments, 50% overlap, naive DFT.
std::vector<double> welch_psd(const std::vector<double>& x, int seg = 512) {
  const int hop = seg / 2;
  const int bins = seg / 2 + 1;
  std::vector<double> win(static_cast<size_t>(seg));
  for (int i = 0; i < seg; ++i) win[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / seg));
  std::vector<double> psd(static_cast<size_t>(bins), 0.0);
  int count = 0;
  for (size_t start = 0; start + static_cast<size_t>(seg) <= x.size(); start += static_cast<size_t>(hop)) {
    for (int f = 0; f < bins; ++f) {
      std::complex<double> acc(0.0, 0.0);
      for (int i = 0; i < seg; ++i)
        acc += x[start + static_cast<size_t>(i)] * win[static_cast<size_t>(i)] *
               std::exp(std::complex<double>(0.0, -2.0 * M_PI * f * i / seg));
      psd[static_cast<size_t>(f)] += std::norm(acc);
    }
    ++count;
  }
  for (auto& v : psd) v /= count;
  return psd;
}

double bin_hz(int f, int seg = 512) { return static_cast<double>(f) * signal::kSampleRate / seg; }

}  // namespace

TEST_CASE("synth_clean basics") {
  auto w = synth_clean(42, 3.0);
  REQUIRE(w.size() == 48000);
  double rms = 0.0;
  for (double v : w.samples) rms += v * v;
  rms = std::sqrt(rms / 48000.0);
  REQUIRE(rms == Approx(0.1).margin(1e-6));

  auto w2 = synth_clean(42, 3.0);
  REQUIRE(w.samples == w2.samples);
  auto w3 = synth_clean(43, 3.0);
  REQUIRE(w.samples != w3.samples);
}

TEST_CASE("constant-f0 override puts the spectral peak at f0") {
  SynthOptions opts;
  opts.fixed_f0 = 220.0;
  opts.resonators = false;
  opts.envelope = false;
  auto w = synth_clean(7, 2.0, opts);
  // DFT oracle over a long window: peak bin within +-1 of 220 Hz
  const int n = 16000;
  const int bins = 800;
  double best = -1.0;
  int peak = 0;
  for (int f = 50; f < bins; ++f) {  // skip DC region
    std::complex<double> acc(0.0, 0.0);
    for (int i = 0; i < n; ++i)
      acc += w.samples[static_cast<size_t>(i)] *
             std::exp(std::complex<double>(0.0, -2.0 * M_PI * f * i / n));
    if (std::norm(acc) > best) {
      best = std::norm(acc);
      peak = f;
    }
  }
  const double hz_per_bin = static_cast<double>(signal::kSampleRate) / n;  // 1 Hz
  REQUIRE(std::abs(peak * hz_per_bin - 220.0) <= 1.0 + hz_per_bin);
}

TEST_CASE("white noise is flat") {
  auto w = synth_noise(11, NoiseKind::white, 3.0);
  REQUIRE(w.samples == synth_noise(11, NoiseKind::white, 3.0).samples);
  auto psd = welch_psd(w.samples);
  // band-average into 500 Hz buckets across 0.5-7 kHz
  std::vector<double> bands;
  for (double lo = 500.0; lo + 500.0 <= 7000.0; lo += 500.0) {
    double acc = 0.0;
    int cnt = 0;
    for (int f = 0; f < static_cast<int>(psd.size()); ++f)
      if (bin_hz(f) >= lo && bin_hz(f) < lo + 500.0) {
        acc += psd[static_cast<size_t>(f)];
        ++cnt;
      }
    bands.push_back(acc / cnt);
  }
  double mean = 0.0;
  for (double b : bands) mean += b;
  mean /= static_cast<double>(bands.size());
  for (double b : bands) REQUIRE(std::abs(10.0 * std::log10(b / mean)) < 1.5);
}

TEST_CASE("pink noise slope") {
  auto w = synth_noise(13, NoiseKind::pink, 3.0);
  auto psd = welch_psd(w.samples);
  // log-log regression of power vs octaves over 0.2-4 kHz
  std::vector<double> xs, ys;
  for (int f = 1; f < static_cast<int>(psd.size()); ++f) {
    const double hz = bin_hz(f);
    if (hz >= 200.0 && hz <= 4000.0) {
      xs.push_back(std::log2(hz));
      ys.push_back(10.0 * std::log10(psd[static_cast<size_t>(f)]));
    }
  }
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;  // dB per octave
  INFO("pink slope " << slope);
  REQUIRE(slope == Approx(-3.0).margin(0.7));
}

TEST_CASE("babble noise exists and normalizes") {
  auto w = synth_noise(5, NoiseKind::babble, 1.0);
  REQUIRE(w.size() == 16000);
  double rms = 0.0;
  for (double v : w.samples) rms += v * v;
  REQUIRE(std::sqrt(rms / 16000.0) == Approx(0.1).margin(1e-6));
  REQUIRE_THROWS_AS(noise_kind_from("brown"), std::invalid_argument);
}

TEST_CASE("mix_at_snr") {
  signal::Waveform c, n;
  c.samples = {1, 1, 1, 1};
  n.samples = {1, -1, 1, -1};
  auto m = mix_at_snr(c, n, 0.0);
  REQUIRE(m.samples == std::vector<double>{2, 0, 2, 0});

  auto clean = synth_clean(1, 1.0);
  auto noise = synth_noise(2, NoiseKind::white, 1.0);
  auto quiet = mix_at_snr(clean, noise, 60.0);
  double diff = 0.0, ref = 0.0;
  for (size_t i = 0; i < clean.samples.size(); ++i) {
    diff += (quiet.samples[i] - clean.samples[i]) * (quiet.samples[i] - clean.samples[i]);
    ref += clean.samples[i] * clean.samples[i];
  }
  REQUIRE(std::sqrt(diff / ref) < 1e-3);

  SECTION("achieved SNR is exact") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> d(-5.0, 20.0);
    for (int trial = 0; trial < 10; ++trial) {
      const double want = d(rng);
      auto mix = mix_at_snr(clean, noise, want);
      double pn = 0.0, pc = 0.0;
      for (size_t i = 0; i < mix.samples.size(); ++i) {
        const double nv = mix.samples[i] - clean.samples[i];
        pn += nv * nv;
        pc += clean.samples[i] * clean.samples[i];
      }
      REQUIRE(10.0 * std::log10(pc / pn) == Approx(want).margin(1e-6));
    }
  }

  signal::Waveform zero;
  zero.samples.assign(4, 0.0);
  REQUIRE_THROWS_AS(mix_at_snr(zero, n, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(mix_at_snr(c, zero, 0.0), std::invalid_argument);
}

TEST_CASE("render_pair peak policy") {
  // very low SNR forces a loud mixture; both sides must rescale together
  MixSpec spec;
  spec.clean_seed = 21;
  spec.noise_seed = 22;
  spec.kind = NoiseKind::white;
  spec.snr_db = -30.0;
  spec.duration_s = 1.0;
  auto pair = render_pair(spec);
  double peak = 0.0;
  for (double v : pair.noisy.samples) peak = std::max(peak, std::abs(v));
  REQUIRE(peak <= 1.0 + 1e-12);
  REQUIRE(pair.gain < 1.0);
  // SNR preserved under the common rescale
  double pn = 0.0, pc = 0.0;
  for (size_t i = 0; i < pair.noisy.samples.size(); ++i) {
    const double nv = pair.noisy.samples[i] - pair.clean.samples[i];
    pn += nv * nv;
    pc += pair.clean.samples[i] * pair.clean.samples[i];
  }
  REQUIRE(10.0 * std::log10(pc / pn) == Approx(-30.0).margin(1e-6));
}

TEST_CASE("corpus generation and manifest round trip") {
  auto corpus = make_corpus(99, 20, -5.0, 20.0, {NoiseKind::white, NoiseKind::pink}, 3.0);
  REQUIRE(corpus.size() == 20);
  for (const auto& m : corpus) {
    REQUIRE(m.snr_db >= -5.0);
    REQUIRE(m.snr_db <= 20.0);
  }
  const auto path = std::filesystem::temp_directory_path() / "trident_manifest_test.txt";
  write_manifest(corpus, path.string());
  auto back = read_manifest(path.string());
  REQUIRE(back.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    REQUIRE(back[i].clean_seed == corpus[i].clean_seed);
    REQUIRE(back[i].noise_seed == corpus[i].noise_seed);
    REQUIRE(back[i].kind == corpus[i].kind);
    REQUIRE(back[i].snr_db == Approx(corpus[i].snr_db).margin(1e-6));
  }
  std::filesystem::remove(path);

  SECTION("discrete SNR mode draws all four levels evenly") {
    auto d = make_corpus_discrete(7, 1000, {NoiseKind::white}, 3.0);
    int counts[4] = {0, 0, 0, 0};
    for (const auto& m : d) {
      if (m.snr_db == 0.0) ++counts[0];
      else if (m.snr_db == 5.0) ++counts[1];
      else if (m.snr_db == 10.0) ++counts[2];
      else if (m.snr_db == 15.0) ++counts[3];
      else FAIL("unexpected SNR level");
    }
    double chi2 = 0.0;
    for (int k = 0; k < 4; ++k) chi2 += (counts[k] - 250.0) * (counts[k] - 250.0) / 250.0;
    REQUIRE(chi2 < 16.27);  // p = 0.001 with 3 dof
  }
}

TEST_CASE("wav io") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "trident_wav_test.wav").string();
  auto w = synth_clean(3, 0.5);
  write_wav(w, path);

  SECTION("round trip within quantization") {
    auto back = read_wav(path);
    REQUIRE(back.size() == w.size());
    for (size_t i = 0; i < w.samples.size(); ++i)
      REQUIRE(std::abs(back.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  }

  SECTION("header layout") {
    std::ifstream in(path, std::ios::binary);
    char hdr[12];
    in.read(hdr, 12);
    REQUIRE(std::memcmp(hdr, "RIFF", 4) == 0);
    REQUIRE(std::memcmp(hdr + 8, "WAVE", 4) == 0);
  }

  SECTION("wrong sample rate is rejected with a clear message") {
    // patch the rate field (bytes 24-27) to 44100
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    uint32_t rate = 44100;
    f.seekp(24);
    f.write(reinterpret_cast<const char*>(&rate), 4);
    f.close();
    REQUIRE_THROWS_WITH(read_wav(path), Catch::Matchers::ContainsSubstring("44100"));
  }
  std::filesystem::remove(path);
}
