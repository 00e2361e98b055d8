// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "trident/signal.hpp"

namespace trident::data {

// 16-bit PCM mono at 16 kHz; anything else is rejected with a reason.
inline signal::Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  char riff[4], wave[4];
  uint32_t riff_size;
  in.read(riff, 4);
  in.read(reinterpret_cast<char*>(&riff_size), 4);
  in.read(wave, 4);
  if (!in || std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(wave, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: " + path + " is not a RIFF/WAVE file");
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> pcm;
  while (in) {
    char id[4];
    uint32_t size;
    in.read(id, 4);
    in.read(reinterpret_cast<char*>(&size), 4);
    if (!in) break;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      std::vector<char> fmt(size);
      in.read(fmt.data(), size);
      if (size < 16) throw std::runtime_error("read_wav: malformed fmt chunk in " + path);
      std::memcpy(&format, fmt.data(), 2);
      std::memcpy(&channels, fmt.data() + 2, 2);
      std::memcpy(&rate, fmt.data() + 4, 4);
      std::memcpy(&bits, fmt.data() + 14, 2);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm.resize(size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(size / 2 * 2));
      break;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt) throw std::runtime_error("read_wav: missing fmt chunk in " + path);
  if (format != 1)
    throw std::runtime_error("read_wav: " + path + " is not PCM (format tag " +
                             std::to_string(format) + ")");
  if (channels != 1)
    throw std::runtime_error("read_wav: " + path + " has " + std::to_string(channels) +
                             " channels, expected mono");
  if (rate != signal::kSampleRate)
    throw std::runtime_error("read_wav: " + path + " has sample rate " + std::to_string(rate) +
                             ", expected 16000");
  if (bits != 16)
    throw std::runtime_error("read_wav: " + path + " has " + std::to_string(bits) +
                             " bits per sample, expected 16");
  signal::Waveform w;
  w.sample_rate = signal::kSampleRate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) w.samples[i] = pcm[i] / 32767.0;
  return w;
}

// Canonical 44-byte header followed by the samples.
inline void write_wav(const signal::Waveform& w, const std::string& path) {
  signal::require_rate(w, "write_wav");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path + " for writing");
  const uint32_t data_size = static_cast<uint32_t>(w.samples.size() * 2);
  const uint32_t riff_size = 36 + data_size;
  const uint16_t format = 1, channels = 1, bits = 16, block = 2;
  const uint32_t rate = signal::kSampleRate, byte_rate = rate * block, fmt_size = 16;
  out.write("RIFF", 4);
  out.write(reinterpret_cast<const char*>(&riff_size), 4);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  out.write(reinterpret_cast<const char*>(&fmt_size), 4);
  out.write(reinterpret_cast<const char*>(&format), 2);
  out.write(reinterpret_cast<const char*>(&channels), 2);
  out.write(reinterpret_cast<const char*>(&rate), 4);
  out.write(reinterpret_cast<const char*>(&byte_rate), 4);
  out.write(reinterpret_cast<const char*>(&block), 2);
  out.write(reinterpret_cast<const char*>(&bits), 2);
  out.write("data", 4);
  out.write(reinterpret_cast<const char*>(&data_size), 4);
  for (double s : w.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const int16_t q = static_cast<int16_t>(std::lround(c * 32767.0));
    out.write(reinterpret_cast<const char*>(&q), 2);
  }
  if (!out) throw std::runtime_error("write_wav: short write to " + path);
}

}  // namespace trident::data
