// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "trident/model.hpp"

namespace trident::model {

namespace detail {

inline int64_t branch_params(const ModelConfig& cfg, int tokens) {
  const int64_t c = cfg.channels;
  const int64_t m = tokens;
  const int64_t g = cfg.ffn_hidden_or_default();
  const int64_t att = 4 * (c * c + c) + 2 * c;  // q,k,v,o + post LN
  const int64_t tmix = m * 2 * m + 2 * m + 2 * m * m + m + 2 * c;
  const int64_t ffn = c * g + g + g * c + c + 2 * c;
  return att /*in_ca*/ + tmix + att /*sa*/ + ffn + att /*out_ca*/;
}

inline int64_t conv_ffn_params(const ModelConfig& cfg) {
  const int64_t c = cfg.channels, k = cfg.kernel, h = cfg.conv_ffn_hidden;
  return k * k * c + c + c * h + h + h * c + c + 2 * c;
}

// One attention module's MACs: nq queries and nk keys per instance, `inst`
// independent instances, all projections C -> C.
inline int64_t attention_macs(int64_t inst, int64_t nq, int64_t nk, int64_t c) {
  const int64_t proj = inst * (nq * c * c + 2 * nk * c * c + nq * c * c);
  const int64_t scores = 2 * inst * nq * nk * c;  // QK^T and PV
  return proj + scores;
}

}  // namespace detail

// Exact learnable-scalar count for the configured architecture.
inline int64_t count_params(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t c = cfg.channels;
  int64_t total = 0;
  // encoder: (1x7, 2->C) + BN, (7x1, C->C) + BN
  total += 7 * 2 * c + c + 2 * c;
  total += 7 * c * c + c + 2 * c;
  if (cfg.uses_posenc()) total += static_cast<int64_t>(cfg.posenc_channels) * c + c;
  if (cfg.has_t_branch()) total += static_cast<int64_t>(cfg.tokens_t) * c;
  if (cfg.has_f_branch()) total += static_cast<int64_t>(cfg.tokens_f) * c;
  int64_t block = detail::conv_ffn_params(cfg);
  if (cfg.has_t_branch()) block += detail::branch_params(cfg, cfg.tokens_t);
  if (cfg.has_f_branch()) block += detail::branch_params(cfg, cfg.tokens_f);
  total += static_cast<int64_t>(cfg.blocks) * block;
  // decoder: gated 1x1 pair, L_d Conv-FFNs, linear C->2
  total += 2 * (c * c + c);
  total += static_cast<int64_t>(cfg.decoder_blocks) * detail::conv_ffn_params(cfg);
  total += c * 2 + 2;
  return total;
}

// Analytic multiply-accumulate count for one forward pass. Reported as the
// "FLOPS" figure, following the usual profiler convention for this number;
// normalizations and activations are not counted.
inline int64_t estimate_flops(const ModelConfig& cfg, double input_seconds = 3.0,
                              const signal::StftConfig& stft_cfg = {}) {
  cfg.validate();
  const int64_t samples = static_cast<int64_t>(std::llround(input_seconds * signal::kSampleRate));
  const int64_t t = signal::stft_frames_for_length(samples, stft_cfg);
  const int64_t f = stft_cfg.bins();
  const int64_t n = t * f;
  const int64_t c = cfg.channels, k = cfg.kernel, h = cfg.conv_ffn_hidden;
  const int64_t g = cfg.ffn_hidden_or_default();

  int64_t total = 0;
  total += n * 7 * 2 * c + n * 7 * c * c;                       // encoder convs
  if (cfg.uses_posenc()) total += n * cfg.posenc_channels * c;  // shared posenc embedding

  const int64_t conv_ffn = n * c * k * k + 2 * n * c * h;
  int64_t block = conv_ffn;
  if (cfg.has_t_branch()) {
    const int64_t m = cfg.tokens_t;
    block += f * m * c * c + 2 * n * c * c + 2 * f * m * t * c + f * m * c * c;  // In-CA
    block += f * c * (4 * m * m);                                               // token-mix
    block += detail::attention_macs(m, f, f, c);                                // F-SA
    block += m * f * 2 * c * g;                                                 // FFN
    block += n * c * c + 2 * f * m * c * c + 2 * f * t * m * c + n * c * c;     // Out-CA
  }
  if (cfg.has_f_branch()) {
    const int64_t m = cfg.tokens_f;
    block += t * m * c * c + 2 * n * c * c + 2 * t * m * f * c + t * m * c * c;
    block += t * c * (4 * m * m);
    block += detail::attention_macs(m, t, t, c);  // T-SA
    block += m * t * 2 * c * g;
    block += n * c * c + 2 * t * m * c * c + 2 * t * f * m * c + n * c * c;
  }
  total += cfg.blocks * block;

  total += 2 * n * c * c;                           // gated 1x1 pair
  total += cfg.decoder_blocks * conv_ffn;           // decoder Conv-FFNs
  total += n * c * 2;                               // mask head
  return total;
}

}  // namespace trident::model
