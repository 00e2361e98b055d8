// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <map>
#include <random>

#include "trident/complex_ops.hpp"
#include "trident/conv.hpp"
#include "trident/ops.hpp"
#include "trident/signal.hpp"
#include "trident/signal_ops.hpp"

namespace trident::model {

using nn::Shape;
using nn::Tensor;

struct HeadCounts {
  int t_sa = 2, f_sa = 2, in_ca = 3, out_ca = 3;
};

struct ModelConfig {
  int channels = 96;        // C
  int kernel = 7;           // K, main-branch depthwise kernel
  int tokens_t = 16;        // M_T
  int tokens_f = 16;        // M_F
  int blocks = 3;           // L
  int decoder_blocks = 4;   // L_d
  HeadCounts heads;
  int conv_ffn_hidden = 96;  // hidden width of every Conv-FFN
  int ffn_hidden = 0;        // companion-branch FFN hidden; 0 means 4*C
  int posenc_channels = 64;

  int ffn_hidden_or_default() const { return ffn_hidden > 0 ? ffn_hidden : 4 * channels; }
  bool has_t_branch() const { return blocks > 0 && tokens_t > 0; }
  bool has_f_branch() const { return blocks > 0 && tokens_f > 0; }
  bool uses_posenc() const { return has_t_branch() || has_f_branch(); }

  void validate() const {
    if (channels < 1) throw std::invalid_argument("ModelConfig: channels must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
      throw std::invalid_argument("ModelConfig: kernel must be odd and >= 1");
    if (tokens_t < 0 || tokens_f < 0)
      throw std::invalid_argument("ModelConfig: token counts must be >= 0");
    if (blocks < 0 || decoder_blocks < 0)
      throw std::invalid_argument("ModelConfig: block counts must be >= 0");
    if (posenc_channels < 4 || posenc_channels % 4 != 0)
      throw std::invalid_argument("ModelConfig: posenc channels must be a positive multiple of 4");
    auto check_heads = [&](int h, const char* who) {
      if (h < 1 || channels % h != 0)
        throw std::invalid_argument(std::string("ModelConfig: ") + who +
                                    " head count must divide channels");
    };
    if (has_t_branch() || has_f_branch()) {
      check_heads(heads.in_ca, "In-CA");
      check_heads(heads.out_ca, "Out-CA");
    }
    if (has_t_branch()) check_heads(heads.f_sa, "F-SA");
    if (has_f_branch()) check_heads(heads.t_sa, "T-SA");
  }
};

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

enum class Init { normal002, kaiming_uniform, zeros, ones };

template <class Real>
struct ParameterStore {
  struct Item {
    std::string name;
    Tensor<Real> tensor;
    bool learnable = true;
  };
  std::vector<Item> items;
  std::mt19937 rng;

  explicit ParameterStore(uint64_t seed = 0) : rng(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  Tensor<Real> add_param(const std::string& name, Shape shape, Init init, int fan_in = 0) {
    auto t = Tensor<Real>::zeros(std::move(shape));
    switch (init) {
      case Init::normal002: {
        std::normal_distribution<double> d(0.0, 0.02);
        for (auto& v : t.data()) v = static_cast<Real>(d(rng));
        break;
      }
      case Init::kaiming_uniform: {
        if (fan_in <= 0) throw std::logic_error("add_param: kaiming init needs fan_in");
        const double bound = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> d(-bound, bound);
        for (auto& v : t.data()) v = static_cast<Real>(d(rng));
        break;
      }
      case Init::zeros: break;
      case Init::ones: std::fill(t.data().begin(), t.data().end(), Real(1)); break;
    }
    t.set_requires_grad(true);
    items.push_back({name, t, true});
    return t;
  }

  Tensor<Real> add_buffer(const std::string& name, Shape shape, Real fill = Real(0)) {
    auto t = Tensor<Real>::filled(std::move(shape), fill);
    items.push_back({name, t, false});
    return t;
  }

  int64_t num_learnable() const {
    int64_t n = 0;
    for (const auto& it : items)
      if (it.learnable) n += it.tensor.numel();
    return n;
  }

  std::vector<Tensor<Real>> learnable_tensors() const {
    std::vector<Tensor<Real>> out;
    for (const auto& it : items)
      if (it.learnable) out.push_back(it.tensor);
    return out;
  }

  const Item* find(const std::string& name) const {
    for (const auto& it : items)
      if (it.name == name) return &it;
    return nullptr;
  }

  void zero_grads() {
    for (auto& it : items)
      if (it.learnable) it.tensor.zero_grad();
  }
};

// ---------------------------------------------------------------------------
// Attention capture
// ---------------------------------------------------------------------------

struct CaptureMeta {
  int block = 0;
  char branch = 'm';          // 't', 'f'
  const char* module = "";    // "in_ca", "out_ca", "sa"
  int batch = 0, heads = 0, rows = 0, cols = 0;
  bool is_in_ca = false;
  int map_t = 0, map_f = 0;   // grid extents for In-CA saliency export
};

// Receives every attention probability tensor of a forward pass. Tracks the
// worst row-sum deviation and optionally assembles per-token In-CA saliency
// maps (head-averaged) for export.
struct CaptureSink {
  bool collect_in_ca_maps = false;
  double max_rowsum_dev = 0.0;
  int64_t rows_checked = 0;

  struct InCaMap {
    int block = 0;
    char branch = 't';
    int token = 0;
    int t_dim = 0, f_dim = 0;
    std::vector<double> grid;  // row-major (t_dim, f_dim), rows sum to 1 per key set
  };
  std::vector<InCaMap> maps;

  template <class Real>
  void note(const CaptureMeta& m, const std::vector<Real>& probs) {
    const int64_t rows = static_cast<int64_t>(m.batch) * m.heads * m.rows;
    for (int64_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int c = 0; c < m.cols; ++c) sum += static_cast<double>(probs[r * m.cols + c]);
      max_rowsum_dev = std::max(max_rowsum_dev, std::abs(sum - 1.0));
    }
    rows_checked += rows;
    if (!m.is_in_ca || !collect_in_ca_maps) return;
    for (int token = 0; token < m.rows; ++token) {
      InCaMap map;
      map.block = m.block;
      map.branch = m.branch;
      map.token = token;
      map.t_dim = m.map_t;
      map.f_dim = m.map_f;
      map.grid.assign(static_cast<size_t>(m.map_t) * m.map_f, 0.0);
      const double inv_h = 1.0 / m.heads;
      for (int b = 0; b < m.batch; ++b)
        for (int h = 0; h < m.heads; ++h) {
          const int64_t base =
              ((static_cast<int64_t>(b) * m.heads + h) * m.rows + token) * m.cols;
          for (int c = 0; c < m.cols; ++c) {
            // t-branch batches over frequency with time keys; f-branch dually
            const int t = (m.branch == 't') ? c : b;
            const int f = (m.branch == 't') ? b : c;
            map.grid[static_cast<size_t>(t) * m.map_f + f] +=
                static_cast<double>(probs[base + c]) * inv_h;
          }
        }
      maps.push_back(std::move(map));
    }
  }
};

struct ForwardOptions {
  bool training = false;
  CaptureSink* capture = nullptr;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class Real>
struct Linear {
  Tensor<Real> w, b;  // w: (in, out)

  static Linear make(ParameterStore<Real>& ps, const std::string& name, int in, int out,
                     Init init = Init::normal002) {
    Linear l;
    l.w = ps.add_param(name + ".w", {in, out}, init, in);
    l.b = ps.add_param(name + ".b", {out}, Init::zeros);
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    const int in = w.dim(0), out = w.dim(1);
    Shape out_shape = x.shape();
    out_shape.back() = out;
    auto flat = nn::reshape(x, {static_cast<int>(x.numel() / in), in});
    auto y = nn::add_bias(nn::matmul(flat, w), b);
    return nn::reshape(y, std::move(out_shape));
  }
};

template <class Real>
struct LayerNormLayer {
  Tensor<Real> gamma, beta;

  static LayerNormLayer make(ParameterStore<Real>& ps, const std::string& name, int c) {
    LayerNormLayer l;
    l.gamma = ps.add_param(name + ".g", {c}, Init::ones);
    l.beta = ps.add_param(name + ".b", {c}, Init::zeros);
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return nn::layer_norm(x, gamma, beta); }
};

template <class Real>
struct BatchNormLayer {
  Tensor<Real> gamma, beta;
  nn::BatchNormState<Real> state;

  static BatchNormLayer make(ParameterStore<Real>& ps, const std::string& name, int c) {
    BatchNormLayer l;
    l.gamma = ps.add_param(name + ".g", {c}, Init::ones);
    l.beta = ps.add_param(name + ".b", {c}, Init::zeros);
    l.state.running_mean = ps.add_buffer(name + ".running_mean", {c}, Real(0));
    l.state.running_var = ps.add_buffer(name + ".running_var", {c}, Real(1));
    l.state.count = ps.add_buffer(name + ".count", {1}, Real(0));
    return l;
  }

  Tensor<Real> operator()(const Tensor<Real>& x, bool training) {
    return nn::batch_norm(x, gamma, beta, state, training);
  }
};

// ---------------------------------------------------------------------------
// Positional encoding: [time-sin | time-cos | freq-sin | freq-cos] quarters,
// one geometric frequency ladder shared by the two axes.
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> posenc_2d(int t_dim, int f_dim, int channels = 64) {
  if (channels % 4 != 0) throw std::invalid_argument("posenc_2d: channels must be divisible by 4");
  const int q = channels / 4;
  std::vector<double> omega(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i) omega[static_cast<size_t>(i)] = std::pow(10000.0, -static_cast<double>(i) / q);
  auto out = Tensor<Real>::zeros({t_dim, f_dim, channels});
  auto& ov = out.data();
  for (int t = 0; t < t_dim; ++t)
    for (int f = 0; f < f_dim; ++f) {
      Real* row = &ov[(static_cast<int64_t>(t) * f_dim + f) * channels];
      for (int i = 0; i < q; ++i) {
        const double wt = t * omega[static_cast<size_t>(i)];
        const double wf = f * omega[static_cast<size_t>(i)];
        row[i] = static_cast<Real>(std::sin(wt));
        row[q + i] = static_cast<Real>(std::cos(wt));
        row[2 * q + i] = static_cast<Real>(std::sin(wf));
        row[3 * q + i] = static_cast<Real>(std::cos(wf));
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Attention core shared by In-CA, Out-CA, T-SA and F-SA.
// ---------------------------------------------------------------------------

template <class Real>
struct AttentionWeights {
  Linear<Real> q, k, v, o;
  int heads = 1;

  static AttentionWeights make(ParameterStore<Real>& ps, const std::string& name, int c,
                               int heads) {
    AttentionWeights w;
    w.q = Linear<Real>::make(ps, name + ".q", c, c);
    w.k = Linear<Real>::make(ps, name + ".k", c, c);
    w.v = Linear<Real>::make(ps, name + ".v", c, c);
    w.o = Linear<Real>::make(ps, name + ".o", c, c);
    w.heads = heads;
    return w;
  }
};

// q3: (B, Nq, C); kv3: (B, Nk, C). Scaled dot-product per batch instance.
template <class Real>
Tensor<Real> multi_head_attention(const AttentionWeights<Real>& w, const Tensor<Real>& q3,
                                  const Tensor<Real>& kv3, CaptureSink* sink, CaptureMeta meta) {
  const int B = q3.dim(0), nq = q3.dim(1), c = w.q.w.dim(1);
  const int nk = kv3.dim(1);
  const int h = w.heads, d = c / h;
  auto split = [&](const Tensor<Real>& x, int n) {
    auto y = nn::reshape(x, {B, n, h, d});
    y = nn::permute(y, {0, 2, 1, 3});
    return nn::reshape(y, {B * h, n, d});
  };
  auto qh = split(w.q(q3), nq);
  auto kh = split(w.k(kv3), nk);
  auto vh = split(w.v(kv3), nk);
  auto scores = nn::scale(nn::bmm_nt(qh, kh), Real(1.0 / std::sqrt(static_cast<double>(d))));
  auto probs = nn::softmax(scores, 2);
  if (sink) {
    meta.batch = B;
    meta.heads = h;
    meta.rows = nq;
    meta.cols = nk;
    sink->note(meta, probs.data());
  }
  auto mixed = nn::bmm(probs, vh);
  auto merged = nn::reshape(mixed, {B, h, nq, d});
  merged = nn::permute(merged, {0, 2, 1, 3});
  merged = nn::reshape(merged, {B, nq, c});
  return w.o(merged);
}

// ---------------------------------------------------------------------------
// Network modules
// ---------------------------------------------------------------------------

// Depthwise KxK -> GELU -> pointwise C->hidden -> GELU -> pointwise hidden->C,
// residual then post layer norm.
template <class Real>
struct ConvFfn {
  Tensor<Real> dw_w, dw_b, pw1_w, pw1_b, pw2_w, pw2_b;
  LayerNormLayer<Real> ln;

  static ConvFfn make(ParameterStore<Real>& ps, const std::string& name, int c, int k, int hidden) {
    ConvFfn m;
    m.dw_w = ps.add_param(name + ".dw.w", {k, k, c}, Init::kaiming_uniform, k * k);
    m.dw_b = ps.add_param(name + ".dw.b", {c}, Init::zeros);
    m.pw1_w = ps.add_param(name + ".pw1.w", {1, 1, c, hidden}, Init::kaiming_uniform, c);
    m.pw1_b = ps.add_param(name + ".pw1.b", {hidden}, Init::zeros);
    m.pw2_w = ps.add_param(name + ".pw2.w", {1, 1, hidden, c}, Init::kaiming_uniform, hidden);
    m.pw2_b = ps.add_param(name + ".pw2.b", {c}, Init::zeros);
    m.ln = LayerNormLayer<Real>::make(ps, name + ".ln", c);
    return m;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto y = nn::gelu(nn::depthwise_conv2d(x, dw_w, dw_b));
    y = nn::gelu(nn::conv2d(y, pw1_w, pw1_b));
    y = nn::conv2d(y, pw2_w, pw2_b);
    return ln(nn::add(x, y));
  }
};

template <class Real>
struct Ffn {
  Linear<Real> l1, l2;
  LayerNormLayer<Real> ln;

  static Ffn make(ParameterStore<Real>& ps, const std::string& name, int c, int hidden) {
    Ffn m;
    m.l1 = Linear<Real>::make(ps, name + ".l1", c, hidden);
    m.l2 = Linear<Real>::make(ps, name + ".l2", hidden, c);
    m.ln = LayerNormLayer<Real>::make(ps, name + ".ln", c);
    return m;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    return ln(nn::add(x, l2(nn::gelu(l1(x)))));
  }
};

// Two-layer map across the token axis (hidden 2M), applied independently per
// (position, channel) pair.
template <class Real>
struct TokenMix {
  Tensor<Real> w1, b1, w2, b2;
  LayerNormLayer<Real> ln;
  int m = 0;

  static TokenMix make(ParameterStore<Real>& ps, const std::string& name, int m, int c) {
    TokenMix t;
    t.m = m;
    t.w1 = ps.add_param(name + ".w1", {m, 2 * m}, Init::normal002);
    t.b1 = ps.add_param(name + ".b1", {2 * m}, Init::zeros);
    t.w2 = ps.add_param(name + ".w2", {2 * m, m}, Init::normal002);
    t.b2 = ps.add_param(name + ".b2", {m}, Init::zeros);
    t.ln = LayerNormLayer<Real>::make(ps, name + ".ln", c);
    return t;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    const int n = x.dim(1), c = x.dim(2);
    auto y = nn::permute(x, {1, 2, 0});  // (N, C, M)
    y = nn::reshape(y, {n * c, m});
    y = nn::gelu(nn::add_bias(nn::matmul(y, w1), b1));
    y = nn::add_bias(nn::matmul(y, w2), b2);
    y = nn::reshape(y, {n, c, m});
    y = nn::permute(y, {2, 0, 1});
    return ln(nn::add(x, y));
  }
};

// Self-attention along axis 1 of (A, B, C), independently per index of axis 0.
template <class Real>
struct AxisSelfAttention {
  AttentionWeights<Real> att;
  LayerNormLayer<Real> ln;

  static AxisSelfAttention make(ParameterStore<Real>& ps, const std::string& name, int c,
                                int heads) {
    AxisSelfAttention m;
    m.att = AttentionWeights<Real>::make(ps, name, c, heads);
    m.ln = LayerNormLayer<Real>::make(ps, name + ".ln", c);
    return m;
  }

  Tensor<Real> operator()(const Tensor<Real>& x, CaptureSink* sink, CaptureMeta meta) const {
    auto y = multi_head_attention(att, x, x, sink, meta);
    return ln(nn::add(x, y));
  }
};

template <class Real>
struct CrossAttention {
  AttentionWeights<Real> att;
  LayerNormLayer<Real> ln;

  static CrossAttention make(ParameterStore<Real>& ps, const std::string& name, int c, int heads) {
    CrossAttention m;
    m.att = AttentionWeights<Real>::make(ps, name, c, heads);
    m.ln = LayerNormLayer<Real>::make(ps, name + ".ln", c);
    return m;
  }
};

template <class Real>
struct CompanionBranch {
  CrossAttention<Real> in_ca;
  TokenMix<Real> tmix;
  AxisSelfAttention<Real> sa;
  Ffn<Real> ffn;
  CrossAttention<Real> out_ca;

  static CompanionBranch make(ParameterStore<Real>& ps, const std::string& name,
                              const ModelConfig& cfg, int tokens, int sa_heads) {
    CompanionBranch b;
    b.in_ca = CrossAttention<Real>::make(ps, name + ".inca", cfg.channels, cfg.heads.in_ca);
    b.tmix = TokenMix<Real>::make(ps, name + ".tmix", tokens, cfg.channels);
    b.sa = AxisSelfAttention<Real>::make(ps, name + ".sa", cfg.channels, sa_heads);
    b.ffn = Ffn<Real>::make(ps, name + ".ffn", cfg.channels, cfg.ffn_hidden_or_default());
    b.out_ca = CrossAttention<Real>::make(ps, name + ".outca", cfg.channels, cfg.heads.out_ca);
    return b;
  }
};

template <class Real>
struct TridentBlock {
  ConvFfn<Real> main;
  CompanionBranch<Real> t_branch, f_branch;
  bool has_t = false, has_f = false;

  static TridentBlock make(ParameterStore<Real>& ps, const std::string& name,
                           const ModelConfig& cfg) {
    TridentBlock b;
    b.main = ConvFfn<Real>::make(ps, name + ".cffn", cfg.channels, cfg.kernel,
                                 cfg.conv_ffn_hidden);
    b.has_t = cfg.tokens_t > 0;
    b.has_f = cfg.tokens_f > 0;
    if (b.has_t)
      b.t_branch = CompanionBranch<Real>::make(ps, name + ".t", cfg, cfg.tokens_t, cfg.heads.f_sa);
    if (b.has_f)
      b.f_branch = CompanionBranch<Real>::make(ps, name + ".f", cfg, cfg.tokens_f, cfg.heads.t_sa);
    return b;
  }
};

// One trident block step. Companion branches read the block's input main
// feature; the main stream runs its Conv-FFN and then receives the T-branch
// and F-branch Out-CA injections in that order.
template <class Real>
void trident_block_forward(TridentBlock<Real>& blk, int index, Tensor<Real>& main,
                           Tensor<Real>& x_t, Tensor<Real>& x_f, const Tensor<Real>& emb,
                           CaptureSink* sink) {
  const int t_dim = main.dim(0), f_dim = main.dim(1);
  Tensor<Real> main_pos;
  if (blk.has_t || blk.has_f) main_pos = nn::add(main, emb);
  if (blk.has_t) {
    auto q = nn::permute(x_t, {1, 0, 2});        // (F, M, C)
    auto kv = nn::permute(main_pos, {1, 0, 2});  // (F, T, C)
    CaptureMeta meta{index, 't', "in_ca", 0, 0, 0, 0, true, t_dim, f_dim};
    auto att = multi_head_attention(blk.t_branch.in_ca.att, q, kv, sink, meta);
    x_t = blk.t_branch.in_ca.ln(nn::add(x_t, nn::permute(att, {1, 0, 2})));
    x_t = blk.t_branch.tmix(x_t);
    CaptureMeta sa_meta{index, 't', "sa", 0, 0, 0, 0, false, 0, 0};
    x_t = blk.t_branch.sa(x_t, sink, sa_meta);
    x_t = blk.t_branch.ffn(x_t);
  }
  if (blk.has_f) {
    auto q = nn::permute(x_f, {1, 0, 2});  // (T, M, C)
    CaptureMeta meta{index, 'f', "in_ca", 0, 0, 0, 0, true, t_dim, f_dim};
    auto att = multi_head_attention(blk.f_branch.in_ca.att, q, main_pos, sink, meta);
    x_f = blk.f_branch.in_ca.ln(nn::add(x_f, nn::permute(att, {1, 0, 2})));
    x_f = blk.f_branch.tmix(x_f);
    CaptureMeta sa_meta{index, 'f', "sa", 0, 0, 0, 0, false, 0, 0};
    x_f = blk.f_branch.sa(x_f, sink, sa_meta);
    x_f = blk.f_branch.ffn(x_f);
  }
  main = blk.main(main);
  if (blk.has_t) {
    auto q = nn::permute(nn::add(main, emb), {1, 0, 2});  // (F, T, C)
    auto kv = nn::permute(x_t, {1, 0, 2});                // (F, M, C)
    CaptureMeta meta{index, 't', "out_ca", 0, 0, 0, 0, false, 0, 0};
    auto att = multi_head_attention(blk.t_branch.out_ca.att, q, kv, sink, meta);
    main = blk.t_branch.out_ca.ln(nn::add(main, nn::permute(att, {1, 0, 2})));
  }
  if (blk.has_f) {
    auto q = nn::add(main, emb);            // (T, F, C)
    auto kv = nn::permute(x_f, {1, 0, 2});  // (T, M, C)
    CaptureMeta meta{index, 'f', "out_ca", 0, 0, 0, 0, false, 0, 0};
    auto att = multi_head_attention(blk.f_branch.out_ca.att, q, kv, sink, meta);
    main = blk.f_branch.out_ca.ln(nn::add(main, att));
  }
}

template <class Real>
struct Encoder {
  Tensor<Real> conv1_w, conv1_b, conv2_w, conv2_b;
  BatchNormLayer<Real> bn1, bn2;

  static Encoder make(ParameterStore<Real>& ps, const ModelConfig& cfg) {
    Encoder e;
    const int c = cfg.channels;
    e.conv1_w = ps.add_param("enc.conv1.w", {1, 7, 2, c}, Init::kaiming_uniform, 1 * 7 * 2);
    e.conv1_b = ps.add_param("enc.conv1.b", {c}, Init::zeros);
    e.bn1 = BatchNormLayer<Real>::make(ps, "enc.bn1", c);
    e.conv2_w = ps.add_param("enc.conv2.w", {7, 1, c, c}, Init::kaiming_uniform, 7 * 1 * c);
    e.conv2_b = ps.add_param("enc.conv2.b", {c}, Init::zeros);
    e.bn2 = BatchNormLayer<Real>::make(ps, "enc.bn2", c);
    return e;
  }

  Tensor<Real> operator()(const Tensor<Real>& x, bool training) {
    auto y = nn::relu(bn1(nn::conv2d(x, conv1_w, conv1_b, 1, 1, 0, 3), training));
    return nn::relu(bn2(nn::conv2d(y, conv2_w, conv2_b, 1, 1, 3, 0), training));
  }
};

template <class Real>
struct Decoder {
  Tensor<Real> gate_a_w, gate_a_b, gate_b_w, gate_b_b;
  std::vector<ConvFfn<Real>> cffns;
  Linear<Real> out;

  static Decoder make(ParameterStore<Real>& ps, const ModelConfig& cfg) {
    Decoder d;
    const int c = cfg.channels;
    d.gate_a_w = ps.add_param("dec.gate_a.w", {1, 1, c, c}, Init::kaiming_uniform, c);
    d.gate_a_b = ps.add_param("dec.gate_a.b", {c}, Init::zeros);
    d.gate_b_w = ps.add_param("dec.gate_b.w", {1, 1, c, c}, Init::kaiming_uniform, c);
    d.gate_b_b = ps.add_param("dec.gate_b.b", {c}, Init::zeros);
    for (int i = 0; i < cfg.decoder_blocks; ++i)
      d.cffns.push_back(ConvFfn<Real>::make(ps, "dec.cffn" + std::to_string(i), c, cfg.kernel,
                                            cfg.conv_ffn_hidden));
    d.out = Linear<Real>::make(ps, "dec.out", c, 2);
    return d;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto a = nn::conv2d(x, gate_a_w, gate_a_b);
    auto g = nn::sigmoid(nn::conv2d(x, gate_b_w, gate_b_b));
    auto y = nn::mul(a, g);
    for (const auto& c : cffns) y = c(y);
    return nn::tanh_radial_clamp(out(y));
  }
};

// ---------------------------------------------------------------------------
// The full network
// ---------------------------------------------------------------------------

template <class Real>
class TridentModel {
 public:
  TridentModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg), store_(seed) {
    cfg_.validate();
    encoder_ = Encoder<Real>::make(store_, cfg_);
    if (cfg_.uses_posenc())
      pe_proj_ = Linear<Real>::make(store_, "posenc.proj", cfg_.posenc_channels, cfg_.channels);
    if (cfg_.has_t_branch())
      tokens_t_ = store_.add_param("tokens.t", {cfg_.tokens_t, cfg_.channels}, Init::normal002);
    if (cfg_.has_f_branch())
      tokens_f_ = store_.add_param("tokens.f", {cfg_.tokens_f, cfg_.channels}, Init::normal002);
    for (int i = 0; i < cfg_.blocks; ++i)
      blocks_.push_back(TridentBlock<Real>::make(store_, "blk" + std::to_string(i), cfg_));
    decoder_ = Decoder<Real>::make(store_, cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<Real>& params() { return store_; }
  const ParameterStore<Real>& params() const { return store_; }

  // Complex ratio mask from the power-compressed spectrogram, [T,F,2].
  Tensor<Real> predict_mask(const Tensor<Real>& compressed, const ForwardOptions& opts = {}) {
    if (compressed.rank() != 3 || compressed.dim(2) != 2)
      throw std::invalid_argument("predict_mask: expects [T,F,2] input");
    const int t_dim = compressed.dim(0), f_dim = compressed.dim(1);
    auto x = encoder_(compressed, opts.training);
    Tensor<Real> emb;
    if (cfg_.uses_posenc() && !blocks_.empty()) emb = pe_proj_(posenc_constant(t_dim, f_dim));
    Tensor<Real> x_t, x_f;
    if (cfg_.has_t_branch()) x_t = nn::expand_mid(tokens_t_, f_dim);
    if (cfg_.has_f_branch()) x_f = nn::expand_mid(tokens_f_, t_dim);
    for (int i = 0; i < static_cast<int>(blocks_.size()); ++i)
      run_block(blocks_[static_cast<size_t>(i)], i, x, x_t, x_f, emb, opts.capture);
    return decoder_(x);
  }

  // Waveform-to-waveform enhancement without gradient tracking.
  signal::Waveform enhance(const signal::Waveform& noisy, CaptureSink* capture = nullptr) {
    auto spec = signal::stft(noisy);
    auto compressed = nn::spec_to_tensor<Real>(signal::power_compress(spec));
    ForwardOptions opts;
    opts.capture = capture;
    auto mask = predict_mask(compressed, opts);
    auto masked = signal::apply_complex_mask(spec, nn::tensor_to_spec(mask, spec.cfg));
    return signal::istft(masked, noisy.size());
  }

  Tensor<Real> posenc_constant(int t_dim, int f_dim) {
    auto key = std::make_pair(t_dim, f_dim);
    auto it = posenc_cache_.find(key);
    if (it == posenc_cache_.end())
      it = posenc_cache_.emplace(key, posenc_2d<Real>(t_dim, f_dim, cfg_.posenc_channels)).first;
    return it->second;
  }

 private:
  void run_block(TridentBlock<Real>& blk, int index, Tensor<Real>& main, Tensor<Real>& x_t,
                 Tensor<Real>& x_f, const Tensor<Real>& emb, CaptureSink* sink) {
    const int t_dim = main.dim(0), f_dim = main.dim(1);
    Tensor<Real> main_pos;
    if (blk.has_t || blk.has_f) main_pos = nn::add(main, emb);
    // companion branches read the block input
    if (blk.has_t) {
      auto q = nn::permute(x_t, {1, 0, 2});             // (F, M, C)
      auto kv = nn::permute(main_pos, {1, 0, 2});       // (F, T, C)
      CaptureMeta meta{index, 't', "in_ca", 0, 0, 0, 0, true, t_dim, f_dim};
      auto att = multi_head_attention(blk.t_branch.in_ca.att, q, kv, sink, meta);
      x_t = blk.t_branch.in_ca.ln(nn::add(x_t, nn::permute(att, {1, 0, 2})));
      x_t = blk.t_branch.tmix(x_t);
      CaptureMeta sa_meta{index, 't', "sa", 0, 0, 0, 0, false, 0, 0};
      x_t = blk.t_branch.sa(x_t, sink, sa_meta);
      x_t = blk.t_branch.ffn(x_t);
    }
    if (blk.has_f) {
      auto q = nn::permute(x_f, {1, 0, 2});  // (T, M, C)
      CaptureMeta meta{index, 'f', "in_ca", 0, 0, 0, 0, true, t_dim, f_dim};
      auto att = multi_head_attention(blk.f_branch.in_ca.att, q, main_pos, sink, meta);
      x_f = blk.f_branch.in_ca.ln(nn::add(x_f, nn::permute(att, {1, 0, 2})));
      x_f = blk.f_branch.tmix(x_f);
      CaptureMeta sa_meta{index, 'f', "sa", 0, 0, 0, 0, false, 0, 0};
      x_f = blk.f_branch.sa(x_f, sink, sa_meta);
      x_f = blk.f_branch.ffn(x_f);
    }
    // main branch: local aggregation, then global injections (T then F)
    main = blk.main(main);
    if (blk.has_t) {
      auto q = nn::permute(nn::add(main, emb), {1, 0, 2});  // (F, T, C)
      auto kv = nn::permute(x_t, {1, 0, 2});                // (F, M, C)
      CaptureMeta meta{index, 't', "out_ca", 0, 0, 0, 0, false, 0, 0};
      auto att = multi_head_attention(blk.t_branch.out_ca.att, q, kv, sink, meta);
      main = blk.t_branch.out_ca.ln(nn::add(main, nn::permute(att, {1, 0, 2})));
    }
    if (blk.has_f) {
      auto q = nn::add(main, emb);            // (T, F, C)
      auto kv = nn::permute(x_f, {1, 0, 2});  // (T, M, C)
      CaptureMeta meta{index, 'f', "out_ca", 0, 0, 0, 0, false, 0, 0};
      auto att = multi_head_attention(blk.f_branch.out_ca.att, q, kv, sink, meta);
      main = blk.f_branch.out_ca.ln(nn::add(main, att));
    }
  }

  ModelConfig cfg_;
  ParameterStore<Real> store_;
  Encoder<Real> encoder_;
  Linear<Real> pe_proj_;
  Tensor<Real> tokens_t_, tokens_f_;
  std::vector<TridentBlock<Real>> blocks_;
  Decoder<Real> decoder_;
  std::map<std::pair<int, int>, Tensor<Real>> posenc_cache_;
};

}  // namespace trident::model
