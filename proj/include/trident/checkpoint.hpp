// Copyright 2026 The tridentse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdio>
#include <fstream>

#include "trident/model.hpp"

namespace trident::model {

// Checkpoint format "TSE1": magic, u32 tensor count, then per tensor
// u16 name length, UTF-8 name, u8 rank, u32 dims, raw little-endian f32 data.

struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<float> data;
};

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write("TSE1", 4);
  const uint32_t count = static_cast<uint32_t>(tensors.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : tensors) {
    if (t.name.size() > 65535) throw std::invalid_argument("save_checkpoint: name too long");
    const uint16_t nlen = static_cast<uint16_t>(t.name.size());
    out.write(reinterpret_cast<const char*>(&nlen), 2);
    out.write(t.name.data(), nlen);
    const uint8_t rank = static_cast<uint8_t>(t.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.dims) {
      const uint32_t ud = static_cast<uint32_t>(d);
      out.write(reinterpret_cast<const char*>(&ud), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: short write to " + path);
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "TSE1", 4) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a TSE1 checkpoint");
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), 2);
    NamedTensor t;
    t.name.resize(nlen);
    in.read(t.name.data(), nlen);
    uint8_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 1);
    int64_t numel = 1;
    for (int r = 0; r < rank; ++r) {
      uint32_t d = 0;
      in.read(reinterpret_cast<char*>(&d), 4);
      t.dims.push_back(static_cast<int>(d));
      numel *= d;
    }
    t.data.resize(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model binding
// ---------------------------------------------------------------------------

inline std::vector<float> encode_model_config(const ModelConfig& c) {
  return {static_cast<float>(c.channels),        static_cast<float>(c.kernel),
          static_cast<float>(c.tokens_t),        static_cast<float>(c.tokens_f),
          static_cast<float>(c.blocks),          static_cast<float>(c.decoder_blocks),
          static_cast<float>(c.heads.t_sa),      static_cast<float>(c.heads.f_sa),
          static_cast<float>(c.heads.in_ca),     static_cast<float>(c.heads.out_ca),
          static_cast<float>(c.conv_ffn_hidden), static_cast<float>(c.ffn_hidden),
          static_cast<float>(c.posenc_channels)};
}

inline ModelConfig decode_model_config(const std::vector<float>& v) {
  if (v.size() != 13) throw std::runtime_error("checkpoint: malformed meta.model_config tensor");
  ModelConfig c;
  c.channels = static_cast<int>(v[0]);
  c.kernel = static_cast<int>(v[1]);
  c.tokens_t = static_cast<int>(v[2]);
  c.tokens_f = static_cast<int>(v[3]);
  c.blocks = static_cast<int>(v[4]);
  c.decoder_blocks = static_cast<int>(v[5]);
  c.heads.t_sa = static_cast<int>(v[6]);
  c.heads.f_sa = static_cast<int>(v[7]);
  c.heads.in_ca = static_cast<int>(v[8]);
  c.heads.out_ca = static_cast<int>(v[9]);
  c.conv_ffn_hidden = static_cast<int>(v[10]);
  c.ffn_hidden = static_cast<int>(v[11]);
  c.posenc_channels = static_cast<int>(v[12]);
  return c;
}

template <class Real>
std::vector<NamedTensor> store_to_named(const ParameterStore<Real>& ps) {
  std::vector<NamedTensor> out;
  out.reserve(ps.items.size());
  for (const auto& it : ps.items) {
    NamedTensor t;
    t.name = it.name;
    t.dims = it.tensor.shape();
    t.data.reserve(it.tensor.data().size());
    for (Real v : it.tensor.data()) t.data.push_back(static_cast<float>(v));
    out.push_back(std::move(t));
  }
  return out;
}

// Copies matching tensors into the store. Complains about the first name or
// shape that disagrees; extra tensors in the checkpoint are ignored.
template <class Real>
void bind_named_to_store(const std::vector<NamedTensor>& named, ParameterStore<Real>& ps) {
  for (auto& it : ps.items) {
    const NamedTensor* found = nullptr;
    for (const auto& t : named)
      if (t.name == it.name) {
        found = &t;
        break;
      }
    if (!found)
      throw std::runtime_error("checkpoint mismatch: tensor '" + it.name + "' missing");
    if (found->dims != it.tensor.shape())
      throw std::runtime_error("checkpoint mismatch: tensor '" + it.name +
                               "' has shape " + nn::shape_str(found->dims) + ", expected " +
                               nn::shape_str(it.tensor.shape()));
    for (size_t i = 0; i < found->data.size(); ++i)
      it.tensor.data()[i] = static_cast<Real>(found->data[i]);
  }
}

template <class Real>
void save_model_checkpoint(const std::string& path, const TridentModel<Real>& model,
                           std::vector<NamedTensor> extra = {}) {
  auto tensors = store_to_named(model.params());
  NamedTensor cfg;
  cfg.name = "meta.model_config";
  cfg.data = encode_model_config(model.config());
  cfg.dims = {static_cast<int>(cfg.data.size())};
  tensors.push_back(std::move(cfg));
  for (auto& t : extra) tensors.push_back(std::move(t));
  save_checkpoint(path, tensors);
}

inline ModelConfig checkpoint_model_config(const std::vector<NamedTensor>& named) {
  for (const auto& t : named)
    if (t.name == "meta.model_config") return decode_model_config(t.data);
  throw std::runtime_error("checkpoint: no meta.model_config tensor present");
}

}  // namespace trident::model
