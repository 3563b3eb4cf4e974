#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cstnet/encoder.hpp"
#include "cstnet/feature_io.hpp"
#include "cstnet/optim.hpp"

namespace cstnet {

// The full CSTNet model: two encoders with identical topology, differing
// only in input dimension.
template <class Real>
struct CstnetModel {
  Encoder<Real> audio;
  Encoder<Real> text;

  std::vector<Parameter<Real>*> parameters() {
    std::vector<Parameter<Real>*> out;
    for (auto& p : audio.params) out.push_back(&p);
    for (auto& p : text.params) out.push_back(&p);
    return out;
  }
};

template <class Real>
CstnetModel<Real> build_model(const EncoderConfig& audio_cfg,
                              const EncoderConfig& text_cfg) {
  CstnetModel<Real> m;
  m.audio = build_encoder<Real>(audio_cfg, "audio");
  m.text = build_encoder<Real>(text_cfg, "text");
  return m;
}

namespace detail {

// Deterministically ordered (name, tensor pointer) list covering every
// persisted tensor: parameter values, Adam moments, batchnorm stats.
template <class Real>
std::vector<std::pair<std::string, Tensor<Real>*>> named_tensors(
    CstnetModel<Real>& m) {
  std::vector<std::pair<std::string, Tensor<Real>*>> out;
  for (Encoder<Real>* enc : {&m.audio, &m.text}) {
    for (auto& p : enc->params) {
      out.emplace_back(p.name, &p.value);
      out.emplace_back("adam.m." + p.name, &p.adam_m);
      out.emplace_back("adam.v." + p.name, &p.adam_v);
    }
    for (int l = 1; l <= EncoderConfig::kNumLayers; ++l) {
      auto& layer = enc->layers[std::size_t(l - 1)];
      if (layer.gamma < 0) continue;
      const std::string base =
          enc->prefix + ".L" + std::to_string(l) + ".bn.running_";
      out.emplace_back(base + "mean", &layer.stats.mean);
      out.emplace_back(base + "var", &layer.stats.var);
    }
  }
  return out;
}

}  // namespace detail

// Checkpoint container format: magic "CSTN", version u32=1, tensor count
// u32, then per tensor: name length u16 + UTF-8 name, rank u8, dims (u32
// each), payload 32-bit little-endian floats. A trailing section carries
// the epoch counter, the optimizer step count, the PRNG state, and a
// config snapshot.
template <class Real>
void save_checkpoint(const std::string& path, CstnetModel<Real>& model,
                     int epoch, long step, const std::string& rng_state,
                     const std::string& config_json) {
  std::ostringstream out(std::ios::binary);
  out.write("CSTN", 4);
  io::write_u32le(out, 1);
  auto tensors = detail::named_tensors(model);
  io::write_u32le(out, static_cast<uint32_t>(tensors.size()));
  for (auto& [name, t] : tensors) {
    const uint16_t len = static_cast<uint16_t>(name.size());
    char b[2] = {char(len), char(len >> 8)};
    out.write(b, 2);
    out.write(name.data(), len);
    out.put(char(t->rank()));
    for (int d : t->shape) io::write_u32le(out, static_cast<uint32_t>(d));
    for (Real v : t->data) io::write_f32le(out, static_cast<float>(v));
  }
  io::write_u32le(out, static_cast<uint32_t>(epoch));
  io::write_u32le(out, static_cast<uint32_t>(step));
  io::write_u32le(out, static_cast<uint32_t>(rng_state.size()));
  out.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
  io::write_u32le(out, static_cast<uint32_t>(config_json.size()));
  out.write(config_json.data(),
            static_cast<std::streamsize>(config_json.size()));
  io::atomic_write(path, out.str());
}

struct CheckpointMeta {
  int epoch = 0;
  long step = 0;
  std::string rng_state;
  std::string config_json;
};

// Loads a checkpoint into an already-built model of matching shape.
// Unknown names or shape mismatches are errors; a truncated payload is
// reported as a corrupted tensor length.
template <class Real>
CheckpointMeta load_checkpoint(const std::string& path,
                               CstnetModel<Real>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CSTN", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  if (io::read_u32le(in) != 1)
    throw std::runtime_error("checkpoint: version mismatch");

  std::map<std::string, Tensor<Real>*> want;
  for (auto& [name, t] : detail::named_tensors(model)) want[name] = t;

  const uint32_t count = io::read_u32le(in);
  std::size_t loaded = 0;
  for (uint32_t i = 0; i < count; ++i) {
    unsigned char lb[2];
    in.read(reinterpret_cast<char*>(lb), 2);
    if (!in) throw std::runtime_error("checkpoint: corrupted tensor length");
    const uint16_t nlen = uint16_t(lb[0]) | uint16_t(lb[1]) << 8;
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const int rank = in.get();
    if (!in || rank < 0)
      throw std::runtime_error("checkpoint: corrupted tensor length");
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d)
      shape[std::size_t(d)] = static_cast<int>(io::read_u32le(in));
    const long numel = Tensor<Real>::numel_of(shape);
    auto it = want.find(name);
    if (it == want.end())
      throw std::runtime_error("checkpoint: unknown parameter name " + name);
    if (it->second->shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (long k = 0; k < numel; ++k) {
      if (in.peek() == EOF)
        throw std::runtime_error("checkpoint: corrupted tensor length");
      it->second->data[std::size_t(k)] = static_cast<Real>(io::read_f32le(in));
    }
    ++loaded;
  }
  if (loaded != want.size())
    throw std::runtime_error("checkpoint: missing tensors");

  CheckpointMeta meta;
  try {
    meta.epoch = static_cast<int>(io::read_u32le(in));
    meta.step = static_cast<long>(io::read_u32le(in));
    const uint32_t rlen = io::read_u32le(in);
    meta.rng_state.resize(rlen);
    in.read(meta.rng_state.data(), rlen);
    const uint32_t clen = io::read_u32le(in);
    meta.config_json.resize(clen);
    in.read(meta.config_json.data(), clen);
    if (!in) throw std::runtime_error("truncated");
  } catch (const std::exception&) {
    throw std::runtime_error("checkpoint: corrupted trailing section");
  }
  return meta;
}

}  // namespace cstnet
