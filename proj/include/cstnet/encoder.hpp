#pragma once

#include <random>
#include <string>
#include <vector>

#include "cstnet/fbank.hpp"
#include "cstnet/nn_ops.hpp"
#include "cstnet/tensor.hpp"

namespace cstnet {

// A learnable tensor plus its accumulated gradient and Adam moments.
template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  Tensor<Real> adam_m;
  Tensor<Real> adam_v;
  bool decay_exempt = false;

  Parameter(std::string n, Tensor<Real> v, bool exempt = false)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape),
        adam_m(value.shape),
        adam_v(value.shape),
        decay_exempt(exempt) {}
};

struct EncoderConfig {
  int input_dim = 40;   // 40 mel bands (audio) or 100-d word vectors (text)
  int channels = 64;    // hidden width; 1024 for the full-size model
  int kernel = 3;       // time-kernel of the non-projection conv layers
  uint64_t seed = 0;
  static constexpr int kNumLayers = 13;

  int embed_dim() const { return channels; }
  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("encoder: input_dim < 1");
    if (channels < 1) throw std::invalid_argument("encoder: channels < 1");
    if (kernel < 1 || kernel % 2 == 0)
      throw std::invalid_argument("encoder: kernel must be odd and positive");
  }
};

// 13-layer convolutional embedding function: per-frame input projection,
// two residual blocks of four conv layers, two stride-2 convs between and
// after them, two per-frame FC layers (kernel-1 convs), masked mean pool.
template <class Real>
struct Encoder {
  struct Layer {
    int w = -1, b = -1;          // parameter indices (conv weight/bias)
    int gamma = -1, beta = -1;   // batchnorm parameter indices (-1 = none)
    int kernel = 1;
    int stride = 1;
    BnStats<Real> stats;
  };

  EncoderConfig cfg;
  std::string prefix;  // parameter name prefix, e.g. "audio" or "text"
  std::vector<Parameter<Real>> params;
  std::vector<Layer> layers;  // L1..L13

  Parameter<Real>& param(int i) { return params[std::size_t(i)]; }
  const Parameter<Real>& param(int i) const { return params[std::size_t(i)]; }
};

namespace detail {

inline double uniform_pm(std::mt19937_64& rng, double bound) {
  const double u = double(rng() >> 11) * 0x1.0p-53;  // [0,1)
  return (2.0 * u - 1.0) * bound;
}

}  // namespace detail

// Kernel width and stride of layer l (1-based) for a given config.
inline void encoder_layer_shape(const EncoderConfig& cfg, int layer,
                                int* kernel, int* stride) {
  if (layer < 1 || layer > EncoderConfig::kNumLayers)
    throw std::invalid_argument("encoder: layer index out of range");
  *kernel = cfg.kernel;
  *stride = 1;
  if (layer == 1 || layer >= 12) *kernel = 1;  // projection and FC layers
  if (layer == 6 || layer == 11) *stride = 2;
}

// Parameters are drawn Kaiming-uniform (fan-in) for conv weights, zeros
// for biases, gamma=1/beta=0, deterministically from cfg.seed.
template <class Real>
Encoder<Real> build_encoder(const EncoderConfig& cfg,
                            const std::string& prefix) {
  cfg.validate();
  Encoder<Real> enc;
  enc.cfg = cfg;
  enc.prefix = prefix;
  std::mt19937_64 rng(cfg.seed);
  for (int l = 1; l <= EncoderConfig::kNumLayers; ++l) {
    typename Encoder<Real>::Layer layer;
    encoder_layer_shape(cfg, l, &layer.kernel, &layer.stride);
    const int cin = l == 1 ? cfg.input_dim : cfg.channels;
    const int cout = cfg.channels;
    const std::string base = prefix + ".L" + std::to_string(l);

    Tensor<Real> w({cout, cin, layer.kernel});
    const double bound = std::sqrt(6.0 / (double(cin) * layer.kernel));
    for (auto& v : w.data)
      v = static_cast<Real>(detail::uniform_pm(rng, bound));
    layer.w = static_cast<int>(enc.params.size());
    enc.params.emplace_back(base + ".conv.w", std::move(w));
    Tensor<Real> b({cout});
    layer.b = static_cast<int>(enc.params.size());
    enc.params.emplace_back(base + ".conv.b", std::move(b), true);

    if (l < EncoderConfig::kNumLayers) {  // bn+relu after each hidden layer
      Tensor<Real> gamma({cout});
      gamma.fill(Real(1));
      layer.gamma = static_cast<int>(enc.params.size());
      enc.params.emplace_back(base + ".bn.gamma", std::move(gamma), true);
      Tensor<Real> beta({cout});
      layer.beta = static_cast<int>(enc.params.size());
      enc.params.emplace_back(base + ".bn.beta", std::move(beta), true);
      layer.stats = BnStats<Real>(cout);
    }
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

// Closed-form parameter element count for a config (all 13 convs + 12 bns).
inline long encoder_param_count(const EncoderConfig& cfg) {
  long n = 0;
  for (int l = 1; l <= EncoderConfig::kNumLayers; ++l) {
    int k, s;
    encoder_layer_shape(cfg, l, &k, &s);
    const long cin = l == 1 ? cfg.input_dim : cfg.channels;
    n += long(cfg.channels) * cin * k + cfg.channels;      // conv w + b
    if (l < EncoderConfig::kNumLayers) n += 2L * cfg.channels;  // bn
  }
  return n;
}

// Receptive field of one activation at layer `layer` in milliseconds,
// assuming 25 ms analysis windows at 10 ms hop on the frame axis.
inline double compute_receptive_field_ms(const EncoderConfig& cfg, int layer) {
  if (layer < 1 || layer > EncoderConfig::kNumLayers)
    throw std::invalid_argument("encoder: layer index out of range");
  long rf = 1, jump = 1;
  for (int l = 1; l <= layer; ++l) {
    int k, s;
    encoder_layer_shape(cfg, l, &k, &s);
    rf += long(k - 1) * jump;
    jump *= s;
  }
  return double(rf - 1) * 10.0 + 25.0;
}

template <class Real>
struct EncoderForward {
  int embed_id = -1;                   // [B, C]
  std::vector<int> layer_ids;          // 13 pre-pool activations [B,C,T_l]
  std::vector<BatchLengths> layer_lens;
  std::vector<int> layer_hop_ms;
};

// Declares every parameter as a tape leaf; returns param index -> node id.
template <class Real>
std::vector<int> declare_params(Tape<Real>& tape, Encoder<Real>& enc,
                                bool requires_grad) {
  std::vector<int> ids;
  ids.reserve(enc.params.size());
  for (auto& p : enc.params) ids.push_back(tape.leaf(p.value, requires_grad));
  return ids;
}

// Adds tape gradients back into each Parameter's accumulator.
template <class Real>
void harvest_grads(Tape<Real>& tape, Encoder<Real>& enc,
                   const std::vector<int>& ids) {
  for (std::size_t i = 0; i < enc.params.size(); ++i) {
    if (!tape.has_grad(ids[i])) continue;
    const Tensor<Real>& g = tape.grad(ids[i]);
    for (long j = 0; j < g.numel(); ++j)
      enc.params[i].grad.data[std::size_t(j)] += g.data[std::size_t(j)];
  }
}

// Runs the 13-layer stack on an end-padded batch [B, input_dim, T].
// Residual skips wrap each conv pair inside the two 4-layer blocks.
template <class Real>
EncoderForward<Real> encoder_forward(Tape<Real>& tape, Encoder<Real>& enc,
                                     const std::vector<int>& pid, int x_id,
                                     const BatchLengths& in_lens, BnMode mode,
                                     int input_hop_ms = 10) {
  const Tensor<Real>& x = tape.value(x_id);
  if (x.rank() != 3 || x.dim(1) != enc.cfg.input_dim)
    throw std::invalid_argument("encoder: input feature dimension mismatch");
  for (int v : in_lens)
    if (v < 4)
      throw std::invalid_argument(
          "encoder: utterance shorter than 4 valid frames");

  EncoderForward<Real> out;
  int cur = x_id;
  BatchLengths lens = in_lens;
  int hop = input_hop_ms;
  int skip_id = -1;          // block input for the current residual pair
  BatchLengths skip_lens;

  auto run_conv = [&](int l) {
    auto& layer = enc.layers[std::size_t(l - 1)];
    BatchLengths next;
    cur = ops::conv1d(tape, cur, pid[std::size_t(layer.w)],
                      pid[std::size_t(layer.b)], layer.stride, Padding::Same,
                      lens, &next);
    lens = std::move(next);
    hop *= layer.stride;
    if (layer.gamma >= 0)
      cur = ops::batchnorm1d(tape, cur, pid[std::size_t(layer.gamma)],
                             pid[std::size_t(layer.beta)], lens, layer.stats,
                             mode);
  };

  for (int l = 1; l <= EncoderConfig::kNumLayers; ++l) {
    const bool in_block = (l >= 2 && l <= 5) || (l >= 7 && l <= 10);
    const bool pair_start = in_block && (l == 2 || l == 4 || l == 7 || l == 9);
    const bool pair_end = in_block && !pair_start;
    if (pair_start) {
      skip_id = cur;
      skip_lens = lens;
    }
    run_conv(l);
    if (pair_end) cur = ops::add(tape, cur, skip_id);
    if (l < EncoderConfig::kNumLayers) cur = ops::relu(tape, cur);
    out.layer_ids.push_back(cur);
    out.layer_lens.push_back(lens);
    out.layer_hop_ms.push_back(hop);
  }
  out.embed_id = ops::masked_mean_pool(tape, cur, lens);
  return out;
}

// Eval-mode convenience: embeddings plus per-layer activations for a batch
// of feature matrices, without keeping the tape around.
template <class Real>
Tensor<Real> features_to_batch(const std::vector<const FeatureMatrix*>& feats,
                               BatchLengths* lens) {
  int t_max = 0;
  const int f = feats.empty() ? 0 : feats[0]->cols;
  for (const auto* m : feats) {
    if (m->cols != f)
      throw std::invalid_argument("batch: inconsistent feature dims");
    t_max = std::max(t_max, m->rows);
  }
  Tensor<Real> x({static_cast<int>(feats.size()), f, t_max});
  lens->clear();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const FeatureMatrix& m = *feats[i];
    lens->push_back(m.rows);
    for (int t = 0; t < m.rows; ++t)
      for (int c = 0; c < f; ++c)
        x.at(static_cast<int>(i), c, t) = static_cast<Real>(m.at(t, c));
  }
  return x;
}

}  // namespace cstnet
