#pragma once

#include <random>
#include <vector>

#include "cstnet/ctc.hpp"
#include "cstnet/encoder.hpp"
#include "cstnet/optim.hpp"

namespace cstnet {

// Frozen-feature CTC probe: a single linear layer into a softmax over
// phone classes, trained with CTC. Encoder parameters are never touched.
struct ProbeConfig {
  int layer = 13;          // 1-based encoder layer to probe
  double lr = 1e-3;
  int epochs = 10;
  uint64_t seed = 0;
};

struct ProbeModel {
  Parameter<double> weight;  // [D, classes]
  Parameter<double> bias;    // [classes]
  int layer = 0;
  int classes = 0;

  ProbeModel(int dim, int n_classes, int layer_index)
      : weight("probe.w", Tensor<double>({dim, n_classes})),
        bias("probe.b", Tensor<double>({n_classes}), true),
        layer(layer_index),
        classes(n_classes) {}
};

struct LabeledFeatures {
  std::string utt_id;
  FeatureMatrix feats;      // layer activations, T' x D
  std::vector<int> labels;  // phone classes (blank excluded)
};

struct ProbeReport {
  double per = 1.0;
  double final_mean_loss = 0.0;
  int skipped_unalignable = 0;
  int evaluated = 0;
};

// Eval-mode activations of one utterance at a single encoder layer.
template <class Real>
FeatureMatrix extract_layer_features(Encoder<Real>& enc,
                                     const FeatureMatrix& input, int layer) {
  if (layer < 1 || layer > EncoderConfig::kNumLayers)
    throw std::invalid_argument("probe: layer index out of range");
  Tape<Real> tape;
  BatchLengths lens;
  std::vector<const FeatureMatrix*> one{&input};
  const int x = tape.leaf(features_to_batch<Real>(one, &lens), false);
  auto pid = declare_params(tape, enc, false);
  auto fwd = encoder_forward(tape, enc, pid, x, lens, BnMode::Eval,
                             input.frame_hop_ms);
  const Tensor<Real>& act = tape.value(fwd.layer_ids[std::size_t(layer - 1)]);
  const int t_valid = fwd.layer_lens[std::size_t(layer - 1)][0];
  const int c = act.dim(1);
  FeatureMatrix out = FeatureMatrix::zeros(
      t_valid, c, fwd.layer_hop_ms[std::size_t(layer - 1)]);
  for (int t = 0; t < t_valid; ++t)
    for (int ch = 0; ch < c; ++ch)
      out.at(t, ch) = static_cast<float>(act.at(0, ch, t));
  return out;
}

namespace detail {

// Frame logits -> log-softmax rows.
inline void probe_log_probs(const ProbeModel& m, const FeatureMatrix& feats,
                            std::vector<double>* logp) {
  const int T = feats.rows, D = feats.cols, C = m.classes;
  logp->assign(std::size_t(T) * C, 0.0);
  for (int t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < C; ++k) {
      double z = m.bias.value.at(k);
      for (int d = 0; d < D; ++d) z += m.weight.value.at(d, k) * feats.at(t, d);
      (*logp)[std::size_t(t) * C + k] = z;
      mx = std::max(mx, z);
    }
    double lse = 0;
    for (int k = 0; k < C; ++k)
      lse += std::exp((*logp)[std::size_t(t) * C + k] - mx);
    lse = mx + std::log(lse);
    for (int k = 0; k < C; ++k) (*logp)[std::size_t(t) * C + k] -= lse;
  }
}

}  // namespace detail

inline std::vector<int> probe_decode(const ProbeModel& m,
                                     const FeatureMatrix& feats) {
  std::vector<double> logp;
  detail::probe_log_probs(m, feats, &logp);
  return best_path_decode(feats.rows, m.classes, logp);
}

inline double probe_eval_per(const ProbeModel& m,
                             const std::vector<LabeledFeatures>& corpus,
                             int* evaluated = nullptr) {
  std::vector<std::vector<int>> refs, hyps;
  for (const auto& u : corpus) {
    if (u.labels.empty()) continue;
    refs.push_back(u.labels);
    hyps.push_back(probe_decode(m, u.feats));
  }
  if (evaluated) *evaluated = static_cast<int>(refs.size());
  return phone_error_rate(refs, hyps);
}

// Adam on the probe's weight and bias only. Utterances whose frame count
// cannot align their label are counted and skipped, not truncated.
inline ProbeReport train_probe(ProbeModel& model,
                               const std::vector<LabeledFeatures>& train,
                               const std::vector<LabeledFeatures>& heldout,
                               const ProbeConfig& cfg) {
  ProbeReport rep;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train[i].feats.rows >= detail::ctc_min_frames(train[i].labels) &&
        !train[i].labels.empty())
      usable.push_back(i);
    else
      ++rep.skipped_unalignable;
  }
  if (usable.empty())
    throw std::runtime_error("probe: every utterance unalignable");

  TrainConfig opt;
  opt.lr0 = cfg.lr;
  opt.weight_decay = 0.0;
  std::vector<Parameter<double>*> params{&model.weight, &model.bias};
  std::mt19937_64 rng(cfg.seed);
  long step = 0;
  const int D = model.weight.value.dim(0), C = model.classes;

  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(usable.begin(), usable.end(), rng);
    double loss_sum = 0;
    for (std::size_t idx : usable) {
      const LabeledFeatures& u = train[idx];
      std::vector<double> logp;
      detail::probe_log_probs(model, u.feats, &logp);
      CtcInstance inst{u.feats.rows, C, logp, u.labels};
      std::vector<double> g;
      loss_sum += ctc_loss(inst, &g);
      // backprop through the log-softmax into W and b
      for (int t = 0; t < u.feats.rows; ++t) {
        double gsum = 0;
        for (int k = 0; k < C; ++k) gsum += g[std::size_t(t) * C + k];
        for (int k = 0; k < C; ++k) {
          const double p = std::exp(logp[std::size_t(t) * C + k]);
          const double dz = g[std::size_t(t) * C + k] - p * gsum;
          model.bias.grad.at(k) += dz;
          for (int d = 0; d < D; ++d)
            model.weight.grad.at(d, k) += dz * u.feats.at(t, d);
        }
      }
      ++step;
      adam_step(params, cfg.lr, step, opt);
      zero_grads(params);
    }
    rep.final_mean_loss = loss_sum / double(usable.size());
  }
  rep.per = probe_eval_per(model, heldout, &rep.evaluated);
  return rep;
}

}  // namespace cstnet
