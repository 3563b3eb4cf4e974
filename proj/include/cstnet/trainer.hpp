#pragma once

#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cstnet/checkpoint.hpp"
#include "cstnet/loss.hpp"
#include "cstnet/optim.hpp"

namespace cstnet {

// One paired training example: log-mel audio features and per-token text
// embeddings for the same utterance.
struct PairedExample {
  std::string utt_id;
  FeatureMatrix audio;  // T x 40
  FeatureMatrix text;   // L x 100
};

struct EpochReport {
  int epoch = 0;
  double lr = 0.0;
  double mean_l_s = 0.0;
  double mean_l_h = 0.0;
  double mean_total = 0.0;
  int batches = 0;
  int dropped_examples = 0;  // tail batch smaller than 2
};

template <class Real>
struct TrainState {
  CstnetModel<Real> model;
  TrainConfig cfg;
  std::mt19937_64 rng;
  int epoch = 0;
  long step = 0;

  std::string rng_state() const {
    std::ostringstream os;
    os << rng;
    return os.str();
  }
  void set_rng_state(const std::string& s) {
    std::istringstream is(s);
    is >> rng;
  }
};

namespace detail {

inline FeatureMatrix truncated(const FeatureMatrix& m, int cap) {
  if (m.rows <= cap) return m;
  FeatureMatrix out = FeatureMatrix::zeros(cap, m.cols, m.frame_hop_ms);
  std::copy(m.data.begin(), m.data.begin() + std::size_t(cap) * m.cols,
            out.data.begin());
  for (int t = 0; t < cap; ++t) out.mask[std::size_t(t)] = m.mask[std::size_t(t)];
  return out;
}

}  // namespace detail

// One pass over the dataset: seeded shuffle, per-batch padding to the
// batch max with masks, truncation to the configured caps, one combined
// loss backward + Adam step per batch. A final batch of size < 2 is
// dropped (the loss needs at least one impostor).
template <class Real>
EpochReport train_epoch(TrainState<Real>& state,
                        const std::vector<PairedExample>& data) {
  state.cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const double lr = lr_at_epoch(state.cfg, state.epoch);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::shuffle(order.begin(), order.end(), state.rng);

  auto params = state.model.parameters();
  EpochReport rep;
  rep.epoch = state.epoch;
  rep.lr = lr;

  double sum_ls = 0, sum_lh = 0, sum_total = 0;
  const int bs = state.cfg.batch_size;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(bs)) {
    const std::size_t end = std::min(order.size(), start + std::size_t(bs));
    if (end - start < 2) {
      rep.dropped_examples += static_cast<int>(end - start);
      break;
    }
    std::vector<FeatureMatrix> audio_feats, text_feats;
    for (std::size_t i = start; i < end; ++i) {
      audio_feats.push_back(
          detail::truncated(data[order[i]].audio, state.cfg.max_audio_frames));
      text_feats.push_back(
          detail::truncated(data[order[i]].text, state.cfg.max_text_tokens));
    }
    std::vector<const FeatureMatrix*> ap, tp;
    for (auto& m : audio_feats) ap.push_back(&m);
    for (auto& m : text_feats) tp.push_back(&m);

    Tape<Real> tape;
    BatchLengths alens, tlens;
    const int ax = tape.leaf(features_to_batch<Real>(ap, &alens), false);
    const int tx = tape.leaf(features_to_batch<Real>(tp, &tlens), false);
    auto apid = declare_params(tape, state.model.audio, true);
    auto tpid = declare_params(tape, state.model.text, true);
    auto afwd = encoder_forward(tape, state.model.audio, apid, ax, alens,
                                BnMode::Train);
    auto tfwd = encoder_forward(tape, state.model.text, tpid, tx, tlens,
                                BnMode::Train);
    LossBreakdown lb;
    const int loss_id =
        total_loss(tape, afwd.embed_id, tfwd.embed_id, state.rng, &lb);
    tape.backward(loss_id);
    harvest_grads(tape, state.model.audio, apid);
    harvest_grads(tape, state.model.text, tpid);

    ++state.step;
    adam_step(params, lr, state.step, state.cfg);
    zero_grads(params);

    sum_ls += lb.l_s;
    sum_lh += lb.l_h;
    sum_total += lb.total;
    ++rep.batches;
  }
  if (rep.batches == 0)
    throw std::runtime_error("train: no batch of size >= 2 available");
  rep.mean_l_s = sum_ls / rep.batches;
  rep.mean_l_h = sum_lh / rep.batches;
  rep.mean_total = sum_total / rep.batches;
  ++state.epoch;
  return rep;
}

// Eval-mode embeddings for a whole dataset, row i = example i.
template <class Real>
void embed_dataset(CstnetModel<Real>& model,
                   const std::vector<PairedExample>& data,
                   Tensor<Real>* audio_out, Tensor<Real>* text_out,
                   int batch_size = 32) {
  const int d = model.audio.cfg.embed_dim();
  *audio_out = Tensor<Real>({static_cast<int>(data.size()), d});
  *text_out = Tensor<Real>({static_cast<int>(data.size()), d});
  for (std::size_t start = 0; start < data.size();
       start += std::size_t(batch_size)) {
    const std::size_t end =
        std::min(data.size(), start + std::size_t(batch_size));
    std::vector<const FeatureMatrix*> ap, tp;
    for (std::size_t i = start; i < end; ++i) {
      ap.push_back(&data[i].audio);
      tp.push_back(&data[i].text);
    }
    Tape<Real> tape;
    BatchLengths alens, tlens;
    const int ax = tape.leaf(features_to_batch<Real>(ap, &alens), false);
    const int tx = tape.leaf(features_to_batch<Real>(tp, &tlens), false);
    auto apid = declare_params(tape, model.audio, false);
    auto tpid = declare_params(tape, model.text, false);
    auto afwd =
        encoder_forward(tape, model.audio, apid, ax, alens, BnMode::Eval);
    auto tfwd =
        encoder_forward(tape, model.text, tpid, tx, tlens, BnMode::Eval);
    const Tensor<Real>& ae = tape.value(afwd.embed_id);
    const Tensor<Real>& te = tape.value(tfwd.embed_id);
    for (std::size_t i = start; i < end; ++i)
      for (int c = 0; c < d; ++c) {
        audio_out->at(static_cast<int>(i), c) =
            ae.at(static_cast<int>(i - start), c);
        text_out->at(static_cast<int>(i), c) =
            te.at(static_cast<int>(i - start), c);
      }
  }
}

inline std::string epoch_csv_header() {
  return "epoch,lr,mean_l_s,mean_l_h,mean_total";
}

inline std::string epoch_csv_row(const EpochReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.epoch << ',' << r.lr << ',' << r.mean_l_s << ',' << r.mean_l_h
     << ',' << r.mean_total;
  return os.str();
}

}  // namespace cstnet
