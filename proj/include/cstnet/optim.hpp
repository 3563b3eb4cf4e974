#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cstnet/encoder.hpp"

namespace cstnet {

struct TrainConfig {
  double lr0 = 0.001;
  double decay_factor = 0.95;
  int decay_every_epochs = 3;
  double weight_decay = 5e-7;
  int epochs = 100;
  int batch_size = 16;
  uint64_t seed = 0;
  int max_audio_frames = 2000;
  int max_text_tokens = 200;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (lr0 <= 0 || decay_factor <= 0 || decay_every_epochs <= 0 ||
        epochs <= 0 || max_audio_frames <= 0 || max_text_tokens <= 0 ||
        weight_decay < 0)
      throw std::invalid_argument("train: non-positive config value");
    if (batch_size < 2)
      throw std::invalid_argument("train: batch_size must be >= 2");
  }
};

// Stepped schedule: lr = lr0 * factor^floor(e / every).
inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: negative epoch");
  return cfg.lr0 *
         std::pow(cfg.decay_factor, double(epoch / cfg.decay_every_epochs));
}

// One Adam update with bias correction. L2 regularization enters as
// coupled weight decay, g' = g + wd * w, applied before the moment
// updates; decay-exempt parameters (biases, batchnorm) skip it.
template <class Real>
void adam_step(std::vector<Parameter<Real>*>& params, double lr, long t,
               const TrainConfig& cfg) {
  if (t < 1) throw std::invalid_argument("adam: step count must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, double(t));
  for (Parameter<Real>* p : params) {
    const double wd = p->decay_exempt ? 0.0 : cfg.weight_decay;
    for (long i = 0; i < p->value.numel(); ++i) {
      const std::size_t k = std::size_t(i);
      const double g0 = double(p->grad.data[k]);
      if (!std::isfinite(g0))
        throw std::runtime_error("adam: non-finite gradient in " + p->name);
      const double g = g0 + wd * double(p->value.data[k]);
      const double m = cfg.adam_beta1 * double(p->adam_m.data[k]) +
                       (1.0 - cfg.adam_beta1) * g;
      const double v = cfg.adam_beta2 * double(p->adam_v.data[k]) +
                       (1.0 - cfg.adam_beta2) * g * g;
      p->adam_m.data[k] = Real(m);
      p->adam_v.data[k] = Real(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->value.data[k] =
          Real(double(p->value.data[k]) - lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

template <class Real>
void zero_grads(std::vector<Parameter<Real>*>& params) {
  for (Parameter<Real>* p : params) p->grad.fill(Real(0));
}

}  // namespace cstnet
