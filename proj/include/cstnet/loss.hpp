#pragma once

#include <random>
#include <vector>

#include "cstnet/tensor.hpp"

namespace cstnet {

struct LossBreakdown {
  double l_s = 0.0;
  double l_h = 0.0;
  double total = 0.0;
  std::vector<int> impostor_audio;  // sampled index of a-bar per example
  std::vector<int> impostor_text;   // sampled index of t-bar per example
  int empty_candidate_sets = 0;     // semi-hard terms with no candidates
};

// S[j][k] = dot(t_j, a_k), raw inner products, no normalization.
template <class Real>
std::vector<std::vector<double>> similarity_matrix(const Tensor<Real>& text,
                                                   const Tensor<Real>& audio) {
  if (text.rank() != 2 || audio.rank() != 2 || text.dim(1) != audio.dim(1))
    throw std::invalid_argument("similarity: dimension mismatch");
  const int b_t = text.dim(0), b_a = audio.dim(0), d = text.dim(1);
  std::vector<std::vector<double>> s(static_cast<std::size_t>(b_t),
                                     std::vector<double>(static_cast<std::size_t>(b_a)));
  for (int j = 0; j < b_t; ++j)
    for (int k = 0; k < b_a; ++k) {
      double acc = 0;
      for (int i = 0; i < d; ++i)
        acc += double(text.at(j, i)) * double(audio.at(k, i));
      s[std::size_t(j)][std::size_t(k)] = acc;
    }
  return s;
}

// Draws one audio and one text impostor index per example, uniformly from
// the batch excluding the example itself.
inline void draw_impostors(int batch, std::mt19937_64& rng,
                           std::vector<int>* audio_imp,
                           std::vector<int>* text_imp) {
  if (batch < 2) throw std::invalid_argument("loss: batch size < 2");
  audio_imp->resize(std::size_t(batch));
  text_imp->resize(std::size_t(batch));
  for (int j = 0; j < batch; ++j) {
    for (auto* dst : {audio_imp, text_imp}) {
      const int r = int(rng() % uint64_t(batch - 1));
      (*dst)[std::size_t(j)] = r >= j ? r + 1 : r;
    }
  }
}

// Eq.-style randomly-sampled triplet loss value, margin 1:
// sum_j max(0, t_j.abar_j - t_j.a_j + 1) + max(0, tbar_j.a_j - t_j.a_j + 1).
template <class Real>
double sampled_triplet_loss(const Tensor<Real>& audio, const Tensor<Real>& text,
                            const std::vector<int>& impostor_audio,
                            const std::vector<int>& impostor_text) {
  const auto S = similarity_matrix(text, audio);
  const int B = audio.dim(0);
  if (B < 2) throw std::invalid_argument("loss: batch size < 2");
  double l = 0;
  for (int j = 0; j < B; ++j) {
    const double pos = S[std::size_t(j)][std::size_t(j)];
    const int ab = impostor_audio[std::size_t(j)];
    const int tb = impostor_text[std::size_t(j)];
    l += std::max(0.0, S[std::size_t(j)][std::size_t(ab)] - pos + 1.0);
    l += std::max(0.0, S[std::size_t(tb)][std::size_t(j)] - pos + 1.0);
  }
  return l;
}

// Semi-hard negative triplet loss: each term maximizes over impostors that
// score strictly below the matched pair; empty candidate sets contribute 0.
template <class Real>
double semihard_triplet_loss(const Tensor<Real>& audio,
                             const Tensor<Real>& text,
                             int* empty_candidate_sets = nullptr) {
  const auto S = similarity_matrix(text, audio);
  const int B = audio.dim(0);
  if (B < 2) throw std::invalid_argument("loss: batch size < 2");
  double l = 0;
  int empty = 0;
  for (int j = 0; j < B; ++j) {
    const double pos = S[std::size_t(j)][std::size_t(j)];
    double best_a = -1, best_t = -1;
    bool has_a = false, has_t = false;
    for (int k = 0; k < B; ++k) {
      if (S[std::size_t(j)][std::size_t(k)] < pos &&
          (!has_a || S[std::size_t(j)][std::size_t(k)] > best_a)) {
        best_a = S[std::size_t(j)][std::size_t(k)];
        has_a = true;
      }
      if (S[std::size_t(k)][std::size_t(j)] < pos &&
          (!has_t || S[std::size_t(k)][std::size_t(j)] > best_t)) {
        best_t = S[std::size_t(k)][std::size_t(j)];
        has_t = true;
      }
    }
    if (has_a) l += std::max(0.0, best_a - pos + 1.0); else ++empty;
    if (has_t) l += std::max(0.0, best_t - pos + 1.0); else ++empty;
  }
  if (empty_candidate_sets) *empty_candidate_sets = empty;
  return l;
}

// Combined training objective on a batch of paired embeddings.
// audio_id/text_id are [B,D] tape nodes; the returned scalar node carries
// total = l_s + l_h. The randomly-sampled term uses the supplied impostor
// indices; the semi-hard term maximizes over strict-inequality candidate
// sets, ties broken toward the lowest index, empty sets contributing 0.
template <class Real>
int total_loss(Tape<Real>& tape, int audio_id, int text_id,
               const std::vector<int>& impostor_audio,
               const std::vector<int>& impostor_text,
               LossBreakdown* breakdown) {
  const Tensor<Real>& a = tape.value(audio_id);
  const Tensor<Real>& t = tape.value(text_id);
  if (a.rank() != 2 || t.rank() != 2 || !a.same_shape(t))
    throw std::invalid_argument("loss: embedding shape mismatch");
  const int B = a.dim(0), D = a.dim(1);
  if (B < 2) throw std::invalid_argument("loss: batch size < 2");
  if (int(impostor_audio.size()) != B || int(impostor_text.size()) != B)
    throw std::invalid_argument("loss: impostor index count mismatch");

  const auto S = similarity_matrix(t, a);  // S[j][k] = t_j . a_k

  // Active hinge bookkeeping for the backward pass:
  // each entry is (text index, audio index, sign) contributing
  // sign * t_j . a_k to the loss.
  struct Term {
    int tj, ak;
    double sign;
  };
  std::vector<Term> terms;

  double l_s = 0.0;
  for (int j = 0; j < B; ++j) {
    const int ab = impostor_audio[std::size_t(j)];
    const int tb = impostor_text[std::size_t(j)];
    if (ab == j || tb == j || ab < 0 || ab >= B || tb < 0 || tb >= B)
      throw std::invalid_argument("loss: bad impostor index");
    const double pos = S[std::size_t(j)][std::size_t(j)];
    const double h1 = S[std::size_t(j)][std::size_t(ab)] - pos + 1.0;
    if (h1 > 0) {
      l_s += h1;
      terms.push_back({j, ab, 1.0});
      terms.push_back({j, j, -1.0});
    }
    const double h2 = S[std::size_t(tb)][std::size_t(j)] - pos + 1.0;
    if (h2 > 0) {
      l_s += h2;
      terms.push_back({tb, j, 1.0});
      terms.push_back({j, j, -1.0});
    }
  }

  double l_h = 0.0;
  int empty_sets = 0;
  for (int j = 0; j < B; ++j) {
    const double pos = S[std::size_t(j)][std::size_t(j)];
    // audio candidates: a with t_j . a < t_j . a_j
    int best_a = -1;
    for (int k = 0; k < B; ++k)
      if (S[std::size_t(j)][std::size_t(k)] < pos &&
          (best_a < 0 ||
           S[std::size_t(j)][std::size_t(k)] > S[std::size_t(j)][std::size_t(best_a)]))
        best_a = k;
    if (best_a >= 0) {
      const double h = S[std::size_t(j)][std::size_t(best_a)] - pos + 1.0;
      if (h > 0) {
        l_h += h;
        terms.push_back({j, best_a, 1.0});
        terms.push_back({j, j, -1.0});
      }
    } else {
      ++empty_sets;
    }
    // text candidates: t with t . a_j < t_j . a_j
    int best_t = -1;
    for (int k = 0; k < B; ++k)
      if (S[std::size_t(k)][std::size_t(j)] < pos &&
          (best_t < 0 ||
           S[std::size_t(k)][std::size_t(j)] > S[std::size_t(best_t)][std::size_t(j)]))
        best_t = k;
    if (best_t >= 0) {
      const double h = S[std::size_t(best_t)][std::size_t(j)] - pos + 1.0;
      if (h > 0) {
        l_h += h;
        terms.push_back({best_t, j, 1.0});
        terms.push_back({j, j, -1.0});
      }
    } else {
      ++empty_sets;
    }
  }

  if (breakdown) {
    breakdown->l_s = l_s;
    breakdown->l_h = l_h;
    breakdown->total = l_s + l_h;
    breakdown->impostor_audio = impostor_audio;
    breakdown->impostor_text = impostor_text;
    breakdown->empty_candidate_sets = empty_sets;
  }

  Tensor<Real> y({1});
  y.at(0) = static_cast<Real>(l_s + l_h);
  const bool rg = tape.requires_grad(audio_id) || tape.requires_grad(text_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Real g = tp.grad(y_id).at(0);
      const Tensor<Real>& av = tp.value(audio_id);
      const Tensor<Real>& tv = tp.value(text_id);
      Tensor<Real> ga(av.shape), gt(tv.shape);
      for (const Term& term : terms) {
        const Real s = g * static_cast<Real>(term.sign);
        for (int i = 0; i < D; ++i) {
          gt.at(term.tj, i) += s * av.at(term.ak, i);
          ga.at(term.ak, i) += s * tv.at(term.tj, i);
        }
      }
      accumulate_grad(tp, audio_id, ga);
      accumulate_grad(tp, text_id, gt);
    });
  }
  return y_id;
}

// Convenience wrapper drawing the impostors from a seeded PRNG.
template <class Real>
int total_loss(Tape<Real>& tape, int audio_id, int text_id,
               std::mt19937_64& rng, LossBreakdown* breakdown) {
  std::vector<int> ia, it;
  draw_impostors(tape.value(audio_id).dim(0), rng, &ia, &it);
  return total_loss(tape, audio_id, text_id, ia, it, breakdown);
}

}  // namespace cstnet
