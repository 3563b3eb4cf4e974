#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cstnet {

constexpr int kCtcBlank = 0;

// Ordered phone inventory; index 0 is reserved for the CTC blank, so
// phone i maps to class i+1.
struct PhoneVocab {
  std::vector<std::string> phones;
  std::map<std::string, int> index;

  static PhoneVocab from_symbols(const std::vector<std::string>& symbols) {
    PhoneVocab v;
    for (const auto& s : symbols) {
      if (v.index.count(s))
        throw std::invalid_argument("vocab: duplicate phone " + s);
      v.index[s] = static_cast<int>(v.phones.size()) + 1;
      v.phones.push_back(s);
    }
    return v;
  }
  int num_classes() const { return static_cast<int>(phones.size()) + 1; }
  int class_of(const std::string& s) const {
    auto it = index.find(s);
    if (it == index.end()) throw std::invalid_argument("vocab: unknown phone " + s);
    return it->second;
  }
};

// Per-frame log-softmax outputs (T' x classes) plus a label sequence of
// phone classes (blank excluded).
struct CtcInstance {
  int frames = 0;
  int classes = 0;
  std::vector<double> log_probs;  // row-major
  std::vector<int> labels;

  double lp(int t, int k) const { return log_probs[std::size_t(t) * classes + k]; }
};

namespace detail {

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

inline int ctc_min_frames(const std::vector<int>& labels) {
  int need = static_cast<int>(labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i)
    need += labels[i] == labels[i - 1];
  return need;
}

}  // namespace detail

// Negative log probability of all alignments collapsing to the label,
// via the forward recursion over the 2L+1 blank-extended sequence.
// When `grad` is non-null it receives d(loss)/d(log_probs) from the
// alpha-beta recursions, all in log-domain 64-bit arithmetic.
inline double ctc_loss(const CtcInstance& inst,
                       std::vector<double>* grad = nullptr) {
  const int T = inst.frames, C = inst.classes;
  const int L = static_cast<int>(inst.labels.size());
  if (T < 1 || C < 2) throw std::invalid_argument("ctc: bad instance shape");
  for (int l : inst.labels)
    if (l <= kCtcBlank || l >= C)
      throw std::invalid_argument("ctc: label contains blank or out-of-range class");
  if (T < detail::ctc_min_frames(inst.labels))
    throw std::invalid_argument("ctc: label longer than alignable");

  const int S = 2 * L + 1;
  const double ninf = -std::numeric_limits<double>::infinity();
  auto sym = [&](int s) { return s % 2 == 0 ? kCtcBlank : inst.labels[std::size_t(s / 2)]; };

  std::vector<double> alpha(std::size_t(T) * S, ninf);
  alpha[0] = inst.lp(0, kCtcBlank);
  if (S > 1) alpha[1] = inst.lp(0, sym(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha[std::size_t(t - 1) * S + s];
      if (s >= 1) a = detail::log_add(a, alpha[std::size_t(t - 1) * S + s - 1]);
      if (s >= 2 && sym(s) != kCtcBlank && sym(s) != sym(s - 2))
        a = detail::log_add(a, alpha[std::size_t(t - 1) * S + s - 2]);
      if (a != ninf) a += inst.lp(t, sym(s));
      alpha[std::size_t(t) * S + s] = a;
    }
  }
  double log_p = alpha[std::size_t(T - 1) * S + S - 1];
  if (S > 1) log_p = detail::log_add(log_p, alpha[std::size_t(T - 1) * S + S - 2]);
  if (log_p == ninf)
    throw std::runtime_error("ctc: no feasible alignment");
  const double loss = -log_p;

  if (grad) {
    // beta excludes the emission at its own frame.
    std::vector<double> beta(std::size_t(T) * S, ninf);
    beta[std::size_t(T - 1) * S + S - 1] = 0.0;
    if (S > 1) beta[std::size_t(T - 1) * S + S - 2] = 0.0;
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double b = beta[std::size_t(t + 1) * S + s] + inst.lp(t + 1, sym(s));
        if (s + 1 < S)
          b = detail::log_add(b, beta[std::size_t(t + 1) * S + s + 1] +
                                     inst.lp(t + 1, sym(s + 1)));
        if (s + 2 < S && sym(s + 2) != kCtcBlank && sym(s + 2) != sym(s))
          b = detail::log_add(b, beta[std::size_t(t + 1) * S + s + 2] +
                                     inst.lp(t + 1, sym(s + 2)));
        beta[std::size_t(t) * S + s] = b;
      }
    }
    grad->assign(std::size_t(T) * C, 0.0);
    for (int t = 0; t < T; ++t) {
      std::vector<double> occ(static_cast<std::size_t>(C), ninf);
      for (int s = 0; s < S; ++s) {
        const double ab = alpha[std::size_t(t) * S + s] + beta[std::size_t(t) * S + s];
        if (ab == ninf) continue;
        occ[std::size_t(sym(s))] = detail::log_add(occ[std::size_t(sym(s))], ab);
      }
      for (int k = 0; k < C; ++k)
        if (occ[std::size_t(k)] != ninf)
          (*grad)[std::size_t(t) * C + k] = -std::exp(occ[std::size_t(k)] - log_p);
    }
  }
  return loss;
}

// Greedy best-path decoding: per-frame argmax (ties to the lowest class),
// collapse consecutive repeats, drop blanks.
inline std::vector<int> best_path_decode(int frames, int classes,
                                         const std::vector<double>& log_probs) {
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < frames; ++t) {
    int arg = 0;
    for (int k = 1; k < classes; ++k)
      if (log_probs[std::size_t(t) * classes + k] >
          log_probs[std::size_t(t) * classes + arg])
        arg = k;
    if (arg != prev && arg != kCtcBlank) out.push_back(arg);
    prev = arg;
  }
  return out;
}

// Unit-cost Levenshtein distance.
inline long edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const long sub = prev[j - 1] + (a[i - 1] != b[j - 1]);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Corpus-level phone error rate: summed edit distance over total
// reference length.
inline double phone_error_rate(const std::vector<std::vector<int>>& refs,
                               const std::vector<std::vector<int>>& hyps) {
  if (refs.size() != hyps.size())
    throw std::invalid_argument("per: ref/hyp count mismatch");
  long dist = 0, len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    dist += edit_distance(refs[i], hyps[i]);
    len += static_cast<long>(refs[i].size());
  }
  if (len == 0) throw std::invalid_argument("per: empty reference corpus");
  return double(dist) / double(len);
}

}  // namespace cstnet
