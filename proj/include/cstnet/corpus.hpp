#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cstnet/abx.hpp"
#include "cstnet/feature_io.hpp"
#include "cstnet/text_embed.hpp"
#include "cstnet/wav.hpp"

namespace cstnet {

struct ManifestEntry {
  std::string utt_id;
  std::string path;  // .wav or .feat, relative to the manifest's directory
  std::string translation;
};

// UTF-8 TSV with three columns: utt_id, path, translation.
inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3)
      throw std::runtime_error("manifest: expected 3 columns at line " +
                               std::to_string(line_no));
    if (!seen.insert(cols[0]).second)
      throw std::runtime_error("manifest: duplicate utt_id " + cols[0]);
    if (cols[2].empty())
      throw std::runtime_error("manifest: empty translation at line " +
                               std::to_string(line_no));
    entries.push_back({cols[0], cols[1], cols[2]});
  }
  return entries;
}

// Stand-in for a paired speech/translation corpus at desk scale. Audio-
// side features are per-phone Gaussian mean vectors repeated for sampled
// durations plus emission noise; translations are the phone sequence
// mapped through a fixed phone->word table. Optional per-utterance
// nuisance offsets confined to the trailing feature dimensions model
// channel variability that carries no information about the translation.
struct SyntheticCorpusSpec {
  int n_pairs = 500;
  int n_phones = 20;
  int n_words = 30;
  int min_frames_per_phone = 8;
  int max_frames_per_phone = 15;
  int min_phones_per_utt = 4;
  int max_phones_per_utt = 8;
  int feature_dim = 40;
  double sigma = 0.3;
  int nuisance_dims = 0;
  double nuisance_scale = 0.0;
  int n_triples = 0;
  bool with_wav = false;

  void validate() const {
    if (n_pairs < 1 || n_phones < 2 || n_words < 1 || feature_dim < 1)
      throw std::invalid_argument("synth: bad corpus size");
    if (sigma < 0 || nuisance_scale < 0)
      throw std::invalid_argument("synth: negative noise scale");
    if (min_frames_per_phone < 1 || max_frames_per_phone < min_frames_per_phone)
      throw std::invalid_argument("synth: bad frame range");
    if (min_phones_per_utt < 1 || max_phones_per_utt < min_phones_per_utt)
      throw std::invalid_argument("synth: bad phones-per-utterance range");
    if (nuisance_dims < 0 || nuisance_dims >= feature_dim)
      throw std::invalid_argument("synth: nuisance_dims out of range");
  }
};

struct SyntheticUtterance {
  std::string utt_id;
  std::vector<int> phones;  // 0-based phone ids
  FeatureMatrix feats;
  std::string translation;
};

struct SyntheticCorpus {
  SyntheticCorpusSpec spec;
  std::vector<std::vector<double>> phone_means;  // content dims only
  std::vector<int> phone_to_word;
  std::vector<std::string> phone_symbols;
  std::vector<std::string> word_symbols;
  std::vector<SyntheticUtterance> utterances;
  std::vector<AbxTriple> triples;
};

namespace detail {

inline int rint_range(std::mt19937_64& rng, int lo, int hi) {
  return lo + int(rng() % uint64_t(hi - lo + 1));
}

inline FeatureMatrix render_utterance(const SyntheticCorpus& c,
                                      const std::vector<int>& phones,
                                      std::mt19937_64& rng) {
  const auto& spec = c.spec;
  const int content = spec.feature_dim - spec.nuisance_dims;
  std::vector<int> durs;
  int total = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const int d = rint_range(rng, spec.min_frames_per_phone,
                             spec.max_frames_per_phone);
    durs.push_back(d);
    total += d;
  }
  std::vector<double> offset(std::size_t(spec.nuisance_dims), 0.0);
  for (auto& v : offset) v = rnorm(rng) * spec.nuisance_scale;

  FeatureMatrix m = FeatureMatrix::zeros(total, spec.feature_dim, 10);
  int t = 0;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    const auto& mean = c.phone_means[std::size_t(phones[i])];
    for (int d = 0; d < durs[i]; ++d, ++t) {
      for (int f = 0; f < content; ++f)
        m.at(t, f) = static_cast<float>(mean[std::size_t(f)] +
                                        rnorm(rng) * spec.sigma);
      for (int f = content; f < spec.feature_dim; ++f)
        m.at(t, f) = static_cast<float>(offset[std::size_t(f - content)] +
                                        rnorm(rng) * spec.sigma);
    }
  }
  return m;
}

}  // namespace detail

// Deterministic given (spec, seed). Phone means are redrawn until all
// pairwise distances reach 4*sigma; utterances are redrawn until their
// phone multisets are unique, so exact retrieval is solvable from
// content alone.
inline SyntheticCorpus gen_synthetic_corpus(const SyntheticCorpusSpec& spec,
                                            uint64_t seed) {
  spec.validate();
  SyntheticCorpus c;
  c.spec = spec;
  std::mt19937_64 rng(seed);
  const int content = spec.feature_dim - spec.nuisance_dims;

  for (int p = 0; p < spec.n_phones; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%02d", p);
    c.phone_symbols.push_back(buf);
  }
  for (int w = 0; w < spec.n_words; ++w) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%02d", w);
    c.word_symbols.push_back(buf);
  }

  // phone means with enforced separation
  const double min_dist = 4.0 * spec.sigma;
  int retries = 0;
  while (static_cast<int>(c.phone_means.size()) < spec.n_phones) {
    std::vector<double> mean(static_cast<std::size_t>(content));
    double norm = 0;
    for (auto& v : mean) {
      v = detail::rnorm(rng);
      norm += v * v;
    }
    // project onto a common-radius sphere so every phone carries the same
    // energy; otherwise high-norm phones dominate dot-product retrieval
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& v : mean) v *= std::sqrt(double(content)) / norm;
    bool ok = true;
    for (const auto& other : c.phone_means) {
      double d2 = 0;
      for (int f = 0; f < content; ++f) {
        const double d = mean[std::size_t(f)] - other[std::size_t(f)];
        d2 += d * d;
      }
      if (d2 < min_dist * min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) {
      c.phone_means.push_back(std::move(mean));
    } else if (++retries > 10000) {
      throw std::runtime_error("synth: spec infeasible (mean separation)");
    }
  }

  // total phone -> word mapping; injective when the vocabulary allows
  if (spec.n_words >= spec.n_phones) {
    std::vector<int> perm(std::size_t(spec.n_words));
    for (int i = 0; i < spec.n_words; ++i) perm[std::size_t(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    c.phone_to_word.assign(perm.begin(), perm.begin() + spec.n_phones);
  } else {
    for (int p = 0; p < spec.n_phones; ++p)
      c.phone_to_word.push_back(int(rng() % uint64_t(spec.n_words)));
  }

  // utterances with unique phone multisets
  std::set<std::vector<int>> bags;
  retries = 0;
  while (static_cast<int>(c.utterances.size()) < spec.n_pairs) {
    const int n = detail::rint_range(rng, spec.min_phones_per_utt,
                                     spec.max_phones_per_utt);
    std::vector<int> phones(static_cast<std::size_t>(n));
    for (auto& p : phones) p = int(rng() % uint64_t(spec.n_phones));
    std::vector<int> bag(std::size_t(spec.n_phones), 0);
    for (int p : phones) ++bag[std::size_t(p)];
    if (!bags.insert(bag).second) {
      if (++retries > 100000)
        throw std::runtime_error("synth: spec infeasible (unique bags)");
      continue;
    }
    SyntheticUtterance u;
    char buf[24];
    std::snprintf(buf, sizeof buf, "utt_%05d",
                  static_cast<int>(c.utterances.size()));
    u.utt_id = buf;
    u.phones = phones;
    u.feats = detail::render_utterance(c, phones, rng);
    std::ostringstream tr;
    for (std::size_t i = 0; i < phones.size(); ++i) {
      if (i) tr << ' ';
      tr << c.word_symbols[std::size_t(c.phone_to_word[std::size_t(phones[i])])];
    }
    u.translation = tr.str();
    c.utterances.push_back(std::move(u));
  }

  // minimal-pair ABX triples: shared left/right context, differing center
  for (int i = 0; i < spec.n_triples; ++i) {
    const int left = int(rng() % uint64_t(spec.n_phones));
    const int right = int(rng() % uint64_t(spec.n_phones));
    const int ca = int(rng() % uint64_t(spec.n_phones));
    int cb = int(rng() % uint64_t(spec.n_phones - 1));
    if (cb >= ca) ++cb;
    AbxTriple tr;
    char buf[24];
    std::snprintf(buf, sizeof buf, "triple_%05d", i);
    tr.id = buf;
    tr.category_a = c.phone_symbols[std::size_t(ca)];
    tr.category_b = c.phone_symbols[std::size_t(cb)];
    tr.a = detail::render_utterance(c, {left, ca, right}, rng);
    tr.b = detail::render_utterance(c, {left, cb, right}, rng);
    tr.x = detail::render_utterance(c, {left, ca, right}, rng);
    c.triples.push_back(std::move(tr));
  }
  return c;
}

// Sinusoid-mixture waveform for one utterance: each phone contributes a
// pair of fixed tones, 10 ms of samples per feature frame.
inline Waveform synthesize_wav(const SyntheticCorpus&,
                               const SyntheticUtterance& u,
                               std::mt19937_64& rng) {
  const int rate = 16000, per_frame = 160;
  Waveform w;
  w.sample_rate = rate;
  long t = 0;
  for (std::size_t i = 0; i < u.phones.size(); ++i) {
    const int p = u.phones[std::size_t(i)];
    const double f1 = 300.0 + 180.0 * p;
    const double f2 = 500.0 + 137.0 * p;
    // duration follows the rendered features: split total frames evenly
    const int frames = u.feats.rows / static_cast<int>(u.phones.size());
    for (int s = 0; s < frames * per_frame; ++s, ++t) {
      const double x = 0.25 * std::sin(2.0 * M_PI * f1 * t / rate) +
                       0.25 * std::sin(2.0 * M_PI * f2 * t / rate) +
                       0.01 * detail::rnorm(rng);
      w.samples.push_back(static_cast<float>(x));
    }
  }
  return w;
}

}  // namespace cstnet
