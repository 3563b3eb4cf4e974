#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cstnet/fbank.hpp"

namespace cstnet {

namespace detail {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline double runif(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

inline double rnorm(std::mt19937_64& rng) {
  // Box-Muller; hand-rolled so draws are identical across stdlibs.
  double u1 = runif(rng);
  while (u1 <= 0.0) u1 = runif(rng);
  const double u2 = runif(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

// Token -> vector map with a deterministic hash fallback, so lookups
// never fail: out-of-vocabulary tokens get a pseudo-random unit vector
// seeded by the token's 64-bit hash.
struct WordVectorTable {
  int dim = 100;
  std::map<std::string, std::vector<float>> vectors;

  std::vector<float> lookup(const std::string& token) const {
    auto it = vectors.find(token);
    if (it != vectors.end()) return it->second;
    return hash_embedding(token, dim);
  }

  static std::vector<float> hash_embedding(const std::string& token, int dim) {
    std::mt19937_64 rng(detail::fnv1a64(token));
    std::vector<float> v(static_cast<std::size_t>(dim));
    double norm = 0;
    for (int i = 0; i < dim; ++i) {
      const double x = detail::rnorm(rng);
      v[std::size_t(i)] = static_cast<float>(x);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
  }
};

// Text word-vector format: optional header line "count dim", then lines
// "token v1 ... vD" at 32-bit precision.
inline WordVectorTable load_word_vectors(const std::string& path,
                                         int expected_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("wordvec: cannot open " + path);
  WordVectorTable table;
  table.dim = expected_dim;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    if (first) {
      first = false;
      // header detection: exactly two integer fields
      long a, b;
      std::istringstream probe(line);
      std::string rest;
      if (probe >> a >> b && !(probe >> rest)) {
        if (b != expected_dim)
          throw std::runtime_error("wordvec: dimension mismatch in header (line 1)");
        continue;
      }
    }
    std::string token;
    if (!(row >> token))
      throw std::runtime_error("wordvec: malformed line " + std::to_string(line_no));
    std::vector<float> v;
    v.reserve(std::size_t(expected_dim));
    float x;
    while (row >> x) v.push_back(x);
    if (!row.eof())
      throw std::runtime_error("wordvec: unparseable float at line " +
                               std::to_string(line_no));
    if (static_cast<int>(v.size()) != expected_dim)
      throw std::runtime_error("wordvec: dimension mismatch at line " +
                               std::to_string(line_no));
    table.vectors[token] = std::move(v);
  }
  return table;
}

// Lowercase, split on whitespace, strip leading/trailing punctuation.
inline std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> tokens;
  std::istringstream in(sentence);
  std::string w;
  while (in >> w) {
    std::size_t b = 0, e = w.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
    if (b >= e) continue;
    std::string t = w.substr(b, e - b);
    for (auto& c : t) c = char(std::tolower(static_cast<unsigned char>(c)));
    tokens.push_back(std::move(t));
  }
  return tokens;
}

// One row of word vectors per token, (L*repeat) x D. `repeat` emits each
// token's vector that many consecutive times. Short sentences shrink to
// one or two time steps after the encoder's strided layers, which starves
// the text tower relative to the audio tower; upsampling tokens restores
// comparable temporal extent on both sides.
inline FeatureMatrix embed_text(const WordVectorTable& table,
                                const std::string& sentence, int repeat = 1) {
  if (repeat < 1) throw std::invalid_argument("embed_text: repeat < 1");
  const auto tokens = tokenize(sentence);
  if (tokens.empty())
    throw std::invalid_argument("embed_text: sentence empty after tokenization");
  FeatureMatrix m = FeatureMatrix::zeros(
      static_cast<int>(tokens.size()) * repeat, table.dim, 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto v = table.lookup(tokens[i]);
    for (int r = 0; r < repeat; ++r)
      for (int d = 0; d < table.dim; ++d)
        m.at(static_cast<int>(i) * repeat + r, d) = v[std::size_t(d)];
  }
  return m;
}

}  // namespace cstnet
