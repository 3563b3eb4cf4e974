#pragma once

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cstnet {

enum class RetrievalDirection { SpeechToText, TextToSpeech };

struct RetrievalReport {
  RetrievalDirection direction;
  std::map<int, double> recall_at;  // k -> fraction
  int n = 0;
};

// S[i][j] = similarity(speech_i, text_j); the true match of query i is
// index i. Speech->text ranks each row over texts, text->speech each
// column over audio. Ties resolve by ascending index, the true index
// competing like any other.
inline std::vector<int> rank_of_truth(
    const std::vector<std::vector<double>>& s, RetrievalDirection dir) {
  const std::size_t n = s.size();
  for (const auto& row : s)
    if (row.size() != n)
      throw std::invalid_argument("retrieval: similarity matrix not square");
  std::vector<int> ranks(n);
  for (std::size_t q = 0; q < n; ++q) {
    auto score = [&](std::size_t j) {
      return dir == RetrievalDirection::SpeechToText ? s[q][j] : s[j][q];
    };
    const double truth = score(q);
    int rank = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q) continue;
      if (score(j) > truth || (score(j) == truth && j < q)) ++rank;
    }
    ranks[q] = rank;
  }
  return ranks;
}

inline double recall_at_k(const std::vector<int>& ranks, int k) {
  if (k < 1) throw std::invalid_argument("recall: k < 1");
  if (ranks.empty()) throw std::invalid_argument("recall: empty rank list");
  long hits = 0;
  for (int r : ranks) hits += r <= k;
  return double(hits) / double(ranks.size());
}

inline RetrievalReport retrieval_report(
    const std::vector<std::vector<double>>& s, RetrievalDirection dir,
    std::vector<int> ks = {1, 5, 10}) {
  const auto ranks = rank_of_truth(s, dir);
  RetrievalReport rep;
  rep.direction = dir;
  rep.n = static_cast<int>(ranks.size());
  for (int k : ks) rep.recall_at[k] = recall_at_k(ranks, k);
  return rep;
}

// CSV layout: one row per direction, columns R@10 R@5 R@1.
inline std::string retrieval_csv(const std::vector<RetrievalReport>& reports) {
  std::ostringstream os;
  os.precision(6);
  os << "direction,R@10,R@5,R@1\n";
  for (const auto& r : reports) {
    os << (r.direction == RetrievalDirection::SpeechToText ? "speech_to_text"
                                                           : "text_to_speech");
    for (int k : {10, 5, 1}) {
      auto it = r.recall_at.find(k);
      os << ',' << (it == r.recall_at.end() ? 0.0 : it->second);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cstnet
