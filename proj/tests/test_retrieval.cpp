#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "cstnet/retrieval.hpp"

using namespace cstnet;

namespace {

std::vector<std::vector<double>> random_matrix(std::size_t n,
                                               std::mt19937_64& rng) {
  std::vector<std::vector<double>> s(n, std::vector<double>(n));
  for (auto& row : s)
    for (auto& v : row) v = double(rng() >> 11) * 0x1.0p-53 * 2 - 1;
  return s;
}

// independent reference: sort candidate scores descending, ties by
// ascending candidate index, and report the 1-based position of the truth
int ref_rank(const std::vector<std::vector<double>>& s, std::size_t q,
             RetrievalDirection dir) {
  const std::size_t n = s.size();
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t j = 0; j < n; ++j)
    cand.emplace_back(dir == RetrievalDirection::SpeechToText ? s[q][j]
                                                              : s[j][q],
                      j);
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t pos = 0; pos < n; ++pos)
    if (cand[pos].second == q) return int(pos) + 1;
  return -1;
}

}  // namespace

TEST_CASE("identity similarity gives rank 1 everywhere") {
  std::vector<std::vector<double>> s(5, std::vector<double>(5, 0.0));
  for (std::size_t i = 0; i < 5; ++i) s[i][i] = 1.0;
  for (auto dir :
       {RetrievalDirection::SpeechToText, RetrievalDirection::TextToSpeech})
    for (int r : rank_of_truth(s, dir)) CHECK(r == 1);
}

TEST_CASE("truth with the smallest score ranks last") {
  const std::size_t n = 6;
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) s[i][i] = -1.0;
  for (int r : rank_of_truth(s, RetrievalDirection::SpeechToText))
    CHECK(r == int(n));
}

TEST_CASE("ranks agree with a sort-based reference on random matrices") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_matrix(6, rng);
    for (auto dir :
         {RetrievalDirection::SpeechToText, RetrievalDirection::TextToSpeech}) {
      const auto ranks = rank_of_truth(s, dir);
      for (std::size_t q = 0; q < 6; ++q)
        CHECK(ranks[q] == ref_rank(s, q, dir));
    }
  }
}

TEST_CASE("tie handling: equal scores resolve by ascending index") {
  // row 2 all equal: indices 0,1 beat the truth (index 2), 3 does not
  std::vector<std::vector<double>> s(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) s[i][i] = 1.0;
  for (std::size_t j = 0; j < 4; ++j) s[2][j] = 0.5;
  const auto ranks = rank_of_truth(s, RetrievalDirection::SpeechToText);
  CHECK(ranks[2] == 3);
}

TEST_CASE("recall formula on a fixed rank list") {
  const std::vector<int> ranks{1, 2, 3, 4};
  CHECK(recall_at_k(ranks, 2) == 0.5);
  CHECK(recall_at_k(ranks, 1) == 0.25);
  CHECK(recall_at_k(ranks, 4) == 1.0);
  CHECK(recall_at_k(ranks, 100) == 1.0);
}

TEST_CASE("recall at N is 1 and recall is monotone in k") {
  std::mt19937_64 rng(23);
  const auto s = random_matrix(12, rng);
  const auto ranks = rank_of_truth(s, RetrievalDirection::TextToSpeech);
  CHECK(recall_at_k(ranks, 12) == 1.0);
  for (int k = 2; k <= 12; ++k)
    CHECK(recall_at_k(ranks, k) >= recall_at_k(ranks, k - 1));
}

TEST_CASE("random scores give R@10 near 10 percent for N=100") {
  // each truth lands in the top 10 of 100 with probability 0.10; the mean
  // over 20 independent trials of 100 queries is tightly concentrated
  std::mt19937_64 rng(31);
  double total = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const auto s = random_matrix(100, rng);
    total += recall_at_k(rank_of_truth(s, RetrievalDirection::SpeechToText), 10);
  }
  const double mean = total / trials;
  // sigma of the mean = sqrt(0.1*0.9/100/20) ~ 0.0067; allow 4 sigma
  CHECK(mean > 0.10 - 0.027);
  CHECK(mean < 0.10 + 0.027);
}

TEST_CASE("joint permutation of rows, columns, and pairing is invariant") {
  std::mt19937_64 rng(41);
  const std::size_t n = 8;
  const auto s = random_matrix(n, rng);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t(0));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<double>> sp(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sp[i][j] = s[perm[i]][perm[j]];
  for (auto dir :
       {RetrievalDirection::SpeechToText, RetrievalDirection::TextToSpeech}) {
    auto r1 = rank_of_truth(s, dir);
    auto r2 = rank_of_truth(sp, dir);
    for (std::size_t i = 0; i < n; ++i) CHECK(r2[i] == r1[perm[i]]);
  }
}

TEST_CASE("speech-to-text ranks are invariant to per-row constant shifts") {
  std::mt19937_64 rng(43);
  auto s = random_matrix(7, rng);
  const auto before = rank_of_truth(s, RetrievalDirection::SpeechToText);
  for (std::size_t i = 0; i < 7; ++i) {
    const double shift = double(i) * 3.25 - 5.0;
    for (auto& v : s[i]) v += shift;
  }
  const auto after = rank_of_truth(s, RetrievalDirection::SpeechToText);
  CHECK(before == after);
}

TEST_CASE("input validation") {
  std::vector<std::vector<double>> bad{{1.0, 2.0}, {3.0}};
  CHECK_THROWS_AS(rank_of_truth(bad, RetrievalDirection::SpeechToText),
                  std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k({}, 1), std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k({1, 2}, 0), std::invalid_argument);
}

TEST_CASE("report and csv") {
  std::vector<std::vector<double>> s(3, std::vector<double>(3, 0.0));
  for (std::size_t i = 0; i < 3; ++i) s[i][i] = 1.0;
  const auto rep = retrieval_report(s, RetrievalDirection::SpeechToText);
  CHECK(rep.n == 3);
  CHECK(rep.recall_at.at(1) == 1.0);
  CHECK(rep.recall_at.at(5) == 1.0);
  CHECK(rep.recall_at.at(10) == 1.0);

  const auto rep2 = retrieval_report(s, RetrievalDirection::TextToSpeech);
  const std::string csv = retrieval_csv({rep, rep2});
  CHECK(csv ==
        "direction,R@10,R@5,R@1\n"
        "speech_to_text,1,1,1\n"
        "text_to_speech,1,1,1\n");
}
