#pragma once

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cstnet/dtw.hpp"

namespace cstnet {

// One discriminability trial: a and x share a category, b does not.
struct AbxTriple {
  std::string id;
  FeatureMatrix a, b, x;
  std::string category_a;
  std::string category_b;
};

struct AbxReport {
  double error_rate = 0.0;
  int n_triples = 0;
  std::map<std::string, std::pair<double, int>> per_category;  // cat -> (err, n)
};

// A triple scores correct when dtw(a,x) < dtw(b,x); exact ties earn half
// credit. The error rate is the unweighted mean of 1 - correctness.
inline AbxReport abx_error(const std::vector<AbxTriple>& triples) {
  if (triples.empty()) throw std::invalid_argument("abx: no triples");
  AbxReport rep;
  std::map<std::string, std::pair<double, int>> acc;
  double err_sum = 0;
  for (const auto& tr : triples) {
    const double dax = dtw_divergence(tr.a, tr.x);
    const double dbx = dtw_divergence(tr.b, tr.x);
    const double err = dax < dbx ? 0.0 : (dax == dbx ? 0.5 : 1.0);
    err_sum += err;
    auto& slot = acc[tr.category_a];
    slot.first += err;
    slot.second += 1;
  }
  rep.n_triples = static_cast<int>(triples.size());
  rep.error_rate = err_sum / rep.n_triples;
  for (auto& [cat, v] : acc)
    rep.per_category[cat] = {v.first / v.second, v.second};
  return rep;
}

inline std::string abx_csv(const AbxReport& rep) {
  std::ostringstream os;
  os.precision(6);
  os << "category,error_rate,n_triples\n";
  os << "ALL," << rep.error_rate << ',' << rep.n_triples << '\n';
  for (const auto& [cat, v] : rep.per_category)
    os << cat << ',' << v.first << ',' << v.second << '\n';
  return os.str();
}

}  // namespace cstnet
