#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cstnet/tensor.hpp"

namespace cstnet {

struct GradCheckReport {
  double max_rel_err = 0.0;
  long checked = 0;
  bool ok(double threshold = 1e-4) const { return max_rel_err <= threshold; }
};

// Central finite differences at 64-bit precision against an analytic
// gradient. `f` evaluates the scalar loss at the given flat inputs;
// `analytic` is the gradient produced by the implementation under test.
// Relative error: |a - n| / max(|a|, |n|, 1e-8).
inline GradCheckReport finite_difference_check(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, const std::vector<double>& analytic,
    double eps = 1e-5, const std::vector<std::size_t>* coords = nullptr) {
  GradCheckReport rep;
  std::vector<std::size_t> all;
  if (!coords) {
    all.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) all[i] = i;
    coords = &all;
  }
  for (std::size_t i : *coords) {
    const double x0 = x[i];
    x[i] = x0 + eps;
    const double fp = f(x);
    x[i] = x0 - eps;
    const double fm = f(x);
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("gradcheck: non-finite function value");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    rep.max_rel_err = std::max(rep.max_rel_err, std::fabs(a - numeric) / denom);
    ++rep.checked;
  }
  return rep;
}

}  // namespace cstnet
