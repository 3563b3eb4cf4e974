#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cstnet/fbank.hpp"

namespace cstnet {

// 1 - cosine similarity between two frames. Zero vectors are at distance
// 1 from anything and 0 from another zero vector.
inline double cosine_frame_distance(const float* x, const float* y, int dim) {
  double dot = 0, nx = 0, ny = 0;
  for (int i = 0; i < dim; ++i) {
    dot += double(x[i]) * y[i];
    nx += double(x[i]) * x[i];
    ny += double(y[i]) * y[i];
  }
  const bool zx = nx == 0.0, zy = ny == 0.0;
  if (zx && zy) return 0.0;
  if (zx || zy) return 1.0;
  return 1.0 - dot / std::sqrt(nx * ny);
}

// DTW divergence between two feature sequences: dynamic program over the
// T1 x T2 grid with steps (i-1,j), (i,j-1), (i-1,j-1), minimizing
// (total cost, path length) lexicographically; the result is the optimal
// path's summed frame distance divided by its length (cell count).
inline double dtw_divergence(const FeatureMatrix& x, const FeatureMatrix& y) {
  if (x.rows < 1 || y.rows < 1)
    throw std::invalid_argument("dtw: empty sequence");
  if (x.cols != y.cols) throw std::invalid_argument("dtw: dimension mismatch");
  const int n = x.rows, m = y.rows, dim = x.cols;

  struct Cell {
    double cost;
    int len;
  };
  std::vector<Cell> prev(static_cast<std::size_t>(m)), cur(static_cast<std::size_t>(m));
  auto better = [](const Cell& a, const Cell& b) {
    return a.cost < b.cost || (a.cost == b.cost && a.len < b.len);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double d =
          cosine_frame_distance(&x.data[std::size_t(i) * dim],
                                &y.data[std::size_t(j) * dim], dim);
      Cell best;
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else if (i == 0) {
        best = cur[std::size_t(j - 1)];
      } else if (j == 0) {
        best = prev[std::size_t(j)];
      } else {
        best = prev[std::size_t(j - 1)];  // diagonal
        if (better(prev[std::size_t(j)], best)) best = prev[std::size_t(j)];
        if (better(cur[std::size_t(j - 1)], best)) best = cur[std::size_t(j - 1)];
      }
      cur[std::size_t(j)] = {best.cost + d, best.len + 1};
    }
    std::swap(prev, cur);
  }
  const Cell& end = prev[std::size_t(m - 1)];
  return end.cost / double(end.len);
}

}  // namespace cstnet
