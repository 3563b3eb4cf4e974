#pragma once

#include "cstnet/tensor.hpp"

namespace cstnet::ops {

// 1-D cross-correlation over [B,Cin,T] with filters [Cout,Cin,K] and
// per-channel bias. "Same" padding zero-pads symmetrically with the extra
// sample on the right; output frames beyond each row's valid length are
// forced to zero so padding never leaks into valid positions downstream.
template <class Real>
int conv1d(Tape<Real>& tape, int x_id, int w_id, int b_id, int stride,
           Padding pad, const BatchLengths& in_len, BatchLengths* out_len) {
  const Tensor<Real>& x = tape.value(x_id);
  const Tensor<Real>& w = tape.value(w_id);
  const Tensor<Real>& bias = tape.value(b_id);
  if (x.rank() != 3 || w.rank() != 3 || bias.rank() != 1)
    throw std::invalid_argument("conv1d: bad ranks");
  const int B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const int Cout = w.dim(0), K = w.dim(2);
  if (w.dim(1) != Cin || bias.dim(0) != Cout)
    throw std::invalid_argument("conv1d: shape mismatch");
  if (stride <= 0) throw std::invalid_argument("conv1d: non-positive stride");
  if (pad == Padding::Valid && K > T)
    throw std::invalid_argument("conv1d: kernel wider than padded input");

  const int Tout = conv_out_len(T, K, stride, pad);
  int pad_left = 0;
  if (pad == Padding::Same) {
    const int total = std::max(0, (Tout - 1) * stride + K - T);
    pad_left = total / 2;
  }

  BatchLengths lens(static_cast<std::size_t>(B), Tout);
  for (int r = 0; r < B; ++r) {
    const int vin = in_len.empty() ? T : in_len[static_cast<std::size_t>(r)];
    lens[static_cast<std::size_t>(r)] =
        std::clamp(conv_out_len(vin, K, stride, pad), 0, Tout);
  }
  if (out_len) *out_len = lens;

  Tensor<Real> y({B, Cout, Tout});
  for (int bi = 0; bi < B; ++bi) {
    const int valid = lens[static_cast<std::size_t>(bi)];
    for (int co = 0; co < Cout; ++co) {
      for (int to = 0; to < valid; ++to) {
        Real acc = bias.at(co);
        const int t0 = to * stride - pad_left;
        for (int ci = 0; ci < Cin; ++ci)
          for (int k = 0; k < K; ++k) {
            const int t = t0 + k;
            if (t < 0 || t >= T) continue;
            acc += w.at(co, ci, k) * x.at(bi, ci, t);
          }
        y.at(bi, co, to) = acc;
      }
    }
  }

  const bool rg = tape.requires_grad(x_id) || tape.requires_grad(w_id) ||
                  tape.requires_grad(b_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Tensor<Real>& gy = tp.grad(y_id);
      const Tensor<Real>& xv = tp.value(x_id);
      const Tensor<Real>& wv = tp.value(w_id);
      Tensor<Real> gx(xv.shape), gw(wv.shape), gb(tp.value(b_id).shape);
      for (int bi = 0; bi < B; ++bi) {
        const int valid = lens[static_cast<std::size_t>(bi)];
        for (int co = 0; co < Cout; ++co) {
          for (int to = 0; to < valid; ++to) {
            const Real g = gy.at(bi, co, to);
            if (g == Real(0)) continue;
            gb.at(co) += g;
            const int t0 = to * stride - pad_left;
            for (int ci = 0; ci < Cin; ++ci)
              for (int k = 0; k < K; ++k) {
                const int t = t0 + k;
                if (t < 0 || t >= T) continue;
                gw.at(co, ci, k) += g * xv.at(bi, ci, t);
                gx.at(bi, ci, t) += g * wv.at(co, ci, k);
              }
          }
        }
      }
      accumulate_grad(tp, x_id, gx);
      accumulate_grad(tp, w_id, gw);
      accumulate_grad(tp, b_id, gb);
    });
  }
  return y_id;
}

// Batch normalization over [B,C,T]. Train mode computes per-channel
// statistics over valid (b,t) positions only and updates running stats;
// eval mode applies the stored running stats. Padded positions are zeroed.
template <class Real>
int batchnorm1d(Tape<Real>& tape, int x_id, int gamma_id, int beta_id,
                const BatchLengths& lens, BnStats<Real>& stats, BnMode mode) {
  const Tensor<Real>& x = tape.value(x_id);
  if (x.rank() != 3) throw std::invalid_argument("batchnorm1d: rank != 3");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  const Tensor<Real>& gamma = tape.value(gamma_id);
  const Tensor<Real>& beta = tape.value(beta_id);
  if (gamma.dim(0) != C || beta.dim(0) != C)
    throw std::invalid_argument("batchnorm1d: parameter shape mismatch");

  long m = 0;
  for (int bi = 0; bi < B; ++bi)
    m += lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
  if (mode == BnMode::Train && m < 2)
    throw std::invalid_argument("batchnorm1d: fewer than 2 valid positions");

  const Real eps = stats.eps;
  std::vector<Real> mu(static_cast<std::size_t>(C), Real(0));
  std::vector<Real> var(static_cast<std::size_t>(C), Real(0));
  if (mode == BnMode::Train) {
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int bi = 0; bi < B; ++bi) {
        const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
        for (int t = 0; t < v; ++t) s += static_cast<double>(x.at(bi, c, t));
      }
      mu[static_cast<std::size_t>(c)] = static_cast<Real>(s / double(m));
      double sq = 0;
      for (int bi = 0; bi < B; ++bi) {
        const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
        for (int t = 0; t < v; ++t) {
          const double d = static_cast<double>(x.at(bi, c, t)) -
                           static_cast<double>(mu[static_cast<std::size_t>(c)]);
          sq += d * d;
        }
      }
      var[static_cast<std::size_t>(c)] = static_cast<Real>(sq / double(m));
    }
    // running stats: unbiased variance for the running estimate
    const Real mom = stats.momentum;
    for (int c = 0; c < C; ++c) {
      const Real ub = m > 1 ? var[static_cast<std::size_t>(c)] *
                                  Real(double(m) / double(m - 1))
                            : var[static_cast<std::size_t>(c)];
      stats.mean.at(c) = (Real(1) - mom) * stats.mean.at(c) +
                         mom * mu[static_cast<std::size_t>(c)];
      stats.var.at(c) = (Real(1) - mom) * stats.var.at(c) + mom * ub;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mu[static_cast<std::size_t>(c)] = stats.mean.at(c);
      var[static_cast<std::size_t>(c)] = stats.var.at(c);
    }
  }

  Tensor<Real> y({B, C, T});
  for (int bi = 0; bi < B; ++bi) {
    const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
    for (int c = 0; c < C; ++c) {
      const Real inv = Real(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
      for (int t = 0; t < v; ++t)
        y.at(bi, c, t) =
            gamma.at(c) * (x.at(bi, c, t) - mu[static_cast<std::size_t>(c)]) * inv +
            beta.at(c);
    }
  }

  const bool rg = tape.requires_grad(x_id) || tape.requires_grad(gamma_id) ||
                  tape.requires_grad(beta_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Tensor<Real>& gy = tp.grad(y_id);
      const Tensor<Real>& xv = tp.value(x_id);
      const Tensor<Real>& gv = tp.value(gamma_id);
      Tensor<Real> gx(xv.shape);
      Tensor<Real> ggamma({C}), gbeta({C});
      for (int c = 0; c < C; ++c) {
        const Real muc = mu[static_cast<std::size_t>(c)];
        const Real inv = Real(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int bi = 0; bi < B; ++bi) {
          const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
          for (int t = 0; t < v; ++t) {
            const Real dy = gy.at(bi, c, t);
            const Real xhat = (xv.at(bi, c, t) - muc) * inv;
            sum_dy += static_cast<double>(dy);
            sum_dy_xhat += static_cast<double>(dy * xhat);
          }
        }
        ggamma.at(c) = static_cast<Real>(sum_dy_xhat);
        gbeta.at(c) = static_cast<Real>(sum_dy);
        if (mode == BnMode::Train) {
          const Real mean_dy = static_cast<Real>(sum_dy / double(m));
          const Real mean_dy_xhat = static_cast<Real>(sum_dy_xhat / double(m));
          for (int bi = 0; bi < B; ++bi) {
            const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
            for (int t = 0; t < v; ++t) {
              const Real xhat = (xv.at(bi, c, t) - muc) * inv;
              gx.at(bi, c, t) = gv.at(c) * inv *
                                (gy.at(bi, c, t) - mean_dy - xhat * mean_dy_xhat);
            }
          }
        } else {
          for (int bi = 0; bi < B; ++bi) {
            const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
            for (int t = 0; t < v; ++t)
              gx.at(bi, c, t) = gv.at(c) * inv * gy.at(bi, c, t);
          }
        }
      }
      accumulate_grad(tp, x_id, gx);
      accumulate_grad(tp, gamma_id, ggamma);
      accumulate_grad(tp, beta_id, gbeta);
    });
  }
  return y_id;
}

// Elementwise max(0, x); subgradient at 0 is 0.
template <class Real>
int relu(Tape<Real>& tape, int x_id) {
  const Tensor<Real>& x = tape.value(x_id);
  Tensor<Real> y(x.shape);
  for (long i = 0; i < x.numel(); ++i)
    y.data[static_cast<std::size_t>(i)] =
        std::max(Real(0), x.data[static_cast<std::size_t>(i)]);
  const bool rg = tape.requires_grad(x_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Tensor<Real>& gy = tp.grad(y_id);
      const Tensor<Real>& xv = tp.value(x_id);
      Tensor<Real> gx(xv.shape);
      for (long i = 0; i < xv.numel(); ++i)
        gx.data[static_cast<std::size_t>(i)] =
            xv.data[static_cast<std::size_t>(i)] > Real(0)
                ? gy.data[static_cast<std::size_t>(i)]
                : Real(0);
      accumulate_grad(tp, x_id, gx);
    });
  }
  return y_id;
}

// Elementwise sum of two tensors of identical shape (residual skip).
template <class Real>
int add(Tape<Real>& tape, int a_id, int b_id) {
  const Tensor<Real>& a = tape.value(a_id);
  const Tensor<Real>& b = tape.value(b_id);
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch");
  Tensor<Real> y(a.shape);
  for (long i = 0; i < a.numel(); ++i)
    y.data[static_cast<std::size_t>(i)] =
        a.data[static_cast<std::size_t>(i)] + b.data[static_cast<std::size_t>(i)];
  const bool rg = tape.requires_grad(a_id) || tape.requires_grad(b_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Tensor<Real>& gy = tp.grad(y_id);
      accumulate_grad(tp, a_id, gy);
      accumulate_grad(tp, b_id, gy);
    });
  }
  return y_id;
}

// Mean over each row's valid frames: [B,C,T] -> [B,C]. The gradient
// distributes 1/valid to valid positions and 0 to padded ones.
template <class Real>
int masked_mean_pool(Tape<Real>& tape, int x_id, const BatchLengths& lens) {
  const Tensor<Real>& x = tape.value(x_id);
  if (x.rank() != 3) throw std::invalid_argument("masked_mean_pool: rank != 3");
  const int B = x.dim(0), C = x.dim(1), T = x.dim(2);
  for (int bi = 0; bi < B; ++bi) {
    const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
    if (v < 1)
      throw std::invalid_argument("masked_mean_pool: row with no valid frames");
  }
  Tensor<Real> y({B, C});
  for (int bi = 0; bi < B; ++bi) {
    const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
    for (int c = 0; c < C; ++c) {
      double s = 0;
      for (int t = 0; t < v; ++t) s += static_cast<double>(x.at(bi, c, t));
      y.at(bi, c) = static_cast<Real>(s / double(v));
    }
  }
  const bool rg = tape.requires_grad(x_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Tensor<Real>& gy = tp.grad(y_id);
      const Tensor<Real>& xv = tp.value(x_id);
      Tensor<Real> gx(xv.shape);
      for (int bi = 0; bi < B; ++bi) {
        const int v = lens.empty() ? T : lens[static_cast<std::size_t>(bi)];
        for (int c = 0; c < C; ++c) {
          const Real g = gy.at(bi, c) / Real(v);
          for (int t = 0; t < v; ++t) gx.at(bi, c, t) = g;
        }
      }
      accumulate_grad(tp, x_id, gx);
    });
  }
  return y_id;
}

// Sum of all elements -> scalar. Handy for composing test losses.
template <class Real>
int sum_all(Tape<Real>& tape, int x_id) {
  const Tensor<Real>& x = tape.value(x_id);
  double s = 0;
  for (Real v : x.data) s += static_cast<double>(v);
  Tensor<Real> y({1});
  y.at(0) = static_cast<Real>(s);
  const bool rg = tape.requires_grad(x_id);
  const int y_id = tape.emit(std::move(y), rg);
  if (rg) {
    tape.set_backprop(y_id, [=](Tape<Real>& tp) {
      const Real g = tp.grad(y_id).at(0);
      Tensor<Real> gx(tp.value(x_id).shape);
      gx.fill(g);
      accumulate_grad(tp, x_id, gx);
    });
  }
  return y_id;
}

}  // namespace cstnet::ops
