#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cstnet {

// Dense n-dimensional array, row-major.
template <class Real>
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), Real(0));
  }
  Tensor(std::vector<int> s, std::vector<Real> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::size_t>(numel_of(shape)) != data.size())
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }
  long numel() const { return static_cast<long>(data.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  Real& at(int i) { return data[static_cast<std::size_t>(i)]; }
  Real at(int i) const { return data[static_cast<std::size_t>(i)]; }
  Real& at(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  Real at(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  Real& at(int i, int j, int k) {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  Real at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  void fill(Real v) { std::fill(data.begin(), data.end(), v); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<Other>(data[i]);
    return out;
  }
};

enum class Padding { Same, Valid };
enum class BnMode { Train, Eval };

// Per-row valid frame counts for an end-padded batch.
using BatchLengths = std::vector<int>;

inline int conv_out_len(int t, int kernel, int stride, Padding pad) {
  if (pad == Padding::Same) return (t + stride - 1) / stride;
  return (t - kernel) / stride + 1;
}

// Running statistics owned by a batchnorm layer; updated by train-mode
// forward passes, read by eval-mode passes.
template <class Real>
struct BnStats {
  Tensor<Real> mean;
  Tensor<Real> var;
  Real momentum = Real(0.1);
  Real eps = Real(1e-5);

  explicit BnStats(int channels = 0) : mean({channels}), var({channels}) {
    var.fill(Real(1));
  }
};

// Reverse-mode tape. Nodes are referenced by integer ids in topological
// order; ops append a node, then attach a backprop closure that reads the
// node's own gradient and accumulates into its parents'.
template <class Real>
class Tape {
 public:
  int leaf(Tensor<Real> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int emit(Tensor<Real> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), {}, requires_grad, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backprop(int id, std::function<void(Tape&)> fn) {
    nodes_[static_cast<std::size_t>(id)].backprop = std::move(fn);
  }

  const Tensor<Real>& value(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  Tensor<Real>& value(int id) {
    return nodes_[static_cast<std::size_t>(id)].value;
  }

  Tensor<Real>& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor<Real>(n.value.shape);
    return n.grad;
  }
  bool has_grad(int id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.data.empty();
  }
  bool requires_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse order.
  // Each node is visited exactly once.
  void backward(int loss_id) {
    if (value(loss_id).numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    if (backward_done_)
      throw std::logic_error("backward: tape already consumed");
    backward_done_ = true;
    grad(loss_id).data[0] = Real(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.backprop && n.requires_grad && !n.grad.data.empty())
        n.backprop(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Accumulates g into node id's grad buffer if it participates in autodiff.
template <class Real>
inline void accumulate_grad(Tape<Real>& tape, int id, const Tensor<Real>& g) {
  if (!tape.requires_grad(id)) return;
  Tensor<Real>& dst = tape.grad(id);
  for (long i = 0; i < g.numel(); ++i)
    dst.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
}

}  // namespace cstnet
