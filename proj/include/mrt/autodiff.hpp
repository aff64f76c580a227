#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrt/tensor.hpp"

namespace mrt {

/// A learnable tensor and its accumulated gradient.
struct ParamTensor {
  ParamTensor() = default;
  ParamTensor(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape()) {}

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Every operation appends a node holding its forward
/// value and a closure that pushes the node's gradient onto its inputs.
class Tape {
 public:
  /// Called during backward with the gradient flowing into the node.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. A frozen leaf behaves as a constant and its
  /// parameter receives no gradient. Repeated calls reuse the same leaf.
  Var param(ParamTensor& p, bool trainable = true);
  /// Appends an operation node. `inputs` decide whether the node needs a
  /// gradient at all; `backward` may be empty for non-differentiable nodes.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialized on first access.
  Tensor& grad(std::size_t id);
  /// Adds `g` to the gradient of `v` if it requires one.
  void accumulate(const Var& v, const Tensor& g);

  /// Seeds d(loss)/d(loss) = 1, runs every backward closure in reverse
  /// order, then adds leaf gradients into their ParamTensor::grad.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    ParamTensor* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<ParamTensor*, std::size_t> param_leaves_;
};

// Differentiable operations. All are rank-2.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
/// x (m x n) plus a 1 x n row broadcast over every row.
Var add_row(const Var& x, const Var& row);
Var relu(const Var& x);
Var softmax_rows(const Var& x);
/// Normalizes each row to zero mean / unit variance, then applies the
/// 1 x d affine pair. `eps` sits inside the square root.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var slice_rows(const Var& x, std::size_t start, std::size_t count);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var reshape(const Var& x, std::size_t rows, std::size_t cols);
/// Running sum down the rows: out[t] = x[0] + ... + x[t].
Var cumsum_rows(const Var& x);
/// Sum of squared entries, as a 1 x 1 tensor.
Var sum_squares(const Var& x);

}  // namespace mrt
