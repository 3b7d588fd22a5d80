// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "moodpipe/nn/rng.hpp"
#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode gradient tape.
///
/// Nodes are appended in evaluation order; backward() walks them in reverse
/// and accumulates into Parameter::grad for every trainable parameter that
/// was read through param(). A tape is single-use and single-threaded.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Reads a parameter; repeated calls for the same parameter return the
  /// same node.
  Var param(Parameter& p);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient slot of a node, zero-initialized on first touch.
  Tensor& grad(std::uint32_t id);
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  /// Seeds d(loss)/d(loss) = 1; loss must hold exactly one element.
  void backward(Var loss);

  Var push(Tensor value, bool requires_grad, BackwardFn fn);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

// Differentiable operations. All operate on rank-1 or rank-2 values; a
// rank-1 value is treated as a single row.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a (m x n) plus bias (n) broadcast over rows.
Var add_row(Var a, Var bias);
Var scale(Var a, double factor);
/// Multiplies every element of a by the single element of s.
Var scale_by(Var a, Var s);
/// Row i of a (m x n) times element i of s (m elements).
Var scale_rows(Var a, Var s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softmax_rows(Var a);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Column sums of a (m x n) as a 1 x n row.
Var col_sum(Var a);
/// Each row divided by max(||row||_2, eps).
Var l2_normalize_rows(Var a, double eps);
/// Sum of scalar (single-element) values.
Var sum_scalars(std::span<const Var> parts);
/// Inverted dropout; the identity when !training or p == 0.
Var dropout(Var a, double p, Rng& rng, bool training);

/// Mean binary cross-entropy of probabilities p against 0/1 labels, with p
/// clamped to [kProbClamp, 1 - kProbClamp]. Returns a 1 x 1 value.
inline constexpr double kProbClamp = 1e-7;
Var binary_cross_entropy(Var p, std::span<const int> labels);

}  // namespace moodpipe::nn
