#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "c2hm/tensor.hpp"

namespace c2hm {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Linear,
  Add,
  AddRowBias,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Square,
  Sum,
  Mean,
  SquaredError,
  SliceCols,
  Clamp,
  GatherRows,
  SoftmaxCrossEntropy,
  Transpose,
};

const char* op_name(OpKind op);

/// Gradient of a scalar output with respect to every node of a tape.
class Gradients {
 public:
  // Zero tensor of the node's shape when the output does not depend on it.
  Tensor operator[](Var v) const;
  bool touched(Var v) const { return v.id() < touched_.size() && touched_[v.id()]; }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
  std::vector<char> touched_;
};

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Node inputs always precede the node, so the insertion order is a
/// topological order and backward() is a single reverse sweep.
class Tape {
 public:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::array<std::size_t, 3> inputs{};
    std::uint8_t input_count = 0;
    bool needs_grad = false;
    Tensor value;
    double p0 = 0.0;
    double p1 = 0.0;
    std::vector<std::size_t> indices;
    Tensor saved;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar node. Throws ContractError for non-scalars.
  Gradients backward(Var output) const;

  // Used by the op implementations.
  Var push(Node node);

 private:
  std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
// x [B x in] (or [in]) times weight^T [in x out] plus bias [out].
Var linear(Var x, Var weight, Var bias);
// Same shapes, or matrix [m x n] + row vector [n].
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
// mean((a - b)^2) over all entries.
Var squared_error(Var a, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);
// Matrix transpose; a rank-1 input is treated as a single row.
Var transpose(Var a);
// Gradient passes where lo <= a <= hi and is zero elsewhere.
Var clamp(Var a, double lo, double hi);
Var gather_rows(Var table, std::span<const std::size_t> rows);
// Mean negative log-softmax likelihood of integer labels.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
// Copy of the value with no gradient path.
Var detach(Var a);

}  // namespace ad

// Found by argument-dependent lookup on Var.
inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator*(Var a, Var b) { return ad::mul(a, b); }
inline Var operator*(double s, Var a) { return ad::scale(a, s); }

}  // namespace c2hm
