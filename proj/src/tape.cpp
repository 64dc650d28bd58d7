#include "c2hm/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "c2hm/errors.hpp"

namespace c2hm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

CMapMat as_mat(const Tensor& t) {
  return CMapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MapMat as_mat(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
  return a.tape();
}

Tape::Node make_node(OpKind op, std::initializer_list<Var> inputs, Tensor value) {
  Tape::Node n;
  n.op = op;
  for (Var v : inputs) {
    n.inputs[n.input_count++] = v.id();
    n.needs_grad = n.needs_grad || v.tape().node(v.id()).needs_grad;
  }
  n.value = std::move(value);
  return n;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(*this); }

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Linear: return "linear";
    case OpKind::Add: return "add";
    case OpKind::AddRowBias: return "add_row_bias";
    case OpKind::Sub: return "subtract";
    case OpKind::Mul: return "hadamard";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::SquaredError: return "squared_error";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::Clamp: return "clamp";
    case OpKind::GatherRows: return "gather_rows";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::Transpose: return "transpose";
  }
  return "unknown";
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.op = OpKind::Leaf;
  n.needs_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::push(Node node) {
  for (std::uint8_t i = 0; i < node.input_count; ++i) {
    if (node.inputs[i] >= nodes_.size()) throw ContractError("tape node references a later node");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Gradients::operator[](Var v) const {
  if (touched(v)) return grads_[v.id()];
  return Tensor(tape_->value(v).shape());
}

Gradients Tape::backward(Var output) const {
  if (!output.valid() || &output.tape() != this) throw ContractError("backward: output is not on this tape");
  if (value(output).size() != 1) {
    throw ContractError("backward: output must be scalar, got " + value(output).shape_string());
  }
  Gradients g;
  g.tape_ = this;
  g.grads_.resize(nodes_.size());
  g.touched_.assign(nodes_.size(), 0);

  auto grad_of = [&](std::size_t id) -> Tensor& {
    if (!g.touched_[id]) {
      g.grads_[id] = Tensor(nodes_[id].value.shape());
      g.touched_[id] = 1;
    }
    return g.grads_[id];
  };
  auto wants = [&](std::size_t id) { return nodes_[id].needs_grad; };

  grad_of(output.id())[0] = 1.0;

  for (std::size_t idx = output.id() + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!g.touched_[idx] || !n.needs_grad) continue;
    const Tensor& dy = g.grads_[idx];
    const std::size_t a = n.inputs[0];
    const std::size_t b = n.inputs[1];

    switch (n.op) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& av = nodes_[a].value;
        const Tensor& bv = nodes_[b].value;
        if (wants(a)) as_mat(grad_of(a)).noalias() += as_mat(dy) * as_mat(bv).transpose();
        if (wants(b)) as_mat(grad_of(b)).noalias() += as_mat(av).transpose() * as_mat(dy);
        break;
      }
      case OpKind::Linear: {
        const std::size_t c = n.inputs[2];
        const Tensor& xv = nodes_[a].value;
        const Tensor& wv = nodes_[b].value;
        if (wants(a)) as_mat(grad_of(a)).noalias() += as_mat(dy) * as_mat(wv);
        if (wants(b)) as_mat(grad_of(b)).noalias() += as_mat(dy).transpose() * as_mat(xv);
        if (wants(c)) {
          Tensor& gb = grad_of(c);
          const auto rows = dy.rows(), cols = dy.cols();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j) gb[j] += dy[r * cols + j];
        }
        break;
      }
      case OpKind::Add:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i];
        }
        if (wants(b)) {
          Tensor& gb = grad_of(b);
          for (std::size_t i = 0; i < dy.size(); ++i) gb[i] += dy[i];
        }
        break;
      case OpKind::AddRowBias:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i];
        }
        if (wants(b)) {
          Tensor& gb = grad_of(b);
          const auto cols = gb.size();
          for (std::size_t i = 0; i < dy.size(); ++i) gb[i % cols] += dy[i];
        }
        break;
      case OpKind::Sub:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i];
        }
        if (wants(b)) {
          Tensor& gb = grad_of(b);
          for (std::size_t i = 0; i < dy.size(); ++i) gb[i] -= dy[i];
        }
        break;
      case OpKind::Mul: {
        const Tensor& av = nodes_[a].value;
        const Tensor& bv = nodes_[b].value;
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * bv[i];
        }
        if (wants(b)) {
          Tensor& gb = grad_of(b);
          for (std::size_t i = 0; i < dy.size(); ++i) gb[i] += dy[i] * av[i];
        }
        break;
      }
      case OpKind::Scale:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += n.p0 * dy[i];
        }
        break;
      case OpKind::AddScalar:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i];
        }
        break;
      case OpKind::Sigmoid:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) {
            const double s = n.value[i];
            ga[i] += dy[i] * s * (1.0 - s);
          }
        }
        break;
      case OpKind::Tanh:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) {
            const double t = n.value[i];
            ga[i] += dy[i] * (1.0 - t * t);
          }
        }
        break;
      case OpKind::Exp:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] * n.value[i];
        }
        break;
      case OpKind::Log:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const Tensor& av = nodes_[a].value;
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i] / av[i];
        }
        break;
      case OpKind::Square:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const Tensor& av = nodes_[a].value;
          for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += 2.0 * dy[i] * av[i];
        }
        break;
      case OpKind::Sum:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (double& v : ga.values()) v += dy[0];
        }
        break;
      case OpKind::Mean:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const double s = dy[0] / static_cast<double>(ga.size());
          for (double& v : ga.values()) v += s;
        }
        break;
      case OpKind::SquaredError: {
        const Tensor& av = nodes_[a].value;
        const Tensor& bv = nodes_[b].value;
        const double s = 2.0 * dy[0] / static_cast<double>(av.size());
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          for (std::size_t i = 0; i < av.size(); ++i) ga[i] += s * (av[i] - bv[i]);
        }
        if (wants(b)) {
          Tensor& gb = grad_of(b);
          for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= s * (av[i] - bv[i]);
        }
        break;
      }
      case OpKind::SliceCols:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const auto start = static_cast<std::size_t>(n.p0);
          const auto count = dy.cols();
          const auto in_cols = ga.cols();
          for (std::size_t r = 0; r < dy.rows(); ++r)
            for (std::size_t j = 0; j < count; ++j) ga[r * in_cols + start + j] += dy[r * count + j];
        }
        break;
      case OpKind::Transpose:
        if (wants(a)) as_mat(grad_of(a)) += as_mat(dy).transpose();
        break;
      case OpKind::Clamp:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const Tensor& av = nodes_[a].value;
          for (std::size_t i = 0; i < dy.size(); ++i) {
            if (av[i] >= n.p0 && av[i] <= n.p1) ga[i] += dy[i];
          }
        }
        break;
      case OpKind::GatherRows:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const auto cols = ga.cols();
          for (std::size_t r = 0; r < n.indices.size(); ++r)
            for (std::size_t j = 0; j < cols; ++j) ga[n.indices[r] * cols + j] += dy[r * cols + j];
        }
        break;
      case OpKind::SoftmaxCrossEntropy:
        if (wants(a)) {
          Tensor& ga = grad_of(a);
          const auto rows = n.saved.rows(), cols = n.saved.cols();
          const double s = dy[0] / static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j) {
              const double target = (j == n.indices[r]) ? 1.0 : 0.0;
              ga[r * cols + j] += s * (n.saved[r * cols + j] - target);
            }
        }
        break;
    }
  }
  return g;
}

namespace ad {

namespace {

template <typename F>
Var unary(OpKind op, Var a, F f) {
  Tensor out = a.value();
  for (double& v : out.values()) v = f(v);
  return a.tape().push(make_node(op, {a}, std::move(out)));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  return t.push(make_node(OpKind::MatMul, {a, b}, std::move(out)));
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = same_tape(x, weight, "linear");
  same_tape(x, bias, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (wv.rank() != 2 || xv.rank() > 2 || xv.cols() != wv.cols()) shape_mismatch("linear", xv, wv);
  if (bv.rank() != 1 || bv.size() != wv.rows()) shape_mismatch("linear(bias)", wv, bv);
  Tensor out = xv.rank() == 1 ? Tensor({wv.rows()}) : Tensor({xv.rows(), wv.rows()});
  auto om = as_mat(out);
  om.noalias() = as_mat(xv) * as_mat(wv).transpose();
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), static_cast<Eigen::Index>(bv.size()));
  return t.push(make_node(OpKind::Linear, {x, weight, bias}, std::move(out)));
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.same_shape(bv)) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return t.push(make_node(OpKind::Add, {a, b}, std::move(out)));
  }
  if (av.rank() == 2 && bv.rank() == 1 && bv.size() == av.cols()) {
    Tensor out = av;
    const auto cols = av.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
    return t.push(make_node(OpKind::AddRowBias, {a, b}, std::move(out)));
  }
  shape_mismatch("add", av, bv);
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "subtract");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch("subtract", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.push(make_node(OpKind::Sub, {a, b}, std::move(out)));
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "hadamard");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch("hadamard", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.push(make_node(OpKind::Mul, {a, b}, std::move(out)));
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  auto n = make_node(OpKind::Scale, {a}, std::move(out));
  n.p0 = s;
  return a.tape().push(std::move(n));
}

Var add_scalar(Var a, double s) {
  return unary(OpKind::AddScalar, a, [s](double v) { return v + s; });
}

Var sigmoid(Var a) { return unary(OpKind::Sigmoid, a, sigmoid_scalar); }

Var tanh(Var a) {
  return unary(OpKind::Tanh, a, [](double v) { return std::tanh(v); });
}

Var exp(Var a) {
  return unary(OpKind::Exp, a, [](double v) { return std::exp(v); });
}

Var log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
  }
  return unary(OpKind::Log, a, [](double v) { return std::log(v); });
}

Var square(Var a) {
  return unary(OpKind::Square, a, [](double v) { return v * v; });
}

Var sum(Var a) {
  return a.tape().push(make_node(OpKind::Sum, {a}, Tensor::scalar(c2hm::sum(a.value()))));
}

Var mean(Var a) {
  return a.tape().push(make_node(OpKind::Mean, {a}, Tensor::scalar(c2hm::mean(a.value()))));
}

Var squared_error(Var a, Var b) {
  Tape& t = same_tape(a, b, "squared_error");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch("squared_error", av, bv);
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return t.push(make_node(OpKind::SquaredError, {a, b}, Tensor::scalar(s / static_cast<double>(av.size()))));
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& av = a.value();
  if (av.rank() > 2 || count == 0 || start + count > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + av.shape_string());
  }
  const auto rows = av.rows(), cols = av.cols();
  Tensor out = av.rank() == 1 ? Tensor({count}) : Tensor({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = av[r * cols + start + j];
  auto n = make_node(OpKind::SliceCols, {a}, std::move(out));
  n.p0 = static_cast<double>(start);
  return a.tape().push(std::move(n));
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() > 2) throw ShapeError("transpose: expected a matrix, got " + av.shape_string());
  Tensor out({av.cols(), av.rows()});
  as_mat(out) = as_mat(av).transpose();
  return a.tape().push(make_node(OpKind::Transpose, {a}, std::move(out)));
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  auto n = make_node(OpKind::Clamp, {a}, Tensor(a.value()));
  for (double& v : n.value.values()) v = std::clamp(v, lo, hi);
  n.p0 = lo;
  n.p1 = hi;
  return a.tape().push(std::move(n));
}

Var gather_rows(Var table, std::span<const std::size_t> rows) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("gather_rows: table must be a matrix, got " + tv.shape_string());
  if (rows.empty()) throw ContractError("gather_rows: empty index list");
  const auto cols = tv.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= tv.rows()) {
      throw ContractError("gather_rows: index " + std::to_string(rows[r]) + " out of range for " + tv.shape_string());
    }
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = tv[rows[r] * cols + j];
  }
  auto n = make_node(OpKind::GatherRows, {table}, std::move(out));
  n.indices.assign(rows.begin(), rows.end());
  return table.tape().push(std::move(n));
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& lv = logits.value();
  const auto rows = lv.rows(), cols = lv.cols();
  if (labels.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     lv.shape_string());
  }
  Tensor probs({rows, cols});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw ContractError("softmax_cross_entropy: label out of range");
    double mx = lv[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, lv[r * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      probs[r * cols + j] = std::exp(lv[r * cols + j] - mx);
      z += probs[r * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) probs[r * cols + j] /= z;
    loss -= lv[r * cols + labels[r]] - mx - std::log(z);
  }
  auto n = make_node(OpKind::SoftmaxCrossEntropy, {logits}, Tensor::scalar(loss / static_cast<double>(rows)));
  n.indices.assign(labels.begin(), labels.end());
  n.saved = std::move(probs);
  return logits.tape().push(std::move(n));
}

Var detach(Var a) { return a.tape().constant(a.value()); }

}  // namespace ad

}  // namespace c2hm
