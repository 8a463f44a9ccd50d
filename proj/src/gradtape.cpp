#include "soflow/gradtape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "soflow/errors.hpp"

namespace soflow::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
MutMap as_matrix(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + a.str() + " and " +
                   b.str());
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

Shape broadcast_shape(Op op, const Shape& a, const Shape& b) {
  bool ok = true;
  Shape out{broadcast_dim(a.rows, b.rows, ok), broadcast_dim(a.cols, b.cols, ok)};
  if (!ok) shape_fail(op, a, b);
  return out;
}

// Element of `t` that maps onto position (r, c) of a broadcast result.
inline double at_broadcast(const Tensor& t, std::size_t r, std::size_t c) {
  return t(t.rows() == 1 ? 0 : r, t.cols() == 1 ? 0 : c);
}

// Sums `g` down to `target` (inverse of broadcasting).
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const std::size_t tr = target.rows == 1 ? 0 : r;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out(tr, target.cols == 1 ? 0 : c) += g(r, c);
    }
  }
  return out;
}

template <class F>
Tensor binary_forward(Op op, const Tensor& a, const Tensor& b, F f) {
  const Shape s = broadcast_shape(op, a.shape(), b.shape());
  Tensor out(s);
  if (a.shape() == s && b.shape() == s) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      out(r, c) = f(at_broadcast(a, r, c), at_broadcast(b, r, c));
    }
  }
  return out;
}

template <class F>
Tensor unary_forward(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tape& tape_of(const Value& v) {
  if (!v.valid()) throw DomainError("gradtape: use of an unbound Value");
  return v.tape();
}

Tape& common_tape(const Value& a, const Value& b) {
  Tape& t = tape_of(a);
  if (&t != &tape_of(b)) throw DomainError("gradtape: operands recorded on different tapes");
  return t;
}

Value record_binary(Op op, const Value& a, const Value& b, Tensor value) {
  return common_tape(a, b).record(op, {a.id(), b.id()}, std::move(value));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::StopGradient: return "stop_gradient";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Exp: return "exp";
    case Op::Silu: return "silu";
    case Op::Relu: return "relu";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Broadcast: return "broadcast";
  }
  return "unknown";
}

const Tensor& Value::data() const { return tape_of(*this).data(id_); }

bool Value::requires_grad() const { return tape_of(*this).requires_grad(id_); }

double Value::item() const {
  const Tensor& t = data();
  if (t.size() != 1) throw ShapeError("item: value has shape " + t.shape().str());
  return t[0];
}

Value Tape::parameter(Tensor data) {
  Node node{Op::Leaf, {}, std::move(data), {}, {}, true};
  nodes_.push_back(std::move(node));
  return Value(this, nodes_.size() - 1);
}

Value Tape::constant(Tensor data) {
  Node node{Op::Constant, {}, std::move(data), {}, {}, false};
  nodes_.push_back(std::move(node));
  return Value(this, nodes_.size() - 1);
}

Value Tape::record(Op op, std::vector<std::size_t> inputs, Tensor value, Attrs attrs) {
  if (backward_done_) throw DomainError("gradtape: cannot record after backward");
  bool needs = false;
  if (op != Op::StopGradient) {
    for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(inputs), std::move(value), {}, attrs, needs});
  return Value(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = delta;
    return;
  }
  for (std::size_t i = 0; i < delta.size(); ++i) n.grad[i] += delta[i];
}

void Tape::propagate(const Node& node) {
  const Tensor& g = node.grad;
  auto in = [&](std::size_t k) -> const Node& { return nodes_[node.inputs[k]]; };
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };

  switch (node.op) {
    case Op::Leaf:
    case Op::Constant:
    case Op::StopGradient:
      return;
    case Op::MatMul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (wants(0)) {
        Tensor da(a.shape());
        as_matrix(da).noalias() = as_matrix(g) * as_matrix(b).transpose();
        accumulate(node.inputs[0], da);
      }
      if (wants(1)) {
        Tensor db(b.shape());
        as_matrix(db).noalias() = as_matrix(a).transpose() * as_matrix(g);
        accumulate(node.inputs[1], db);
      }
      return;
    }
    case Op::Add:
    case Op::Sub: {
      if (wants(0)) accumulate(node.inputs[0], reduce_to(g, in(0).value.shape()));
      if (wants(1)) {
        Tensor db = reduce_to(g, in(1).value.shape());
        if (node.op == Op::Sub) {
          for (std::size_t i = 0; i < db.size(); ++i) db[i] = -db[i];
        }
        accumulate(node.inputs[1], db);
      }
      return;
    }
    case Op::Mul: {
      const Tensor& a = in(0).value;
      const Tensor& b = in(1).value;
      if (wants(0)) {
        Tensor prod = binary_forward(Op::Mul, g, b, [](double x, double y) { return x * y; });
        accumulate(node.inputs[0], reduce_to(prod, a.shape()));
      }
      if (wants(1)) {
        Tensor prod = binary_forward(Op::Mul, g, a, [](double x, double y) { return x * y; });
        accumulate(node.inputs[1], reduce_to(prod, b.shape()));
      }
      return;
    }
    case Op::Scale: {
      const double c = node.attrs.scalar;
      accumulate(node.inputs[0], unary_forward(g, [c](double x) { return c * x; }));
      return;
    }
    case Op::AddScalar:
      accumulate(node.inputs[0], g);
      return;
    case Op::Sum:
    case Op::Mean: {
      const Tensor& a = in(0).value;
      const double v = node.op == Op::Sum ? g[0] : g[0] / static_cast<double>(a.size());
      accumulate(node.inputs[0], Tensor(a.shape(), v));
      return;
    }
    case Op::Square:
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Silu:
    case Op::Relu: {
      const Tensor& x = in(0).value;
      Tensor dx(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        double d = 0.0;
        switch (node.op) {
          case Op::Square: d = 2.0 * x[i]; break;
          case Op::Sin: d = std::cos(x[i]); break;
          case Op::Cos: d = -std::sin(x[i]); break;
          case Op::Exp: d = node.value[i]; break;
          case Op::Silu: {
            const double sg = sigmoid(x[i]);
            d = sg * (1.0 + x[i] * (1.0 - sg));
            break;
          }
          case Op::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
          default: break;
        }
        dx[i] = d * g[i];
      }
      accumulate(node.inputs[0], dx);
      return;
    }
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Tensor& part = in(k).value;
        if (wants(k)) {
          Tensor dp(part.shape());
          for (std::size_t r = 0; r < part.rows(); ++r) {
            for (std::size_t c = 0; c < part.cols(); ++c) dp(r, c) = g(r, offset + c);
          }
          accumulate(node.inputs[k], dp);
        }
        offset += part.cols();
      }
      return;
    }
    case Op::Slice: {
      const Tensor& a = in(0).value;
      Tensor da(a.shape());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) da(r, node.attrs.offset + c) = g(r, c);
      }
      accumulate(node.inputs[0], da);
      return;
    }
    case Op::Broadcast:
      accumulate(node.inputs[0], reduce_to(g, in(0).value.shape()));
      return;
  }
}

void Tape::backward(const Value& loss) {
  if (&tape_of(loss) != this) throw DomainError("backward: loss belongs to another tape");
  if (backward_done_) throw DomainError("backward: already run on this tape");
  const Tensor& l = data(loss.id());
  if (l.size() != 1) throw ShapeError("backward: loss must be scalar, got " + l.shape().str());
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor::scalar(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    propagate(n);
    // Interior gradients are dead once propagated; leaves keep theirs.
    if (n.op != Op::Leaf) n.grad = Tensor();
  }
}

Tensor Tape::grad(const Value& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Value stop_gradient(const Value& v) {
  return tape_of(v).record(Op::StopGradient, {v.id()}, v.data());
}

Value matmul(const Value& a, const Value& b) {
  const Tensor& x = a.data();
  const Tensor& y = b.data();
  if (x.cols() != y.rows()) shape_fail(Op::MatMul, x.shape(), y.shape());
  Tensor out(x.rows(), y.cols());
  as_matrix(out).noalias() = as_matrix(x) * as_matrix(y);
  return record_binary(Op::MatMul, a, b, std::move(out));
}

Value add(const Value& a, const Value& b) {
  return record_binary(Op::Add, a, b,
                       binary_forward(Op::Add, a.data(), b.data(),
                                      [](double x, double y) { return x + y; }));
}

Value sub(const Value& a, const Value& b) {
  return record_binary(Op::Sub, a, b,
                       binary_forward(Op::Sub, a.data(), b.data(),
                                      [](double x, double y) { return x - y; }));
}

Value mul(const Value& a, const Value& b) {
  return record_binary(Op::Mul, a, b,
                       binary_forward(Op::Mul, a.data(), b.data(),
                                      [](double x, double y) { return x * y; }));
}

Value scale(const Value& a, double c) {
  Tape::Attrs attrs;
  attrs.scalar = c;
  return tape_of(a).record(Op::Scale, {a.id()},
                           unary_forward(a.data(), [c](double x) { return c * x; }), attrs);
}

Value add_scalar(const Value& a, double c) {
  Tape::Attrs attrs;
  attrs.scalar = c;
  return tape_of(a).record(Op::AddScalar, {a.id()},
                           unary_forward(a.data(), [c](double x) { return x + c; }), attrs);
}

Value sum(const Value& a) {
  double acc = 0.0;
  for (double v : a.data().values()) acc += v;
  return tape_of(a).record(Op::Sum, {a.id()}, Tensor::scalar(acc));
}

Value mean(const Value& a) {
  const Tensor& x = a.data();
  if (x.empty()) throw ShapeError("mean: empty value");
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return tape_of(a).record(Op::Mean, {a.id()},
                           Tensor::scalar(acc / static_cast<double>(x.size())));
}

Value square(const Value& a) {
  return tape_of(a).record(Op::Square, {a.id()},
                           unary_forward(a.data(), [](double x) { return x * x; }));
}

Value sin(const Value& a) {
  return tape_of(a).record(Op::Sin, {a.id()},
                           unary_forward(a.data(), [](double x) { return std::sin(x); }));
}

Value cos(const Value& a) {
  return tape_of(a).record(Op::Cos, {a.id()},
                           unary_forward(a.data(), [](double x) { return std::cos(x); }));
}

Value exp(const Value& a) {
  return tape_of(a).record(Op::Exp, {a.id()},
                           unary_forward(a.data(), [](double x) { return std::exp(x); }));
}

Value silu(const Value& a) {
  return tape_of(a).record(Op::Silu, {a.id()},
                           unary_forward(a.data(), [](double x) { return x * sigmoid(x); }));
}

Value relu(const Value& a) {
  return tape_of(a).record(Op::Relu, {a.id()},
                           unary_forward(a.data(), [](double x) { return x > 0.0 ? x : 0.0; }));
}

Value concat(std::span<const Value> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = tape_of(parts[0]);
  const std::size_t rows = parts[0].data().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Value& p : parts) {
    if (&tape_of(p) != &tape) throw DomainError("concat: operands on different tapes");
    if (p.data().rows() != rows) shape_fail(Op::Concat, parts[0].shape(), p.shape());
    cols += p.data().cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Value& p : parts) {
    const Tensor& x = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(x.row_span(r).begin(), x.row_span(r).end(),
                out.row_span(r).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += x.cols();
  }
  return tape.record(Op::Concat, std::move(ids), std::move(out));
}

Value slice(const Value& a, std::size_t offset, std::size_t count) {
  const Tensor& x = a.data();
  if (offset + count > x.cols()) {
    throw ShapeError("slice: columns [" + std::to_string(offset) + ", " +
                     std::to_string(offset + count) + ") out of " + x.shape().str());
  }
  Tensor out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, offset + c);
  }
  Tape::Attrs attrs;
  attrs.offset = offset;
  attrs.count = count;
  return tape_of(a).record(Op::Slice, {a.id()}, std::move(out), attrs);
}

Value broadcast(const Value& a, Shape target) {
  const Tensor& x = a.data();
  if (broadcast_shape(Op::Broadcast, x.shape(), target) != target) {
    shape_fail(Op::Broadcast, x.shape(), target);
  }
  Tensor out(target);
  for (std::size_t r = 0; r < target.rows; ++r) {
    for (std::size_t c = 0; c < target.cols; ++c) out(r, c) = at_broadcast(x, r, c);
  }
  return tape_of(a).record(Op::Broadcast, {a.id()}, std::move(out));
}

Value row_mean(const Value& a) {
  const std::size_t n = a.data().cols();
  if (n == 0) throw ShapeError("row_mean: value has no columns");
  Value ones = tape_of(a).constant(Tensor(n, 1, 1.0 / static_cast<double>(n)));
  return matmul(a, ones);
}

}  // namespace soflow::ad
