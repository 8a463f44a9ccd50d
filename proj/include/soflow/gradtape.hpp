#pragma once

// Define-by-run reverse-mode differentiation over dense f64 matrices.
//
// A Tape records every primitive as it is evaluated. Values are lightweight
// handles (tape pointer + node index); the tape owns all data. Nodes that do
// not depend on any parameter (constants, stop_gradient outputs and anything
// computed only from those) are marked as not requiring a gradient and are
// skipped entirely during backward.
//
// Binary elementwise ops broadcast a [1, c], [r, 1] or [1, 1] operand against
// the other operand's shape.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "soflow/tensor.hpp"

namespace soflow::ad {

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  StopGradient,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Sum,
  Mean,
  Square,
  Sin,
  Cos,
  Exp,
  Silu,
  Relu,
  Concat,
  Slice,
  Broadcast,
};

const char* op_name(Op op);

// Extra operands of a primitive: scalar factor, or slice offset and width.
struct OpAttrs {
  double scalar = 0.0;
  std::size_t offset = 0;
  std::size_t count = 0;
};

class Tape;

class Value {
 public:
  Value() = default;

  const Tensor& data() const;
  const Shape& shape() const { return data().shape(); }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  // Convenience for [1, 1] values.
  double item() const;

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf; receives a gradient on backward.
  Value parameter(Tensor data);
  Value constant(Tensor data);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every node that requires a
  // gradient, visiting nodes in reverse append order. May be called once.
  void backward(const Value& loss);

  // Gradient of the last backward w.r.t. leaf `v`; zeros if `v` was
  // unreached. Interior gradients are released as backward proceeds.
  Tensor grad(const Value& v) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& data(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  using Attrs = OpAttrs;

  // Appends a primitive whose forward value has already been computed.
  Value record(Op op, std::vector<std::size_t> inputs, Tensor value, Attrs attrs = {});

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;  // empty until something flows into the node
    Attrs attrs;
    bool requires_grad = false;
  };

  void accumulate(std::size_t id, const Tensor& delta);
  void propagate(const Node& node);

  // deque keeps references returned by data() stable while recording.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

Value stop_gradient(const Value& v);

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double c);
Value add_scalar(const Value& a, double c);
Value sum(const Value& a);
Value mean(const Value& a);
Value square(const Value& a);
Value sin(const Value& a);
Value cos(const Value& a);
Value exp(const Value& a);
Value silu(const Value& a);
Value relu(const Value& a);
// Column-wise concatenation of values with equal row counts.
Value concat(std::span<const Value> parts);
// Columns [offset, offset + count).
Value slice(const Value& a, std::size_t offset, std::size_t count);
Value broadcast(const Value& a, Shape target);
// Per-row mean over columns: [r, c] -> [r, 1]. Built from matmul.
Value row_mean(const Value& a);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }
inline Value operator*(double c, const Value& a) { return scale(a, c); }

}  // namespace soflow::ad
