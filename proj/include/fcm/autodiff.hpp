#pragma once

// Reverse-mode differentiation over Tensor values.
//
// A Tape records one forward pass. Each op appends a node holding its value
// and a closure that pushes the output gradient back into its inputs. Nodes
// are appended after their inputs, so walking the tape backwards from the
// loss is a valid reverse topological order. Tapes are not reused: build,
// call backward() once, drop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "fcm/tensor.hpp"

namespace fcm::ad {

using NodeId = std::size_t;
class Tape;

struct Var {
  Tape* tape = nullptr;
  NodeId id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;
using GradientMap = std::map<NodeId, Tensor>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var leaf(Tensor t);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  // Zero-initialised on first touch.
  Tensor& grad_slot(NodeId id);
  void accumulate(NodeId id, const Tensor& g);

  // Gradients of the scalar `loss` for every leaf, zero for leaves the loss
  // does not depend on. Throws DimensionError if loss is not a single value.
  GradientMap backward(Var loss);
  // Gradient of any node after backward(); nullptr if it never received one.
  const Tensor* grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

enum class ElementwiseOp { kTanh, kSigmoid, kRelu, kMul, kSub, kAdd };

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var elementwise(ElementwiseOp op, Var a);
Var elementwise(ElementwiseOp op, Var a, Var b);
// scale * a + shift
Var affine(Var a, double scale, double shift);

// x[m x n] op v, with v a 1 x n row applied to every row.
Var add_row_broadcast(Var x, Var row);
Var mul_row_broadcast(Var x, Var row);
// x[m x n] op v, with v an m x 1 column applied to every column.
Var add_col_broadcast(Var x, Var col);
Var mul_col_broadcast(Var x, Var col);

// Row softmax over entries where mask is true; masked entries are exactly 0.
// Throws InvalidMaskError on a row with no valid entry.
Var masked_softmax_rows(Var x, const Mask& mask);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);

// Column-wise max over rows with row_mask true; result is 1 x d. Gradient
// goes to the first maximal row of each column.
Var masked_row_max_pool(Var x, std::span<const std::uint8_t> row_mask);

// Per-row (x - mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(Var x, double eps);
Var gather_rows(Var table, std::span<const std::int32_t> ids);

Var sum(Var x);
Var sum_squares(Var x);
Var element(Var x, std::size_t r, std::size_t c);
// log(max(x, floor)); increments *clamp_count for each clamped entry.
Var log_clamped(Var x, double floor, std::size_t* clamp_count = nullptr);

namespace debug {
// Deliberately wrong local gradients, used as negative controls for the
// finite-difference checker.
enum class Fault { kNone, kSigmoidBackward };
void inject_fault(Fault f);
Fault active_fault();
}  // namespace debug

}  // namespace fcm::ad
