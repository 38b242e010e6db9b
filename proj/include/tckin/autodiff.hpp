#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tckin/param_store.hpp"
#include "tckin/tensor.hpp"

namespace tckin {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  explicit operator bool() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Record-then-replay reverse-mode differentiation.
///
/// Every op appends one node holding its forward value and a closure that
/// pushes the node's gradient into its inputs. Nodes are appended in
/// evaluation order, so a single reverse sweep over the node list is a valid
/// topological order. A tape serves one forward pass; build a new one per
/// batch.
class Tape {
 public:
  /// Receives the node's forward value and the gradient flowing into it, and
  /// scatters that gradient into the inputs through Tape::grad_slot.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a store parameter. Repeated calls with the same name
  /// return the same node. All params on one tape must share one store.
  Var param(ParamStore& store, const std::string& name);

  /// Appends an op node. `inputs` only decides whether the node needs a
  /// gradient; the closure captures whatever ids it needs.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id_].needs_grad; }

  /// Gradient accumulator for an input during the backward sweep; nullptr if
  /// the input does not depend on any parameter.
  Tensor* grad_slot(Var v);
  /// Gradient of the last backward() loss w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const;

  /// Computes d(loss)/d(param) for every parameter of `store` on this tape.
  /// Store gradient slots are overwritten; parameters not on the tape get
  /// zero gradients.
  void backward(Var loss, ParamStore& store);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor own;
    const Tensor* external = nullptr;
    Tensor grad;
    bool needs_grad = false;
    bool reached = false;
    std::string param_name;
    BackwardFn backward;
    const Tensor& value() const { return external ? *external : own; }
  };

  Var push(Node node);
  void check(Var v) const;

  std::vector<Node> nodes_;
  ParamStore* store_ = nullptr;
  std::vector<std::pair<std::string, std::uint32_t>> param_ids_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. Operands are rank-1 or rank-2; rank-1 acts as 1×n.
// Binary elementwise ops accept equal shapes, a size-1 operand (scalar
// broadcast) or, for the right operand, a row vector broadcast over rows.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a + c elementwise.
Var shift(Var a, double c);
/// 1 - a.
Var one_minus(Var a);
Var neg(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var relu(Var a);
/// x * sigmoid(x).
Var silu(Var a);

Var sum(Var a);
Var mean(Var a);
/// Mean over rows: [r×c] -> [1×c]. Requires r >= 1.
Var mean_rows(Var a);
Var transpose(Var a);
Var softmax_rows(Var a);

Var concat_cols(std::span<const Var> parts);
/// Stacks row blocks vertically; all parts need the same column count.
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> rows);

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 labels with the
/// probability clamped to [eps, 1-eps]. `logits` is [B×1] or [B].
Var bce_with_logits(Var logits, std::span<const double> labels, double eps = 1e-7);

}  // namespace tckin
