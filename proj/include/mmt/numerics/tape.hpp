#pragma once

#include "mmt/numerics/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mmt {

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Matrix& data() const { return value().data(); }
  const Shape& shape() const { return value().shape(); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run record of executed ops.
///
/// Every op appends one node holding its output and a closure that
/// propagates the output gradient to its inputs. `backward` walks the nodes
/// once in reverse order. A tape is single-use: build a fresh one per
/// forward pass, or call `reset`.
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op output. `op` names the op in error messages.
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  void backward(const Var& loss);

  /// Gradient of a node after backward; zeros if nothing flowed into it.
  Matrix grad(const Var& v) const;
  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Adds `delta` into the gradient of `v`; no-op for nodes without grad.
  void accumulate(const Var& v, const Matrix& delta);

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  /// Number of nodes whose backward closure ran in the last backward call.
  std::size_t visited() const { return visited_; }
  void reset();

 private:
  struct Node {
    Tensor value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  void check_owned(const Var& v, const char* what) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::size_t visited_ = 0;
};

}  // namespace mmt
