#include "mmt/numerics/tape.hpp"

namespace mmt {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

void Tape::check_owned(const Var& v, const char* what) const {
  if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument(std::string(what) + ": value is not recorded on this tape");
  }
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericalError("leaf tensor contains non-finite values");
  Node node;
  node.value = std::move(value);
  node.value.set_requires_grad(requires_grad);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericalError(std::string(op) + " produced non-finite values (shape " + shape_string(value.shape()) + ")");
  }
  bool needs_grad = false;
  for (const Var& in : inputs) {
    check_owned(in, op);
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.value.set_requires_grad(needs_grad);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& delta) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = delta;
  } else {
    node.grad += delta;
  }
}

void Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  if (backward_done_) throw std::logic_error("backward called twice on the same tape without reset");
  const Node& root = nodes_[loss.id()];
  if (root.value.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  if (!root.requires_grad) throw std::invalid_argument("backward: loss is detached from every grad-enabled leaf");
  backward_done_ = true;
  visited_ = 0;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.is_leaf || node.grad.size() == 0) continue;
    node.backward(*this, node.grad);
    ++visited_;
  }
}

Matrix Tape::grad(const Var& v) const {
  check_owned(v, "grad");
  const Node& node = nodes_[v.id()];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
  visited_ = 0;
}

}  // namespace mmt
