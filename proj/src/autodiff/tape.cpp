#include "latentdialog/autodiff/tape.hpp"

namespace ld::ad {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error("Var does not belong to this tape");
  }
}

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value passed to Tape::variable");
  Node n;
  n.op = "variable";
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Tensor& value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite value passed to Tape::parameter");
  Node n;
  n.op = "parameter";
  n.borrowed = &value;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value passed to Tape::constant");
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from op '") + op + "' with shape " +
                       value.shape_string());
  }
  bool needs = false;
  for (const Var& in : inputs) {
    check_owner(in);
    needs = needs || nodes_[in.id_].requires_grad;
  }
  Node n;
  n.op = op;
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_owner(v);
  const Node& n = nodes_[v.id_];
  return n.borrowed != nullptr ? *n.borrowed : n.owned;
}

bool Tape::requires_grad(Var v) const {
  check_owner(v);
  return nodes_[v.id_].requires_grad;
}

Tensor& Tape::grad_buffer(Var v) {
  check_owner(v);
  auto& slot = grads_[v.id_];
  if (!slot) {
    const Tensor& val = value(v);
    slot.emplace(val.rows(), val.cols(), 0.0);
  }
  return *slot;
}

void Tape::backward(Var loss) {
  check_owner(loss);
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + lv.shape_string());
  }
  grads_.assign(nodes_.size(), std::nullopt);
  if (!nodes_[loss.id_].requires_grad) return;
  grads_[loss.id_].emplace(1, 1, 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !grads_[i]) continue;
    // grads_ never reallocates during the sweep, so `g` stays valid.
    const Tensor& g = *grads_[i];
    if (!g.all_finite()) {
      throw NumericError(std::string("non-finite gradient at op '") + n.op + "'");
    }
    n.backward(g, n.owned);
  }
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  const Tensor& val = value(v);
  if (v.id_ < grads_.size() && grads_[v.id_]) return *grads_[v.id_];
  return Tensor(val.rows(), val.cols(), 0.0);
}

}  // namespace ld::ad
