#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latentdialog/autodiff/tensor.hpp"

namespace ld::ad {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records primitive operations in execution order and replays them in reverse
/// to accumulate gradients.
///
/// A tape is single-threaded. Parameters are borrowed by pointer, so the
/// referenced tensors must outlive the tape and stay unmodified while it is
/// in use.
class Tape {
 public:
  /// Receives the gradient flowing into the node's output and the output value.
  using BackwardFn = std::function<void(const Tensor& grad_out, const Tensor& out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf owning its value.
  Var variable(Tensor value);
  /// Leaf that borrows `value`; differentiable when `requires_grad`.
  Var parameter(const Tensor& value, bool requires_grad = true);
  /// Non-differentiable leaf.
  Var constant(Tensor value);

  /// Appends an op output. `backward` is dropped when no input needs a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient accumulator for `v`; zero-initialised on first access during backward.
  Tensor& grad_buffer(Var v);

  /// Runs reverse accumulation from a scalar node. Gradients from any earlier
  /// call are discarded first, so repeated calls give identical results.
  void backward(Var loss);

  /// Gradient of the last backward() w.r.t. `v`; zeros if `v` was not reached.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_owner(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

}  // namespace ld::ad
