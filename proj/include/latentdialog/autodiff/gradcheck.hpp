#pragma once

#include <functional>
#include <string>
#include <vector>

#include "latentdialog/autodiff/params.hpp"

namespace ld::ad {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_entry;   ///< input index or parameter name
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Elementwise error |a − n| / max(|a|, |n|, floor). The floor keeps
/// round-off on near-zero gradients from reading as a large relative error.
double relative_error(double analytic, double numeric, double floor = 1e-5);

using InputLoss = std::function<Var(Tape&, const std::vector<Var>&)>;
using ParamLoss = std::function<Var(Tape&, const Binding&)>;

/// Compares tape gradients of `loss` w.r.t. every element of `inputs`
/// against central differences with step `h`.
GradCheckResult check_input_gradients(const InputLoss& loss, std::vector<Tensor> inputs, double h = 1e-5);

/// Same, over every trainable entry of `params`. `params` is perturbed in
/// place and restored.
GradCheckResult check_param_gradients(const ParamLoss& loss, ParamSet& params, double h = 1e-5);

}  // namespace ld::ad
