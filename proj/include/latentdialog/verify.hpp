#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "latentdialog/autodiff/gradcheck.hpp"

namespace ld::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Check {
  std::string name;
  std::function<CheckResult()> run;
};

/// Relative-error bound for every finite-difference check.
inline constexpr double kGradTolerance = 1e-4;

/// Finite-difference check of `loss` over `inputs`, named after the op.
Check input_gradient_check(std::string name, ad::InputLoss loss, std::vector<ad::Tensor> inputs);
/// Same over the trainable entries of a parameter set built by `make_params`.
Check param_gradient_check(std::string name, std::function<ad::ParamSet()> make_params, ad::ParamLoss loss);

/// Gradient checks for every primitive op and composite loss on tiny
/// configurations.
std::vector<Check> gradient_checks();
/// Closed-form KL, value-function, annealing and metric oracle checks.
std::vector<Check> closed_form_checks();
std::vector<Check> default_checks();

/// Runs every check; an exception inside a check counts as a failure.
std::vector<CheckResult> run_checks(const std::vector<Check>& checks);

/// Fixed-width pass/fail table followed by a summary line.
void print_table(std::ostream& out, const std::vector<CheckResult>& results);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace ld::verify
