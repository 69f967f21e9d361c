#include "latentdialog/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ld::ad {
namespace {

void track(GradCheckResult& r, double a, double n, const std::string& entry, std::size_t index) {
  const double e = relative_error(a, n);
  if (r.checked++ == 0 || e > r.max_relative_error) {
    r.max_relative_error = e;
    r.worst_entry = entry;
    r.worst_index = index;
    r.analytic = a;
    r.numeric = n;
  }
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_input_gradients(const InputLoss& loss, std::vector<Tensor> inputs, double h) {
  auto evaluate = [&](bool with_grads, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var out = loss(tape, vars);
    const double value = out.value().item();
    if (with_grads) {
      tape.backward(out);
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double saved = inputs[k][i];
      inputs[k][i] = saved + h;
      const double up = evaluate(false, nullptr);
      inputs[k][i] = saved - h;
      const double down = evaluate(false, nullptr);
      inputs[k][i] = saved;
      track(result, analytic[k][i], (up - down) / (2.0 * h), "input " + std::to_string(k), i);
    }
  }
  return result;
}

GradCheckResult check_param_gradients(const ParamLoss& loss, ParamSet& params, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Binding binding(tape, params);
    Var out = loss(tape, binding);
    tape.backward(out);
    analytic = binding.gradients();
  }
  auto evaluate = [&] {
    Tape tape;
    Binding binding(tape, params);
    return loss(tape, binding).value().item();
  };

  GradCheckResult result;
  std::size_t k = 0;
  for (auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double saved = e.value[i];
      e.value[i] = saved + h;
      const double up = evaluate();
      e.value[i] = saved - h;
      const double down = evaluate();
      e.value[i] = saved;
      track(result, analytic[k][i], (up - down) / (2.0 * h), e.name, i);
    }
    ++k;
  }
  return result;
}

}  // namespace ld::ad
