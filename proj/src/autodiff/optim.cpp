#include "latentdialog/autodiff/optim.hpp"

#include <cmath>

namespace ld::ad {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("Adam learning rate must be > 0");
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads) {
  std::vector<Tensor*> targets;
  for (auto& e : params.entries()) {
    if (e.trainable) targets.push_back(&e.value);
  }
  if (grads.size() != targets.size()) {
    throw ShapeError("Adam::step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(targets.size()) + " trainable parameters");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!grads[i].same_shape(*targets[i])) {
      throw ShapeError("Adam::step: gradient " + grads[i].shape_string() + " does not match parameter " +
                       targets[i]->shape_string());
    }
  }
  if (m_.empty()) {
    for (const Tensor* p : targets) {
      m_.emplace_back(p->rows(), p->cols(), 0.0);
      v_.emplace_back(p->rows(), p->cols(), 0.0);
    }
  } else if (m_.size() != targets.size()) {
    throw ShapeError("Adam::step: parameter count changed between steps");
  }

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    Tensor& p = *targets[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

}  // namespace ld::ad
