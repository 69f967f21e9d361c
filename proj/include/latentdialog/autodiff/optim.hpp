#pragma once

#include <cstdint>
#include <vector>

#include "latentdialog/autodiff/params.hpp"

namespace ld::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of one ParamSet.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// `grads` follows the order of ParamSet's trainable entries (as produced
  /// by Binding::gradients). Moments are created on the first call.
  void step(ParamSet& params, const std::vector<Tensor>& grads);

  std::int64_t steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

/// Global L2 norm over a gradient list.
double global_norm(const std::vector<Tensor>& grads);

/// Rescales `grads` in place so the global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace ld::ad
