#pragma once

#include <span>
#include <vector>

#include "latentdialog/autodiff/layers.hpp"
#include "latentdialog/corpus.hpp"
#include "latentdialog/vae.hpp"

namespace ld::ctx {

/// Bidirectional recurrent encoder over the latent means of preceding turns.
struct ContextConfig {
  std::size_t latent = 128;
  std::size_t hidden = 512;
  ad::CellType cell = ad::CellType::lstm;
  ad::Pooling pooling = ad::Pooling::final_state;

  std::size_t output_dim() const noexcept { return 2 * hidden; }
  void validate() const;
};

/// Cells "ctx_fwd" and "ctx_bwd", both reading d_z inputs.
ad::ParamSet init_context_params(const ContextConfig& config, Rng& rng);

/// One context per row, each a list of d_z vectors in turn order. Returns
/// [B×d_ctx]; rows with an empty context are zero.
ad::Var encode_context_on_tape(const ad::Binding& p, const ContextConfig& config,
                               const std::vector<std::vector<std::vector<double>>>& contexts);

class ContextEncoder {
 public:
  ContextEncoder(const ContextConfig& config, Rng& rng);
  ContextEncoder(const ContextConfig& config, ad::ParamSet params);

  const ContextConfig& config() const noexcept { return config_; }
  ad::ParamSet& params() noexcept { return params_; }
  const ad::ParamSet& params() const noexcept { return params_; }

  /// Context vector from per-turn latent means. Empty input gives zeros
  /// without running the recurrent net.
  std::vector<double> encode(const std::vector<std::vector<double>>& turn_latents) const;

  /// Encodes each turn with the frozen VAE (posterior mean) first.
  std::vector<double> encode_utterances(const std::vector<corpus::Utterance>& context,
                                        const vae::VaeModel& vae) const;

 private:
  ContextConfig config_;
  ad::ParamSet params_;
};

/// Posterior means of each utterance, in order.
std::vector<std::vector<double>> context_latents(const std::vector<corpus::Utterance>& context,
                                                 const vae::VaeModel& vae);

/// [z_q ; c]
std::vector<double> condition(std::span<const double> z_q, std::span<const double> c);

}  // namespace ld::ctx
