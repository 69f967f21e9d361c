#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "latentdialog/autodiff/layers.hpp"
#include "latentdialog/autodiff/optim.hpp"
#include "latentdialog/context_encoder.hpp"

namespace ld::gan {

/// `basic`: ReLU hidden layers without normalisation. `appendix`: LeakyReLU
/// with batch norm on the generator's hidden layer and LeakyReLU in the
/// discriminator.
enum class Preset { basic, appendix };
Preset parse_preset(const std::string& name);
std::string to_string(Preset preset);

/// `mlp`: one hidden layer then a logit. `logistic`: a single affine logit.
enum class DiscriminatorHead { mlp, logistic };
DiscriminatorHead parse_head(const std::string& name);
std::string to_string(DiscriminatorHead head);

/// Generator adversarial term: −log D(fake) or the literal log(1 − D(fake)).
enum class AdversarialLoss { non_saturating, minimax };
AdversarialLoss parse_adversarial_loss(const std::string& name);
std::string to_string(AdversarialLoss loss);

struct NetworkConfig {
  std::size_t latent = 128;       ///< d_z of query and response codes
  std::size_t context_dim = 0;    ///< d_ctx; 0 for single-turn
  std::size_t hidden = 256;
  Preset preset = Preset::appendix;
  DiscriminatorHead head = DiscriminatorHead::mlp;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;

  /// Generator input width: d_z + d_ctx.
  std::size_t condition_dim() const noexcept { return latent + context_dim; }
  /// Discriminator input width: response code plus condition.
  std::size_t discriminator_input_dim() const noexcept { return latent + condition_dim(); }
  void validate() const;
};

/// Generator: "gen.l1" (cond→hidden), optional "gen.bn", "gen.l2" (hidden→d_z).
ad::ParamSet init_generator_params(const NetworkConfig& config, Rng& rng);
/// Discriminator: "disc.l1", "disc.l2" for the MLP head, "disc.out" for the
/// logistic head.
ad::ParamSet init_discriminator_params(const NetworkConfig& config, Rng& rng);

/// ẑ_r = G(cond) for a batch of rows. Batch norm uses batch statistics in
/// train mode (needs ≥ 2 rows) and running statistics in eval mode.
ad::Var generator_on_tape(const ad::Binding& g, const NetworkConfig& config, ad::Var cond, ad::NormMode mode,
                          std::vector<ad::BatchNormUpdate>* updates = nullptr);

/// D logit for each row of concat(z_resp, cond).
ad::Var discriminator_logit_on_tape(const ad::Binding& d, const NetworkConfig& config, ad::Var z_resp,
                                    ad::Var cond);

/// −mean[log D(real) + log(1 − D(fake))] in logit form.
ad::Var discriminator_loss_on_tape(ad::Var logit_real, ad::Var logit_fake);

struct GeneratorLossVars {
  ad::Var total;
  ad::Var adversarial;
  ad::Var mse;
};

/// total = adv_weight · adv + γ · mse, where mse = mean over rows of
/// ‖z_r − ẑ_r‖².
GeneratorLossVars generator_loss_on_tape(ad::Var logit_fake, ad::Var z_real, ad::Var z_fake, double gamma,
                                         double adv_weight, AdversarialLoss kind);

/// mean[log D(real) + log(1 − D(fake))] from plain logits.
double value_function(std::span<const double> logits_real, std::span<const double> logits_fake);

/// Query code, per-turn context codes (empty for single-turn) and response code.
struct GanSample {
  std::vector<double> z_q;
  std::vector<std::vector<double>> context;
  std::vector<double> z_r;
};

/// Generator, discriminator and optional context encoder.
class GanModel {
 public:
  GanModel(const NetworkConfig& net, std::optional<ctx::ContextConfig> context, Rng& rng);
  GanModel(const NetworkConfig& net, std::optional<ctx::ContextConfig> context, ad::ParamSet generator,
           ad::ParamSet discriminator, std::optional<ad::ParamSet> context_params);

  const NetworkConfig& network() const noexcept { return net_; }
  bool multi_turn() const noexcept { return context_.has_value(); }
  const ctx::ContextEncoder& context_encoder() const;
  ctx::ContextEncoder& context_encoder();

  ad::ParamSet& generator() noexcept { return generator_; }
  const ad::ParamSet& generator() const noexcept { return generator_; }
  ad::ParamSet& discriminator() noexcept { return discriminator_; }
  const ad::ParamSet& discriminator() const noexcept { return discriminator_; }

  /// Conditioning rows [B×(d_z+d_ctx)] for a batch, context encoded with
  /// frozen parameters.
  ad::Tensor conditions(const std::vector<GanSample>& samples) const;
  /// Eval-mode generator on conditioning rows.
  ad::Tensor generate(const ad::Tensor& cond) const;
  /// D(z_resp, cond) as probabilities [B×1].
  ad::Tensor discriminate(const ad::Tensor& z_resp, const ad::Tensor& cond) const;

 private:
  NetworkConfig net_;
  ad::ParamSet generator_;
  ad::ParamSet discriminator_;
  std::optional<ctx::ContextEncoder> context_;
};

/// Conditioning rows on a tape: constant z_q columns followed, for
/// multi-turn models, by the context encoding through `ctx_binding`.
ad::Var conditions_on_tape(ad::Tape& tape, const GanModel& model, const ad::Binding* ctx_binding,
                           const std::vector<GanSample>& samples);

struct GanTrainConfig {
  double gamma = 1.0;
  /// Scale on the generator's adversarial term; 0 reduces training to regression.
  double adv_weight = 1.0;
  std::size_t d_steps_per_g = 1;
  double g_learning_rate = 1e-3;
  double d_learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  double grad_clip = 5.0;
  double bn_momentum = 0.1;
  AdversarialLoss adversarial = AdversarialLoss::non_saturating;

  void validate() const;
};

struct HeldOutStats {
  double mse = 0.0;               ///< mean ‖z_r − G(cond)‖²
  double target_energy = 0.0;     ///< mean ‖z_r‖²
  double d_accuracy = 0.0;        ///< real scored > ½ and fake scored < ½
};

HeldOutStats held_out_stats(const GanModel& model, const std::vector<GanSample>& samples);

struct GanEpochLog {
  std::size_t epoch = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_mse = 0.0;
  double g_total = 0.0;
  HeldOutStats valid;
};

/// Return false to stop after this epoch.
using GanEpochCallback = std::function<bool(const GanEpochLog&)>;

struct GanTrainResult {
  GanModel model;  ///< last epoch that finished with finite losses
  std::vector<GanEpochLog> log;
  bool diverged = false;
  std::string diagnostic;
};

/// Alternating updates on shuffled mini-batches: d_steps_per_g
/// discriminator steps with the generator held fixed, then one generator
/// step (which also trains the context encoder) with the discriminator held
/// fixed. Batch-norm running statistics move only on generator steps.
GanTrainResult train_gan(GanModel model, const std::vector<GanSample>& train, const std::vector<GanSample>& valid,
                         const GanTrainConfig& config, Rng& rng, const GanEpochCallback& on_epoch = {});

/// Latent pairs from a frozen VAE. Posterior means by default; with
/// `sample_posterior` each code is drawn from q(z|s) instead.
std::vector<GanSample> make_latent_pairs(const std::vector<corpus::TurnSample>& samples, const vae::VaeModel& vae,
                                         bool sample_posterior, Rng* rng);

}  // namespace ld::gan
