#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latentdialog/autodiff/layers.hpp"
#include "latentdialog/autodiff/optim.hpp"
#include "latentdialog/corpus.hpp"

namespace ld::vae {

/// Sigmoid KL-weight schedule: λ(t) = λ_max · σ(k (t − T/2)) for t < T and
/// λ_max from T on, with k = ln(999) / (T/2) so that σ(k · T/2) = 0.999.
struct AnnealSchedule {
  double lambda_max = 0.15;
  std::int64_t horizon = 4500;

  double midpoint() const { return static_cast<double>(horizon) / 2.0; }
  double steepness() const;
};

double anneal_weight(std::int64_t iteration, const AnnealSchedule& schedule);

struct VaeConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t hidden = 512;
  std::size_t latent = 128;
  ad::CellType cell = ad::CellType::lstm;
  double word_dropout = 0.5;
  AnnealSchedule anneal;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double grad_clip = 5.0;
  /// Longest decode during validation BLEU.
  std::size_t max_len = 30;
  /// Validation utterances used for reconstruction BLEU; 0 means all.
  std::size_t bleu_samples = 0;

  /// Throws std::invalid_argument listing every violated constraint.
  void validate() const;
};

/// Diagonal Gaussian posterior N(mu, diag exp(log_sigma)²).
struct PosteriorParams {
  std::vector<double> mu;
  std::vector<double> log_sigma;

  std::size_t dim() const noexcept { return mu.size(); }
};

struct LatentCode {
  std::vector<double> z;

  std::size_t dim() const noexcept { return z.size(); }
  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

/// z = mu + exp(log_sigma) ⊙ ε with ε ~ N(0, I).
LatentCode reparameterize(const PosteriorParams& post, Rng& rng);

/// Σ_i ½ (mu_i² + σ_i² − 1 − ln σ_i²)
double kl_to_standard_normal(const PosteriorParams& post);

/// Replaces each token other than PAD/BOS/EOS with UNK with probability p.
std::vector<int> word_dropout(std::span<const int> tokens, double p, Rng& rng);

/// Encoder input, decoder input ([BOS] + tokens, after word dropout) and
/// reconstruction target (tokens + [EOS]) for a batch of utterances.
struct VaeBatch {
  corpus::PaddedBatch encoder_inputs;
  corpus::PaddedBatch decoder_inputs;
  corpus::PaddedBatch targets;
};

/// `rng` may be null when `dropout` is 0.
VaeBatch make_vae_batch(const std::vector<corpus::Utterance>& utterances, double dropout, Rng* rng);

struct PosteriorVars {
  ad::Var mu;
  ad::Var log_sigma;
};

/// Bidirectional encoder over the batch; heads read the concatenated final
/// states of both directions.
PosteriorVars encode_on_tape(const ad::Binding& p, const VaeConfig& config, const corpus::PaddedBatch& tokens);

/// mu + exp(log_sigma) ⊙ noise; `noise` is a constant [B×d_z].
ad::Var reparameterize_on_tape(const PosteriorVars& post, const ad::Tensor& noise);

/// Closed-form KL summed over batch rows and latent dimensions.
ad::Var kl_on_tape(const PosteriorVars& post);

/// Teacher-forced decoder from latent rows z [B×d_z]. A linear projection of
/// z initialises the decoder state (hidden and cell for LSTM). Returns the
/// masked cross-entropy summed over the batch.
ad::Var reconstruction_nll_on_tape(const ad::Binding& p, const VaeConfig& config, ad::Var z,
                                   const corpus::PaddedBatch& decoder_inputs,
                                   const corpus::PaddedBatch& targets);

struct VaeLoss {
  ad::Var total;       ///< mean over the batch of NLL + λ·KL
  double nll = 0.0;    ///< mean per-utterance reconstruction NLL
  double kl = 0.0;     ///< mean per-utterance KL
};

/// Single-sample Monte-Carlo estimate of the objective with fixed `noise`.
VaeLoss vae_loss(const ad::Binding& p, const VaeConfig& config, const VaeBatch& batch, const ad::Tensor& noise,
                 double kl_weight);

/// Parameters and evaluation entry points of a sentence VAE. Const member
/// functions are pure and may be called concurrently.
class VaeModel {
 public:
  /// Random initialisation.
  VaeModel(const VaeConfig& config, Rng& rng);
  /// Wraps existing parameters, checking their names and shapes.
  VaeModel(const VaeConfig& config, ad::ParamSet params);

  const VaeConfig& config() const noexcept { return config_; }
  ad::ParamSet& params() noexcept { return params_; }
  const ad::ParamSet& params() const noexcept { return params_; }

  /// Throws ShapeError for an empty utterance or out-of-range ids.
  PosteriorParams encode(std::span<const int> utterance) const;
  std::vector<PosteriorParams> encode_batch(const std::vector<corpus::Utterance>& utterances) const;

  /// Per-step logits [len×vocab] for decoder inputs (BOS-prefixed).
  ad::Tensor decode_teacher_forced(const LatentCode& z, std::span<const int> decoder_inputs) const;

  /// Greedy decoding from BOS until EOS or `max_len` tokens. PAD and BOS are
  /// never emitted; the returned ids exclude BOS and EOS.
  std::vector<int> decode_greedy(const LatentCode& z, std::size_t max_len) const;
  std::vector<std::vector<int>> decode_greedy_batch(const std::vector<LatentCode>& zs, std::size_t max_len) const;
  /// Ancestral sampling from the decoder softmax with the same stopping rule.
  std::vector<int> decode_sampled(const LatentCode& z, std::size_t max_len, Rng& rng) const;

 private:
  void check_tokens(std::span<const int> tokens) const;

  VaeConfig config_;
  ad::ParamSet params_;
};

/// Fresh parameter set laid out for `config`.
ad::ParamSet init_vae_params(const VaeConfig& config, Rng& rng);

/// Mean sentence BLEU-4 between each utterance and the greedy decode of its
/// posterior mean.
double reconstruction_bleu(const VaeModel& model, const std::vector<corpus::Utterance>& utterances,
                           std::size_t max_len);

struct VaeEpochLog {
  std::size_t epoch = 0;
  std::int64_t iteration = 0;
  double kl_weight = 0.0;
  double train_loss = 0.0;
  double train_nll = 0.0;
  double train_kl = 0.0;
  double valid_nll = 0.0;
  double valid_kl = 0.0;
  double valid_neg_elbo = 0.0;  ///< NLL + KL
  double valid_bleu = 0.0;
  bool best = false;
};

/// Return false to stop training after this epoch.
using VaeEpochCallback = std::function<bool(const VaeEpochLog&)>;

struct VaeTrainResult {
  VaeModel model;  ///< parameters from the best validation epoch
  std::vector<VaeEpochLog> log;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string diagnostic;
};

/// Adam with KL annealing and word dropout. The checkpoint with the lowest
/// validation NLL + KL is retained; a non-finite loss stops training and
/// returns that checkpoint with `diverged` set.
VaeTrainResult train_vae(const std::vector<corpus::Utterance>& train, const std::vector<corpus::Utterance>& valid,
                         const VaeConfig& config, Rng& rng, const VaeEpochCallback& on_epoch = {});

}  // namespace ld::vae
