#include "latentdialog/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentdialog/metrics.hpp"

namespace ld::vae {

using ad::Binding;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using corpus::PaddedBatch;
using corpus::Utterance;

double AnnealSchedule::steepness() const { return std::log(999.0) / midpoint(); }

double anneal_weight(std::int64_t iteration, const AnnealSchedule& schedule) {
  if (iteration < 0) throw std::invalid_argument("anneal_weight: iteration must be >= 0");
  if (iteration >= schedule.horizon) return schedule.lambda_max;
  const double x = schedule.steepness() * (static_cast<double>(iteration) - schedule.midpoint());
  return schedule.lambda_max * ad::logistic(x);
}

void VaeConfig::validate() const {
  std::vector<std::string> errors;
  if (vocab_size <= corpus::kReservedCount) errors.push_back("vae.vocab_size must exceed the 4 reserved ids");
  if (embed_dim == 0) errors.push_back("vae.embed_dim must be > 0");
  if (hidden == 0) errors.push_back("vae.hidden must be > 0");
  if (latent == 0) errors.push_back("vae.latent must be > 0");
  if (!(word_dropout >= 0.0 && word_dropout <= 1.0)) errors.push_back("vae.word_dropout must be in [0, 1]");
  if (!(anneal.lambda_max >= 0.0)) errors.push_back("vae.kl_target must be >= 0");
  if (anneal.horizon < 2) errors.push_back("vae.anneal_horizon must be >= 2");
  if (!(learning_rate > 0.0)) errors.push_back("vae.learning_rate must be > 0");
  if (batch_size == 0) errors.push_back("vae.batch_size must be >= 1");
  if (max_len == 0) errors.push_back("vae.max_len must be >= 1");
  if (errors.empty()) return;
  std::string msg = "invalid VAE configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

LatentCode reparameterize(const PosteriorParams& post, Rng& rng) {
  if (post.mu.size() != post.log_sigma.size()) throw ShapeError("reparameterize: mu/log_sigma size mismatch");
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentCode out;
  out.z.resize(post.mu.size());
  for (std::size_t i = 0; i < post.mu.size(); ++i) out.z[i] = post.mu[i] + std::exp(post.log_sigma[i]) * normal(rng);
  return out;
}

double kl_to_standard_normal(const PosteriorParams& post) {
  if (post.mu.size() != post.log_sigma.size()) throw ShapeError("kl_to_standard_normal: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mu.size(); ++i) {
    const double ls = post.log_sigma[i];
    kl += 0.5 * (post.mu[i] * post.mu[i] + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
  }
  return kl;
}

std::vector<int> word_dropout(std::span<const int> tokens, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("word dropout probability must be in [0, 1]");
  std::bernoulli_distribution drop(p);
  std::vector<int> out(tokens.begin(), tokens.end());
  for (int& t : out) {
    if (t == corpus::kPad || t == corpus::kBos || t == corpus::kEos) continue;
    if (drop(rng)) t = corpus::kUnk;
  }
  return out;
}

VaeBatch make_vae_batch(const std::vector<Utterance>& utterances, double dropout, Rng* rng) {
  std::vector<Utterance> dec_in, targets;
  dec_in.reserve(utterances.size());
  targets.reserve(utterances.size());
  for (const auto& u : utterances) {
    if (u.empty()) throw ShapeError("VAE batches cannot contain empty utterances");
    Utterance in;
    in.reserve(u.size() + 1);
    in.push_back(corpus::kBos);
    in.insert(in.end(), u.begin(), u.end());
    if (dropout > 0.0) {
      if (rng == nullptr) throw std::invalid_argument("make_vae_batch: word dropout needs an rng");
      in = word_dropout(in, dropout, *rng);
    }
    dec_in.push_back(std::move(in));
    Utterance tgt(u);
    tgt.push_back(corpus::kEos);
    targets.push_back(std::move(tgt));
  }
  return {corpus::pad_sequences(utterances), corpus::pad_sequences(dec_in), corpus::pad_sequences(targets)};
}

PosteriorVars encode_on_tape(const Binding& p, const VaeConfig& config, const PaddedBatch& tokens) {
  std::vector<Var> steps;
  std::vector<Tensor> masks;
  Var table = p["embedding"];
  for (std::size_t t = 0; t < tokens.width; ++t) {
    steps.push_back(ad::embedding(table, tokens.column(t)));
    masks.push_back(tokens.mask_column(t));
  }
  Var summary = ad::bidirectional_encode(p, "enc_fwd", "enc_bwd", config.cell, config.hidden, steps, masks);
  return {ad::linear(p, "mu", summary), ad::linear(p, "log_sigma", summary)};
}

Var reparameterize_on_tape(const PosteriorVars& post, const Tensor& noise) {
  Tape& tape = post.mu.tape();
  return ad::add(post.mu, ad::mul(ad::exp(post.log_sigma), tape.constant(noise)));
}

Var kl_on_tape(const PosteriorVars& post) {
  // ½ Σ (μ² + e^{2 log σ} − 1 − 2 log σ)
  Var mu2 = ad::mul(post.mu, post.mu);
  Var var = ad::exp(ad::scale(post.log_sigma, 2.0));
  Var inner = ad::sub(ad::add(mu2, var), ad::affine(post.log_sigma, 2.0, 1.0));
  return ad::scale(ad::sum(inner), 0.5);
}

namespace {

ad::RnnState decoder_initial_state(const Binding& p, const VaeConfig& config, Var z) {
  Var init = ad::linear(p, "latent2state", z);
  if (config.cell == ad::CellType::lstm) {
    return {ad::slice_cols(init, 0, config.hidden), ad::slice_cols(init, config.hidden, 2 * config.hidden)};
  }
  return {init, init};
}

}  // namespace

Var reconstruction_nll_on_tape(const Binding& p, const VaeConfig& config, Var z, const PaddedBatch& decoder_inputs,
                               const PaddedBatch& targets) {
  if (decoder_inputs.width != targets.width || decoder_inputs.rows != targets.rows) {
    throw ShapeError("decoder inputs and targets must have the same padded shape");
  }
  ad::RnnState state = decoder_initial_state(p, config, z);
  Var table = p["embedding"];
  Var total;
  for (std::size_t t = 0; t < decoder_inputs.width; ++t) {
    Var x = ad::embedding(table, decoder_inputs.column(t));
    state = ad::cell_step(p, "dec", config.cell, x, state);
    Var logits = ad::linear(p, "out", state.h);
    const std::vector<int> tgt = targets.column(t);
    const std::vector<double> w = targets.mask_vector(t);
    Var step = ad::softmax_cross_entropy(logits, tgt, w);
    total = t == 0 ? step : ad::add(total, step);
  }
  return total;
}

VaeLoss vae_loss(const Binding& p, const VaeConfig& config, const VaeBatch& batch, const Tensor& noise,
                 double kl_weight) {
  if (kl_weight < 0.0) throw std::invalid_argument("KL weight must be >= 0");
  const std::size_t rows = batch.encoder_inputs.rows;
  if (noise.rows() != rows || noise.cols() != config.latent) {
    throw ShapeError("vae_loss: noise must be [" + std::to_string(rows) + "x" + std::to_string(config.latent) +
                     "], got " + noise.shape_string());
  }
  PosteriorVars post = encode_on_tape(p, config, batch.encoder_inputs);
  Var z = reparameterize_on_tape(post, noise);
  Var nll = reconstruction_nll_on_tape(p, config, z, batch.decoder_inputs, batch.targets);
  Var kl = kl_on_tape(post);
  const double inv = 1.0 / static_cast<double>(rows);
  Var total = ad::scale(ad::add(nll, ad::scale(kl, kl_weight)), inv);
  return {total, nll.value().item() * inv, kl.value().item() * inv};
}

ad::ParamSet init_vae_params(const VaeConfig& config, Rng& rng) {
  config.validate();
  ad::ParamSet p;
  std::normal_distribution<double> normal(0.0, 0.1);
  Tensor emb(config.vocab_size, config.embed_dim);
  for (double& v : emb.data()) v = normal(rng);
  p.add("embedding", std::move(emb));
  ad::add_cell(p, "enc_fwd", config.cell, config.embed_dim, config.hidden, rng);
  ad::add_cell(p, "enc_bwd", config.cell, config.embed_dim, config.hidden, rng);
  ad::add_linear(p, "mu", 2 * config.hidden, config.latent, rng);
  ad::add_linear(p, "log_sigma", 2 * config.hidden, config.latent, rng);
  const std::size_t state = config.cell == ad::CellType::lstm ? 2 * config.hidden : config.hidden;
  ad::add_linear(p, "latent2state", config.latent, state, rng);
  ad::add_cell(p, "dec", config.cell, config.embed_dim, config.hidden, rng);
  ad::add_linear(p, "out", config.hidden, config.vocab_size, rng);
  return p;
}

VaeModel::VaeModel(const VaeConfig& config, Rng& rng) : config_(config), params_(init_vae_params(config, rng)) {}

VaeModel::VaeModel(const VaeConfig& config, ad::ParamSet params) : config_(config), params_(std::move(params)) {
  config_.validate();
  Rng dummy(0);
  const ad::ParamSet reference = init_vae_params(config_, dummy);
  for (const auto& e : reference.entries()) {
    if (!params_.contains(e.name)) throw ShapeError("VAE parameters are missing '" + e.name + "'");
    const Tensor& got = params_.at(e.name);
    if (!got.same_shape(e.value)) {
      throw ShapeError("VAE parameter '" + e.name + "' has shape " + got.shape_string() + ", expected " +
                       e.value.shape_string());
    }
  }
  if (params_.size() != reference.size()) throw ShapeError("VAE parameter set has unexpected entries");
}

void VaeModel::check_tokens(std::span<const int> tokens) const {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw ShapeError("token id " + std::to_string(t) + " outside vocabulary of size " +
                       std::to_string(config_.vocab_size));
    }
  }
}

PosteriorParams VaeModel::encode(std::span<const int> utterance) const {
  return encode_batch({Utterance(utterance.begin(), utterance.end())}).front();
}

std::vector<PosteriorParams> VaeModel::encode_batch(const std::vector<Utterance>& utterances) const {
  if (utterances.empty()) return {};
  for (const auto& u : utterances) {
    if (u.empty()) throw ShapeError("cannot encode an empty utterance");
    check_tokens(u);
  }
  Tape tape;
  Binding p(tape, params_, false);
  PosteriorVars post = encode_on_tape(p, config_, corpus::pad_sequences(utterances));
  std::vector<PosteriorParams> out(utterances.size());
  for (std::size_t r = 0; r < utterances.size(); ++r) {
    out[r].mu = post.mu.value().row_vector(r);
    out[r].log_sigma = post.log_sigma.value().row_vector(r);
  }
  return out;
}

Tensor VaeModel::decode_teacher_forced(const LatentCode& z, std::span<const int> decoder_inputs) const {
  if (z.dim() != config_.latent) {
    throw ShapeError("latent code has dimension " + std::to_string(z.dim()) + ", expected " +
                     std::to_string(config_.latent));
  }
  if (decoder_inputs.empty()) throw ShapeError("decode_teacher_forced: empty input");
  check_tokens(decoder_inputs);
  Tape tape;
  Binding p(tape, params_, false);
  ad::RnnState state = decoder_initial_state(p, config_, tape.constant(Tensor::row(z.z)));
  Var table = p["embedding"];
  Tensor logits(decoder_inputs.size(), config_.vocab_size);
  for (std::size_t t = 0; t < decoder_inputs.size(); ++t) {
    const int id = decoder_inputs[t];
    state = ad::cell_step(p, "dec", config_.cell, ad::embedding(table, std::span<const int>(&id, 1)), state);
    const Tensor& step = ad::linear(p, "out", state.h).value();
    std::copy(step.data().begin(), step.data().end(), logits.row_span(t).begin());
  }
  return logits;
}

namespace {

int argmax_token(std::span<const double> logits) {
  int best = -1;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const int id = static_cast<int>(c);
    if (id == corpus::kPad || id == corpus::kBos) continue;
    if (best < 0 || logits[c] > logits[static_cast<std::size_t>(best)]) best = id;
  }
  return best;
}

}  // namespace

std::vector<std::vector<int>> VaeModel::decode_greedy_batch(const std::vector<LatentCode>& zs,
                                                            std::size_t max_len) const {
  if (zs.empty()) return {};
  Tensor zt(zs.size(), config_.latent);
  for (std::size_t r = 0; r < zs.size(); ++r) {
    if (zs[r].dim() != config_.latent) {
      throw ShapeError("latent code has dimension " + std::to_string(zs[r].dim()) + ", expected " +
                       std::to_string(config_.latent));
    }
    std::copy(zs[r].z.begin(), zs[r].z.end(), zt.row_span(r).begin());
  }
  Tape tape;
  Binding p(tape, params_, false);
  ad::RnnState state = decoder_initial_state(p, config_, tape.constant(std::move(zt)));
  Var table = p["embedding"];
  std::vector<std::vector<int>> out(zs.size());
  std::vector<int> current(zs.size(), corpus::kBos);
  std::vector<bool> done(zs.size(), false);
  std::size_t remaining = zs.size();
  for (std::size_t step = 0; step < max_len && remaining > 0; ++step) {
    state = ad::cell_step(p, "dec", config_.cell, ad::embedding(table, current), state);
    const Tensor& logits = ad::linear(p, "out", state.h).value();
    for (std::size_t r = 0; r < zs.size(); ++r) {
      if (done[r]) continue;
      const int next = argmax_token(logits.row_span(r));
      if (next == corpus::kEos) {
        done[r] = true;
        --remaining;
        continue;
      }
      out[r].push_back(next);
      current[r] = next;
    }
  }
  return out;
}

std::vector<int> VaeModel::decode_greedy(const LatentCode& z, std::size_t max_len) const {
  return decode_greedy_batch({z}, max_len).front();
}

std::vector<int> VaeModel::decode_sampled(const LatentCode& z, std::size_t max_len, Rng& rng) const {
  if (z.dim() != config_.latent) throw ShapeError("latent code dimension mismatch");
  Tape tape;
  Binding p(tape, params_, false);
  ad::RnnState state = decoder_initial_state(p, config_, tape.constant(Tensor::row(z.z)));
  Var table = p["embedding"];
  std::vector<int> out;
  int current = corpus::kBos;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t step = 0; step < max_len; ++step) {
    state = ad::cell_step(p, "dec", config_.cell, ad::embedding(table, std::span<const int>(&current, 1)), state);
    const Tensor& logits = ad::linear(p, "out", state.h).value();
    std::vector<double> probs(logits.data().begin(), logits.data().end());
    probs[corpus::kPad] = -1e300;
    probs[corpus::kBos] = -1e300;
    const double lse = ad::log_sum_exp(probs);
    double u = unif(rng);
    int next = corpus::kEos;
    for (std::size_t c = 0; c < probs.size(); ++c) {
      const double pc = std::exp(probs[c] - lse);
      if (u < pc) {
        next = static_cast<int>(c);
        break;
      }
      u -= pc;
    }
    if (next == corpus::kEos) break;
    out.push_back(next);
    current = next;
  }
  return out;
}

double reconstruction_bleu(const VaeModel& model, const std::vector<Utterance>& utterances, std::size_t max_len) {
  if (utterances.empty()) return 0.0;
  constexpr std::size_t kChunk = 64;
  double total = 0.0;
  for (std::size_t start = 0; start < utterances.size(); start += kChunk) {
    const std::size_t end = std::min(utterances.size(), start + kChunk);
    std::vector<Utterance> chunk(utterances.begin() + static_cast<std::ptrdiff_t>(start),
                                 utterances.begin() + static_cast<std::ptrdiff_t>(end));
    const auto posts = model.encode_batch(chunk);
    std::vector<LatentCode> zs;
    for (const auto& post : posts) zs.push_back({post.mu});
    const auto decoded = model.decode_greedy_batch(zs, max_len);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      total += metrics::bleu_smoothed<int>(decoded[i], chunk[i]);
    }
  }
  return total / static_cast<double>(utterances.size());
}

namespace {

struct ValidationStats {
  double nll = 0.0;
  double kl = 0.0;
};

ValidationStats validate_vae(const VaeModel& model, const std::vector<Utterance>& valid) {
  ValidationStats s;
  if (valid.empty()) return s;
  const VaeConfig& config = model.config();
  // Fixed noise stream so epochs are comparable.
  Rng rng(0x5eedULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t start = 0; start < valid.size(); start += config.batch_size) {
    const std::size_t end = std::min(valid.size(), start + config.batch_size);
    std::vector<Utterance> chunk(valid.begin() + static_cast<std::ptrdiff_t>(start),
                                 valid.begin() + static_cast<std::ptrdiff_t>(end));
    VaeBatch batch = make_vae_batch(chunk, 0.0, nullptr);
    Tensor noise(chunk.size(), config.latent);
    for (double& v : noise.data()) v = normal(rng);
    Tape tape;
    Binding p(tape, model.params(), false);
    VaeLoss loss = vae_loss(p, config, batch, noise, 1.0);
    s.nll += loss.nll * static_cast<double>(chunk.size());
    s.kl += loss.kl * static_cast<double>(chunk.size());
  }
  s.nll /= static_cast<double>(valid.size());
  s.kl /= static_cast<double>(valid.size());
  return s;
}

}  // namespace

VaeTrainResult train_vae(const std::vector<Utterance>& train, const std::vector<Utterance>& valid,
                         const VaeConfig& config, Rng& rng, const VaeEpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_vae: training corpus is empty");
  for (const auto& u : train) {
    if (u.empty()) throw std::invalid_argument("train_vae: training corpus contains an empty utterance");
  }

  VaeModel model(config, rng);
  VaeTrainResult result{model, {}, 0, false, {}};
  ad::Adam adam({config.learning_rate});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Utterance> bleu_set = valid;
  if (config.bleu_samples > 0 && bleu_set.size() > config.bleu_samples) bleu_set.resize(config.bleu_samples);

  std::int64_t iteration = 0;
  double best = 0.0;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    VaeEpochLog log;
    log.epoch = epoch;
    double seen = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        std::vector<Utterance> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(train[order[i]]);
        VaeBatch batch = make_vae_batch(chunk, config.word_dropout, &rng);
        Tensor noise(chunk.size(), config.latent);
        for (double& v : noise.data()) v = normal(rng);
        const double lambda = anneal_weight(iteration, config.anneal);

        Tape tape;
        Binding p(tape, model.params());
        VaeLoss loss = vae_loss(p, config, batch, noise, lambda);
        tape.backward(loss.total);
        std::vector<Tensor> grads = p.gradients();
        ad::clip_global_norm(grads, config.grad_clip);
        adam.step(model.params(), grads);
        ++iteration;

        const double n = static_cast<double>(chunk.size());
        log.train_loss += loss.total.value().item() * n;
        log.train_nll += loss.nll * n;
        log.train_kl += loss.kl * n;
        log.kl_weight = lambda;
        seen += n;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ", iteration " + std::to_string(iteration) + ": " + e.what();
      break;
    }
    log.iteration = iteration;
    log.train_loss /= seen;
    log.train_nll /= seen;
    log.train_kl /= seen;

    const ValidationStats vs = validate_vae(model, valid);
    log.valid_nll = vs.nll;
    log.valid_kl = vs.kl;
    log.valid_neg_elbo = vs.nll + vs.kl;
    log.valid_bleu = reconstruction_bleu(model, bleu_set, config.max_len);
    // Without validation data the latest epoch is kept.
    if (valid.empty() || !have_best || log.valid_neg_elbo < best) {
      best = log.valid_neg_elbo;
      have_best = true;
      log.best = true;
      result.model = model;
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
    if (on_epoch && !on_epoch(log)) break;
  }
  return result;
}

}  // namespace ld::vae
