#include "latentdialog/latent_gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ld::gan {

using ad::Binding;
using ad::Tape;
using ad::Tensor;
using ad::Var;

Preset parse_preset(const std::string& name) {
  if (name == "basic") return Preset::basic;
  if (name == "appendix") return Preset::appendix;
  throw std::invalid_argument("unknown GAN preset '" + name + "' (expected basic or appendix)");
}

std::string to_string(Preset preset) { return preset == Preset::basic ? "basic" : "appendix"; }

DiscriminatorHead parse_head(const std::string& name) {
  if (name == "mlp") return DiscriminatorHead::mlp;
  if (name == "logistic") return DiscriminatorHead::logistic;
  throw std::invalid_argument("unknown discriminator head '" + name + "' (expected mlp or logistic)");
}

std::string to_string(DiscriminatorHead head) { return head == DiscriminatorHead::mlp ? "mlp" : "logistic"; }

AdversarialLoss parse_adversarial_loss(const std::string& name) {
  if (name == "non_saturating") return AdversarialLoss::non_saturating;
  if (name == "minimax") return AdversarialLoss::minimax;
  throw std::invalid_argument("unknown adversarial loss '" + name + "' (expected non_saturating or minimax)");
}

std::string to_string(AdversarialLoss loss) {
  return loss == AdversarialLoss::non_saturating ? "non_saturating" : "minimax";
}

void NetworkConfig::validate() const {
  std::vector<std::string> errors;
  if (latent == 0) errors.push_back("gan latent dimension must be > 0");
  if (hidden == 0) errors.push_back("gan.hidden must be > 0");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) errors.push_back("gan.leaky_slope must be in [0, 1)");
  if (!(bn_eps > 0.0)) errors.push_back("gan.bn_eps must be > 0");
  if (errors.empty()) return;
  std::string msg = "invalid GAN network configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

void GanTrainConfig::validate() const {
  std::vector<std::string> errors;
  if (!(gamma >= 0.0)) errors.push_back("gan.gamma must be >= 0");
  if (!(adv_weight >= 0.0)) errors.push_back("gan.adv_weight must be >= 0");
  if (d_steps_per_g < 1) errors.push_back("gan.d_steps_per_g must be >= 1");
  if (!(g_learning_rate > 0.0)) errors.push_back("gan.g_learning_rate must be > 0");
  if (!(d_learning_rate > 0.0)) errors.push_back("gan.d_learning_rate must be > 0");
  if (batch_size < 2) errors.push_back("gan.batch_size must be >= 2");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) errors.push_back("gan.bn_momentum must be in (0, 1]");
  if (errors.empty()) return;
  std::string msg = "invalid GAN training configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

ad::ParamSet init_generator_params(const NetworkConfig& config, Rng& rng) {
  config.validate();
  ad::ParamSet p;
  ad::add_linear(p, "gen.l1", config.condition_dim(), config.hidden, rng);
  if (config.preset == Preset::appendix) ad::add_batch_norm(p, "gen.bn", config.hidden);
  ad::add_linear(p, "gen.l2", config.hidden, config.latent, rng);
  return p;
}

ad::ParamSet init_discriminator_params(const NetworkConfig& config, Rng& rng) {
  config.validate();
  ad::ParamSet p;
  if (config.head == DiscriminatorHead::logistic) {
    ad::add_linear(p, "disc.out", config.discriminator_input_dim(), 1, rng);
  } else {
    ad::add_linear(p, "disc.l1", config.discriminator_input_dim(), config.hidden, rng);
    ad::add_linear(p, "disc.l2", config.hidden, 1, rng);
  }
  return p;
}

namespace {

Var hidden_activation(const NetworkConfig& config, Var x) {
  return config.preset == Preset::appendix ? ad::leaky_relu(x, config.leaky_slope) : ad::relu(x);
}

void check_width(Var v, std::size_t expected, const char* what) {
  if (v.cols() != expected) {
    throw ShapeError(std::string(what) + " has width " + std::to_string(v.cols()) + ", expected " +
                     std::to_string(expected));
  }
}

}  // namespace

Var generator_on_tape(const Binding& g, const NetworkConfig& config, Var cond, ad::NormMode mode,
                      std::vector<ad::BatchNormUpdate>* updates) {
  check_width(cond, config.condition_dim(), "generator input");
  Var h = ad::linear(g, "gen.l1", cond);
  if (config.preset == Preset::appendix) h = ad::batch_norm(g, "gen.bn", h, mode, config.bn_eps, updates);
  return ad::linear(g, "gen.l2", hidden_activation(config, h));
}

Var discriminator_logit_on_tape(const Binding& d, const NetworkConfig& config, Var z_resp, Var cond) {
  check_width(z_resp, config.latent, "discriminator response input");
  check_width(cond, config.condition_dim(), "discriminator condition input");
  if (z_resp.rows() != cond.rows()) throw ShapeError("discriminator inputs disagree on batch size");
  Var x = ad::concat_cols({z_resp, cond});
  if (config.head == DiscriminatorHead::logistic) return ad::linear(d, "disc.out", x);
  return ad::linear(d, "disc.l2", hidden_activation(config, ad::linear(d, "disc.l1", x)));
}

Var discriminator_loss_on_tape(Var logit_real, Var logit_fake) {
  // −log σ(l) = softplus(−l), −log(1 − σ(l)) = softplus(l)
  return ad::add(ad::mean(ad::softplus(ad::neg(logit_real))), ad::mean(ad::softplus(logit_fake)));
}

GeneratorLossVars generator_loss_on_tape(Var logit_fake, Var z_real, Var z_fake, double gamma, double adv_weight,
                                         AdversarialLoss kind) {
  if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  if (z_real.rows() != z_fake.rows() || z_real.cols() != z_fake.cols()) {
    throw ShapeError("generator loss: real and fake codes differ in shape");
  }
  Var adv = kind == AdversarialLoss::non_saturating ? ad::mean(ad::softplus(ad::neg(logit_fake)))
                                                    : ad::neg(ad::mean(ad::softplus(logit_fake)));
  Var mse = ad::scale(ad::squared_error(z_real, z_fake), 1.0 / static_cast<double>(z_real.rows()));
  Var total = ad::add(ad::scale(adv, adv_weight), ad::scale(mse, gamma));
  return {total, adv, mse};
}

double value_function(std::span<const double> logits_real, std::span<const double> logits_fake) {
  if (logits_real.empty() || logits_real.size() != logits_fake.size()) {
    throw std::invalid_argument("value_function needs equally many real and fake logits");
  }
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  double v = 0.0;
  for (std::size_t i = 0; i < logits_real.size(); ++i) v -= softplus(-logits_real[i]) + softplus(logits_fake[i]);
  return v / static_cast<double>(logits_real.size());
}

GanModel::GanModel(const NetworkConfig& net, std::optional<ctx::ContextConfig> context, Rng& rng) : net_(net) {
  if (context) {
    if (net_.context_dim != context->output_dim() || context->latent != net_.latent) {
      throw ShapeError("context encoder output does not match the GAN condition width");
    }
    context_.emplace(*context, rng);
  } else if (net_.context_dim != 0) {
    throw ShapeError("a nonzero context width needs a context encoder");
  }
  generator_ = init_generator_params(net_, rng);
  discriminator_ = init_discriminator_params(net_, rng);
}

GanModel::GanModel(const NetworkConfig& net, std::optional<ctx::ContextConfig> context, ad::ParamSet generator,
                   ad::ParamSet discriminator, std::optional<ad::ParamSet> context_params)
    : net_(net), generator_(std::move(generator)), discriminator_(std::move(discriminator)) {
  Rng dummy(0);
  auto check = [](const ad::ParamSet& got, const ad::ParamSet& want, const char* what) {
    if (got.size() != want.size()) throw ShapeError(std::string(what) + " parameter set has unexpected entries");
    for (const auto& e : want.entries()) {
      if (!got.contains(e.name) || !got.at(e.name).same_shape(e.value)) {
        throw ShapeError(std::string(what) + " parameter '" + e.name + "' missing or misshapen");
      }
    }
  };
  check(generator_, init_generator_params(net_, dummy), "generator");
  check(discriminator_, init_discriminator_params(net_, dummy), "discriminator");
  if (context.has_value() != context_params.has_value()) {
    throw std::invalid_argument("context encoder config and parameters must be given together");
  }
  if (context) {
    if (net_.context_dim != context->output_dim()) throw ShapeError("context width mismatch");
    context_.emplace(*context, std::move(*context_params));
  } else if (net_.context_dim != 0) {
    throw ShapeError("a nonzero context width needs a context encoder");
  }
}

const ctx::ContextEncoder& GanModel::context_encoder() const {
  if (!context_) throw std::logic_error("single-turn GAN has no context encoder");
  return *context_;
}

ctx::ContextEncoder& GanModel::context_encoder() {
  if (!context_) throw std::logic_error("single-turn GAN has no context encoder");
  return *context_;
}

Var conditions_on_tape(Tape& tape, const GanModel& model, const Binding* ctx_binding,
                       const std::vector<GanSample>& samples) {
  const NetworkConfig& net = model.network();
  if (samples.empty()) throw ShapeError("empty GAN batch");
  Tensor zq(samples.size(), net.latent);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].z_q.size() != net.latent) {
      throw ShapeError("query code has dimension " + std::to_string(samples[r].z_q.size()) + ", expected " +
                       std::to_string(net.latent));
    }
    std::copy(samples[r].z_q.begin(), samples[r].z_q.end(), zq.row_span(r).begin());
  }
  Var q = tape.constant(std::move(zq));
  if (!model.multi_turn()) {
    for (const auto& s : samples) {
      if (!s.context.empty()) throw std::invalid_argument("single-turn GAN given a sample with context");
    }
    return q;
  }
  std::vector<std::vector<std::vector<double>>> contexts;
  contexts.reserve(samples.size());
  for (const auto& s : samples) contexts.push_back(s.context);
  const auto& enc = model.context_encoder();
  Var c;
  if (ctx_binding != nullptr) {
    c = ctx::encode_context_on_tape(*ctx_binding, enc.config(), contexts);
  } else {
    Binding frozen(tape, enc.params(), false);
    c = ctx::encode_context_on_tape(frozen, enc.config(), contexts);
  }
  return ad::concat_cols({q, c});
}

Tensor GanModel::conditions(const std::vector<GanSample>& samples) const {
  Tape tape;
  return conditions_on_tape(tape, *this, nullptr, samples).value();
}

Tensor GanModel::generate(const Tensor& cond) const {
  Tape tape;
  Binding g(tape, generator_, false);
  return generator_on_tape(g, net_, tape.constant(cond), ad::NormMode::eval).value();
}

Tensor GanModel::discriminate(const Tensor& z_resp, const Tensor& cond) const {
  Tape tape;
  Binding d(tape, discriminator_, false);
  Tensor logits = discriminator_logit_on_tape(d, net_, tape.constant(z_resp), tape.constant(cond)).value();
  for (double& v : logits.data()) v = ad::logistic(v);
  return logits;
}

namespace {

Tensor response_rows(const std::vector<GanSample>& samples, std::size_t latent) {
  Tensor z(samples.size(), latent);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].z_r.size() != latent) throw ShapeError("response code has the wrong dimension");
    std::copy(samples[r].z_r.begin(), samples[r].z_r.end(), z.row_span(r).begin());
  }
  return z;
}

}  // namespace

HeldOutStats held_out_stats(const GanModel& model, const std::vector<GanSample>& samples) {
  HeldOutStats s;
  if (samples.empty()) return s;
  const Tensor cond = model.conditions(samples);
  const Tensor real = response_rows(samples, model.network().latent);
  const Tensor fake = model.generate(cond);
  const Tensor p_real = model.discriminate(real, cond);
  const Tensor p_fake = model.discriminate(fake, cond);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (std::size_t c = 0; c < real.cols(); ++c) {
      const double d = real(r, c) - fake(r, c);
      s.mse += d * d;
      s.target_energy += real(r, c) * real(r, c);
    }
    if (p_real(r, 0) > 0.5) ++correct;
    if (p_fake(r, 0) < 0.5) ++correct;
  }
  const double n = static_cast<double>(samples.size());
  s.mse /= n;
  s.target_energy /= n;
  s.d_accuracy = static_cast<double>(correct) / (2.0 * n);
  return s;
}

GanTrainResult train_gan(GanModel model, const std::vector<GanSample>& train, const std::vector<GanSample>& valid,
                         const GanTrainConfig& config, Rng& rng, const GanEpochCallback& on_epoch) {
  config.validate();
  if (train.size() < 2) throw std::invalid_argument("train_gan needs at least two training pairs");
  const NetworkConfig& net = model.network();

  GanTrainResult result{model, {}, false, {}};
  ad::Adam adam_g({config.g_learning_rate});
  ad::Adam adam_d({config.d_learning_rate});
  ad::Adam adam_c({config.g_learning_rate});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    GanEpochLog log;
    log.epoch = epoch;
    std::size_t steps = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        // Training-mode batch norm needs two rows.
        if (end - start < 2) continue;
        std::vector<GanSample> chunk;
        for (std::size_t i = start; i < end; ++i) chunk.push_back(train[order[i]]);
        const Tensor real = response_rows(chunk, net.latent);

        for (std::size_t k = 0; k < config.d_steps_per_g; ++k) {
          Tape tape;
          Var cond = conditions_on_tape(tape, model, nullptr, chunk);
          Binding g(tape, model.generator(), false);
          Var fake = tape.constant(generator_on_tape(g, net, cond, ad::NormMode::train).value());
          Binding d(tape, model.discriminator());
          Var loss = discriminator_loss_on_tape(discriminator_logit_on_tape(d, net, tape.constant(real), cond),
                                                discriminator_logit_on_tape(d, net, fake, cond));
          tape.backward(loss);
          std::vector<Tensor> grads = d.gradients();
          ad::clip_global_norm(grads, config.grad_clip);
          adam_d.step(model.discriminator(), grads);
          log.d_loss += loss.value().item() / static_cast<double>(config.d_steps_per_g);
        }

        Tape tape;
        std::optional<Binding> c;
        if (model.multi_turn()) c.emplace(tape, model.context_encoder().params());
        Var cond = conditions_on_tape(tape, model, c ? &*c : nullptr, chunk);
        Binding g(tape, model.generator());
        std::vector<ad::BatchNormUpdate> updates;
        Var fake = generator_on_tape(g, net, cond, ad::NormMode::train, &updates);
        Binding d(tape, model.discriminator(), false);
        GeneratorLossVars loss =
            generator_loss_on_tape(discriminator_logit_on_tape(d, net, fake, cond), tape.constant(real), fake,
                                   config.gamma, config.adv_weight, config.adversarial);
        tape.backward(loss.total);
        std::vector<Tensor> grads = g.gradients();
        ad::clip_global_norm(grads, config.grad_clip);
        adam_g.step(model.generator(), grads);
        if (c) {
          std::vector<Tensor> cgrads = c->gradients();
          ad::clip_global_norm(cgrads, config.grad_clip);
          adam_c.step(model.context_encoder().params(), cgrads);
        }
        ad::apply_batch_norm_updates(model.generator(), updates, config.bn_momentum);

        log.g_adv += loss.adversarial.value().item();
        log.g_mse += loss.mse.value().item();
        log.g_total += loss.total.value().item();
        ++steps;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    if (steps > 0) {
      const double n = static_cast<double>(steps);
      log.d_loss /= n;
      log.g_adv /= n;
      log.g_mse /= n;
      log.g_total /= n;
    }
    log.valid = held_out_stats(model, valid);
    result.model = model;
    result.log.push_back(log);
    if (on_epoch && !on_epoch(log)) break;
  }
  return result;
}

std::vector<GanSample> make_latent_pairs(const std::vector<corpus::TurnSample>& samples, const vae::VaeModel& vae,
                                         bool sample_posterior, Rng* rng) {
  if (sample_posterior && rng == nullptr) throw std::invalid_argument("posterior sampling needs an rng");
  auto code = [&](vae::PosteriorParams post) {
    return sample_posterior ? vae::reparameterize(post, *rng).z : std::move(post.mu);
  };
  std::vector<GanSample> out;
  out.reserve(samples.size());
  constexpr std::size_t kChunk = 128;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<corpus::Utterance> queries, responses;
    for (std::size_t i = start; i < end; ++i) {
      queries.push_back(samples[i].query);
      responses.push_back(samples[i].response);
    }
    auto q = vae.encode_batch(queries);
    auto r = vae.encode_batch(responses);
    for (std::size_t i = start; i < end; ++i) {
      GanSample s;
      s.z_q = code(std::move(q[i - start]));
      if (!samples[i].context.empty()) {
        for (auto& post : vae.encode_batch(samples[i].context)) s.context.push_back(code(std::move(post)));
      }
      s.z_r = code(std::move(r[i - start]));
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace ld::gan
