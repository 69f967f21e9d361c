#include "latentdialog/verify.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <ostream>

#include "latentdialog/autodiff/layers.hpp"
#include "latentdialog/context_encoder.hpp"
#include "latentdialog/latent_gan.hpp"
#include "latentdialog/metrics.hpp"
#include "latentdialog/ngram_lm.hpp"
#include "latentdialog/vae.hpp"

namespace ld::verify {

using ad::Binding;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Entries with magnitude in [0.1, 1], random sign: keeps kinks out of reach.
Tensor away_from_zero(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

/// Σ y ⊙ W with fixed random W, so every output element matters.
Var project(Var y, std::uint64_t seed) {
  return ad::sum(ad::mul(y, y.tape().constant(random_tensor(y.rows(), y.cols(), seed))));
}

CheckResult from_gradcheck(const std::string& name, const ad::GradCheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "max rel err %.2e over %zu entries (worst: %s[%zu])", r.max_relative_error,
                r.checked, r.worst_entry.c_str(), r.worst_index);
  return {name, r.checked > 0 && r.max_relative_error < kGradTolerance, buf};
}

Check closed(std::string name, std::function<std::pair<bool, std::string>()> body) {
  return {name, [name, body] {
            auto [ok, detail] = body();
            return CheckResult{name, ok, detail};
          }};
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

vae::VaeConfig tiny_vae(ad::CellType cell) {
  vae::VaeConfig c;
  c.vocab_size = 12;
  c.embed_dim = 5;
  c.hidden = 8;
  c.latent = 4;
  c.cell = cell;
  c.word_dropout = 0.0;
  return c;
}

gan::NetworkConfig tiny_gan(gan::Preset preset, std::size_t context_dim = 0) {
  gan::NetworkConfig c;
  c.latent = 4;
  c.hidden = 8;
  c.context_dim = context_dim;
  c.preset = preset;
  return c;
}

// Tapes borrow parameter storage, so frozen networks must outlive the loss call.
std::shared_ptr<const ad::ParamSet> frozen_discriminator(const gan::NetworkConfig& net) {
  Rng rng(65);
  return std::make_shared<const ad::ParamSet>(gan::init_discriminator_params(net, rng));
}

std::shared_ptr<const ad::ParamSet> frozen_generator(const gan::NetworkConfig& net) {
  Rng rng(69);
  return std::make_shared<const ad::ParamSet>(gan::init_generator_params(net, rng));
}

}  // namespace

Check input_gradient_check(std::string name, ad::InputLoss loss, std::vector<Tensor> inputs) {
  return {name, [name, loss, inputs] { return from_gradcheck(name, ad::check_input_gradients(loss, inputs)); }};
}

Check param_gradient_check(std::string name, std::function<ad::ParamSet()> make_params, ad::ParamLoss loss) {
  return {name, [name, make_params, loss] {
            ad::ParamSet params = make_params();
            return from_gradcheck(name, ad::check_param_gradients(loss, params));
          }};
}

std::vector<Check> gradient_checks() {
  std::vector<Check> c;
  auto in = [](auto... t) { return std::vector<Tensor>{t...}; };

  c.push_back(input_gradient_check(
      "op matmul", [](Tape&, const std::vector<Var>& x) { return project(ad::matmul(x[0], x[1]), 1); },
      in(random_tensor(3, 4, 10), random_tensor(4, 2, 11))));
  c.push_back(input_gradient_check(
      "op add", [](Tape&, const std::vector<Var>& x) { return project(ad::add(x[0], x[1]), 2); },
      in(random_tensor(3, 4, 12), random_tensor(3, 4, 13))));
  c.push_back(input_gradient_check(
      "op add (row broadcast)", [](Tape&, const std::vector<Var>& x) { return project(ad::add(x[0], x[1]), 3); },
      in(random_tensor(3, 4, 14), random_tensor(1, 4, 15))));
  c.push_back(input_gradient_check(
      "op sub", [](Tape&, const std::vector<Var>& x) { return project(ad::sub(x[0], x[1]), 4); },
      in(random_tensor(2, 3, 16), random_tensor(2, 3, 17))));
  c.push_back(input_gradient_check(
      "op mul", [](Tape&, const std::vector<Var>& x) { return project(ad::mul(x[0], x[1]), 5); },
      in(random_tensor(2, 3, 18), random_tensor(2, 3, 19))));
  c.push_back(input_gradient_check(
      "op affine", [](Tape&, const std::vector<Var>& x) { return project(ad::affine(x[0], -1.7, 0.3), 6); },
      in(random_tensor(2, 3, 20))));
  c.push_back(input_gradient_check(
      "op concat_cols",
      [](Tape&, const std::vector<Var>& x) { return project(ad::concat_cols({x[0], x[1], x[0]}), 7); },
      in(random_tensor(2, 3, 21), random_tensor(2, 2, 22))));
  c.push_back(input_gradient_check(
      "op slice_cols", [](Tape&, const std::vector<Var>& x) { return project(ad::slice_cols(x[0], 1, 4), 8); },
      in(random_tensor(2, 5, 23))));
  c.push_back(input_gradient_check(
      "op tanh", [](Tape&, const std::vector<Var>& x) { return project(ad::tanh(x[0]), 9); },
      in(random_tensor(3, 3, 24, -2, 2))));
  c.push_back(input_gradient_check(
      "op sigmoid", [](Tape&, const std::vector<Var>& x) { return project(ad::sigmoid(x[0]), 10); },
      in(random_tensor(3, 3, 25, -3, 3))));
  c.push_back(input_gradient_check(
      "op relu", [](Tape&, const std::vector<Var>& x) { return project(ad::relu(x[0]), 11); },
      in(away_from_zero(3, 4, 26))));
  c.push_back(input_gradient_check(
      "op leaky_relu", [](Tape&, const std::vector<Var>& x) { return project(ad::leaky_relu(x[0], 0.2), 12); },
      in(away_from_zero(3, 4, 27))));
  c.push_back(input_gradient_check(
      "op exp", [](Tape&, const std::vector<Var>& x) { return project(ad::exp(x[0]), 13); },
      in(random_tensor(2, 3, 28))));
  c.push_back(input_gradient_check(
      "op log", [](Tape&, const std::vector<Var>& x) { return project(ad::log(x[0]), 14); },
      in(random_tensor(2, 3, 29, 0.2, 2.0))));
  c.push_back(input_gradient_check(
      "op softplus", [](Tape&, const std::vector<Var>& x) { return project(ad::softplus(x[0]), 15); },
      in(random_tensor(2, 4, 30, -4, 4))));
  c.push_back(input_gradient_check(
      "op sum", [](Tape&, const std::vector<Var>& x) { return ad::sum(ad::mul(x[0], x[0])); },
      in(random_tensor(2, 3, 31))));
  c.push_back(input_gradient_check(
      "op mean", [](Tape&, const std::vector<Var>& x) { return ad::mean(ad::mul(x[0], x[0])); },
      in(random_tensor(2, 3, 32))));
  c.push_back(input_gradient_check(
      "op squared_error", [](Tape&, const std::vector<Var>& x) { return ad::squared_error(x[0], x[1]); },
      in(random_tensor(3, 2, 33), random_tensor(3, 2, 34))));
  c.push_back(input_gradient_check(
      "op softmax_cross_entropy",
      [](Tape&, const std::vector<Var>& x) {
        const std::vector<int> targets{0, 3, 2, 1};
        const std::vector<double> weights{1.0, 0.5, 0.0, 2.0};
        return ad::softmax_cross_entropy(x[0], targets, weights);
      },
      in(random_tensor(4, 5, 35, -2, 2))));
  c.push_back(input_gradient_check(
      "op embedding",
      [](Tape&, const std::vector<Var>& x) {
        const std::vector<int> ids{2, 0, 2, 4};
        return project(ad::embedding(x[0], ids), 16);
      },
      in(random_tensor(5, 3, 36))));
  c.push_back(input_gradient_check(
      "op blend",
      [](Tape& t, const std::vector<Var>& x) {
        (void)t;
        return project(ad::blend(x[0], x[1], Tensor(3, 1, std::vector<double>{1.0, 0.0, 1.0})), 17);
      },
      in(random_tensor(3, 2, 37), random_tensor(3, 2, 38))));
  c.push_back(input_gradient_check(
      "op batch_norm_train",
      [](Tape&, const std::vector<Var>& x) { return project(ad::batch_norm_train(x[0], x[1], x[2], 1e-5), 18); },
      in(random_tensor(5, 3, 39, -2, 2), random_tensor(1, 3, 40, 0.5, 1.5), random_tensor(1, 3, 41))));
  c.push_back(input_gradient_check(
      "op batch_norm_eval",
      [](Tape&, const std::vector<Var>& x) {
        return project(ad::batch_norm_eval(x[0], x[1], x[2], random_tensor(1, 3, 42), random_tensor(1, 3, 43, 0.5, 2),
                                           1e-5),
                       19);
      },
      in(random_tensor(4, 3, 44), random_tensor(1, 3, 45), random_tensor(1, 3, 46))));

  for (ad::CellType cell : {ad::CellType::lstm, ad::CellType::gru}) {
    const std::string cname = ad::to_string(cell);
    c.push_back(param_gradient_check(
        "composite " + cname + " step",
        [cell] {
          Rng rng(47);
          ad::ParamSet p;
          ad::add_cell(p, "cell", cell, 3, 4, rng);
          return p;
        },
        [cell](Tape& tape, const Binding& b) {
          ad::RnnState s{tape.constant(random_tensor(2, 4, 48)), tape.constant(random_tensor(2, 4, 49))};
          Var x = tape.constant(random_tensor(2, 3, 50));
          s = ad::cell_step(b, "cell", cell, x, s);
          s = ad::cell_step(b, "cell", cell, x, s);
          Var out = project(s.h, 51);
          return cell == ad::CellType::lstm ? ad::add(out, project(s.c, 52)) : out;
        }));
    c.push_back(param_gradient_check(
        "composite bidirectional " + cname + " encoder",
        [cell] {
          Rng rng(53);
          ad::ParamSet p;
          ad::add_cell(p, "f", cell, 3, 4, rng);
          ad::add_cell(p, "b", cell, 3, 4, rng);
          return p;
        },
        [cell](Tape& tape, const Binding& b) {
          std::vector<Var> steps;
          std::vector<Tensor> masks;
          const std::vector<std::vector<double>> m{{1, 1, 1}, {1, 1, 0}, {1, 0, 0}};
          for (std::size_t t = 0; t < 3; ++t) {
            steps.push_back(tape.constant(random_tensor(3, 3, 54 + t)));
            masks.emplace_back(3, 1, m[t]);
          }
          return project(ad::bidirectional_encode(b, "f", "b", cell, 4, steps, masks), 57);
        }));
  }

  for (ad::CellType cell : {ad::CellType::lstm, ad::CellType::gru}) {
    const vae::VaeConfig cfg = tiny_vae(cell);
    c.push_back(param_gradient_check(
        "composite vae loss (" + ad::to_string(cell) + ")",
        [cfg] {
          Rng rng(58);
          return vae::init_vae_params(cfg, rng);
        },
        [cfg](Tape&, const Binding& b) {
          const std::vector<corpus::Utterance> utts{{4, 5, 6, 7}, {8, 9}, {10, 11, 4}};
          const vae::VaeBatch batch = vae::make_vae_batch(utts, 0.0, nullptr);
          return vae::vae_loss(b, cfg, batch, random_tensor(3, cfg.latent, 59), 0.3).total;
        }));
  }

  for (gan::Preset preset : {gan::Preset::basic, gan::Preset::appendix}) {
    const gan::NetworkConfig net = tiny_gan(preset);
    const std::string pname = gan::to_string(preset);
    c.push_back(param_gradient_check(
        "composite discriminator loss (" + pname + ")",
        [net] {
          Rng rng(60);
          return gan::init_discriminator_params(net, rng);
        },
        [net](Tape& tape, const Binding& d) {
          Var cond = tape.constant(random_tensor(5, 4, 61));
          Var real = tape.constant(random_tensor(5, 4, 62));
          Var fake = tape.constant(random_tensor(5, 4, 63));
          return gan::discriminator_loss_on_tape(gan::discriminator_logit_on_tape(d, net, real, cond),
                                                 gan::discriminator_logit_on_tape(d, net, fake, cond));
        }));
    for (gan::AdversarialLoss kind : {gan::AdversarialLoss::non_saturating, gan::AdversarialLoss::minimax}) {
      c.push_back(param_gradient_check(
          "composite generator loss (" + pname + ", " + gan::to_string(kind) + ")",
          [net] {
            Rng rng(64);
            return gan::init_generator_params(net, rng);
          },
          [net, kind, disc = frozen_discriminator(net)](Tape& tape, const Binding& g) {
            Binding d(tape, *disc, false);
            Var cond = tape.constant(random_tensor(5, 4, 66));
            Var real = tape.constant(random_tensor(5, 4, 67));
            Var fake = gan::generator_on_tape(g, net, cond, ad::NormMode::train);
            return gan::generator_loss_on_tape(gan::discriminator_logit_on_tape(d, net, fake, cond), real, fake, 0.7,
                                               1.0, kind)
                .total;
          }));
    }
  }

  c.push_back(param_gradient_check(
      "composite context encoder through generator loss",
      [] {
        ctx::ContextConfig cc;
        cc.latent = 4;
        cc.hidden = 3;
        Rng rng(68);
        return ctx::init_context_params(cc, rng);
      },
      [net = tiny_gan(gan::Preset::appendix, 6), gen = frozen_generator(tiny_gan(gan::Preset::appendix, 6)),
       disc = frozen_discriminator(tiny_gan(gan::Preset::appendix, 6))](Tape& tape, const Binding& cb) {
        ctx::ContextConfig cc;
        cc.latent = 4;
        cc.hidden = 3;
        Binding g(tape, *gen, false);
        Binding d(tape, *disc, false);
        const Tensor zq = random_tensor(3, 4, 70);
        std::vector<std::vector<std::vector<double>>> contexts(3);
        contexts[0] = {random_tensor(1, 4, 71).row_vector(0), random_tensor(1, 4, 72).row_vector(0)};
        contexts[1] = {random_tensor(1, 4, 73).row_vector(0)};
        Var cond = ad::concat_cols({tape.constant(zq), ctx::encode_context_on_tape(cb, cc, contexts)});
        Var fake = gan::generator_on_tape(g, net, cond, ad::NormMode::train);
        Var real = tape.constant(random_tensor(3, 4, 74));
        return gan::generator_loss_on_tape(gan::discriminator_logit_on_tape(d, net, fake, cond), real, fake, 1.0, 1.0,
                                           gan::AdversarialLoss::non_saturating)
            .total;
      }));
  return c;
}

std::vector<Check> closed_form_checks() {
  std::vector<Check> c;
  c.push_back(closed("kl N(0,I) || N(0,I) = 0", [] {
    const double kl = vae::kl_to_standard_normal({std::vector<double>(128, 0.0), std::vector<double>(128, 0.0)});
    return std::pair{kl == 0.0, "kl = " + num(kl)};
  }));
  c.push_back(closed("kl mu=1 sigma=1 = 0.5", [] {
    const double kl = vae::kl_to_standard_normal({{1.0}, {0.0}});
    return std::pair{std::abs(kl - 0.5) < 1e-12, "kl = " + num(kl)};
  }));
  c.push_back(closed("kl mu=0 sigma=e = (e^2-3)/2", [] {
    const double kl = vae::kl_to_standard_normal({{0.0}, {1.0}});
    const double want = 0.5 * (std::exp(2.0) - 3.0);
    return std::pair{std::abs(kl - want) < 1e-12, "kl = " + num(kl)};
  }));
  c.push_back(closed("value function with D = 1/2 is -2 ln 2", [] {
    gan::NetworkConfig net = tiny_gan(gan::Preset::basic);
    Rng rng(75);
    ad::ParamSet disc = gan::init_discriminator_params(net, rng);
    disc.at("disc.l2.W").fill(0.0);
    disc.at("disc.l2.b").fill(0.0);
    Tape tape;
    Binding d(tape, disc, false);
    Var cond = tape.constant(random_tensor(6, 4, 76));
    const Tensor lr = gan::discriminator_logit_on_tape(d, net, tape.constant(random_tensor(6, 4, 77)), cond).value();
    const Tensor lf = gan::discriminator_logit_on_tape(d, net, tape.constant(random_tensor(6, 4, 78)), cond).value();
    const double v = gan::value_function(lr.data(), lf.data());
    return std::pair{std::abs(v + 2.0 * std::numbers::ln2) < 1e-12, "V = " + num(v)};
  }));
  c.push_back(closed("anneal weight midpoint and clamp", [] {
    const vae::AnnealSchedule s;
    const double mid = vae::anneal_weight(2250, s);
    const double start = vae::anneal_weight(0, s);
    const double end = vae::anneal_weight(4500, s);
    const bool ok = std::abs(mid - 0.075) < 1e-12 && start <= 0.001 * 0.15 && end == 0.15;
    return std::pair{ok, "λ(0) = " + num(start) + ", λ(2250) = " + num(mid) + ", λ(4500) = " + num(end)};
  }));
  c.push_back(closed("bleu self-match = 1", [] {
    const metrics::Sentence s{"i", "do", "not", "know", "that"};
    const double b = metrics::bleu_smoothed(s, s);
    return std::pair{b == 1.0, "bleu = " + num(b)};
  }));
  c.push_back(closed("harmonic mean {0.2, 0.4}", [] {
    const std::vector<double> scores{0.2, 0.4};
    const auto agg = metrics::bleu_aggregate(scores);
    const bool ok = std::abs(agg.avg - 0.3) < 1e-12 && agg.max == 0.4 && std::abs(agg.hm - 0.24 / 0.7) < 1e-9;
    return std::pair{ok, "hm = " + num(agg.hm)};
  }));
  c.push_back(closed("distinct-n and ttr", [] {
    const metrics::Sentence no{"no", "no", "no"};
    const double intra = metrics::intra_distinct(no, 1);
    const double inter = metrics::inter_distinct<std::string>({{"a", "b"}, {"a", "b"}}, 1);
    const double ttr = metrics::type_token_ratio({{"a", "b", "a", "b"}});
    const bool ok = std::abs(intra - 1.0 / 3.0) < 1e-12 && inter == 0.5 && ttr == 0.5;
    return std::pair{ok, "intra = " + num(intra) + ", inter = " + num(inter) + ", ttr = " + num(ttr)};
  }));
  c.push_back(closed("kneser-ney distributions sum to 1", [] {
    const std::vector<metrics::Sentence> train{{"a", "b", "c"}, {"a", "c", "d", "a"}, {"b", "b", "e"}};
    const metrics::KneserNeyTrigram lm(train);
    const auto vocab = lm.vocabulary();
    std::vector<std::string> histories{std::string(metrics::kLmBos)};
    for (const auto& w : vocab) {
      if (w != metrics::kLmEos) histories.push_back(w);
    }
    double worst = 0.0;
    for (const auto& u : histories) {
      for (const auto& v : histories) {
        double total = 0.0;
        for (const auto& w : vocab) total += lm.probability(u, v, w);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    return std::pair{worst < 1e-9, "max |Σp − 1| = " + num(worst)};
  }));
  return c;
}

std::vector<Check> default_checks() {
  std::vector<Check> all = gradient_checks();
  for (auto& c : closed_form_checks()) all.push_back(std::move(c));
  return all;
}

std::vector<CheckResult> run_checks(const std::vector<Check>& checks) {
  std::vector<CheckResult> out;
  out.reserve(checks.size());
  for (const auto& c : checks) {
    try {
      CheckResult r = c.run();
      r.name = c.name;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.push_back({c.name, false, std::string("exception: ") + e.what()});
    }
  }
  return out;
}

void print_table(std::ostream& out, const std::vector<CheckResult>& results) {
  std::size_t width = 5;
  for (const auto& r : results) width = std::max(width, r.name.size());
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << std::string(width - r.name.size() + 2, ' ') << r.detail
        << '\n';
    if (!r.passed) ++failed;
  }
  out << results.size() - failed << "/" << results.size() << " checks passed";
  if (failed > 0) {
    out << "; failing:";
    for (const auto& r : results) {
      if (!r.passed) out << ' ' << r.name << ';';
    }
  }
  out << '\n';
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return !results.empty();
}

}  // namespace ld::verify
