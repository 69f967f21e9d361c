#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "latentdialog/checkpoint.hpp"
#include "latentdialog/latent_gan.hpp"
#include "support/toy_data.hpp"

namespace ld::gan {
namespace {

using ad::Tensor;
using ad::Var;

std::string param_hash(const ad::ParamSet& p) {
  Checkpoint c;
  c.groups.emplace_back("p", p);
  return sha256_hex(encode_checkpoint(c));
}

NetworkConfig small_net(Preset preset = Preset::basic) {
  NetworkConfig n;
  n.latent = 2;
  n.hidden = 3;
  n.preset = preset;
  return n;
}

std::vector<GanSample> linear_task(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<GanSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    GanSample s;
    s.z_q = {g(rng), g(rng)};
    s.z_r = {0.8 * s.z_q[0] - 0.3 * s.z_q[1] + 0.5, 0.2 * s.z_q[0] + 0.9 * s.z_q[1] - 0.1};
    out.push_back(s);
  }
  return out;
}

TEST(Names, ParseAndPrintRoundTrip) {
  for (auto p : {Preset::basic, Preset::appendix}) EXPECT_EQ(parse_preset(to_string(p)), p);
  for (auto h : {DiscriminatorHead::mlp, DiscriminatorHead::logistic}) EXPECT_EQ(parse_head(to_string(h)), h);
  for (auto k : {AdversarialLoss::non_saturating, AdversarialLoss::minimax})
    EXPECT_EQ(parse_adversarial_loss(to_string(k)), k);
  EXPECT_THROW(parse_preset("wgan"), std::invalid_argument);
}

TEST(Networks, DefaultDimensions) {
  NetworkConfig n;
  EXPECT_EQ(n.condition_dim(), 128u);
  EXPECT_EQ(n.discriminator_input_dim(), 256u);
  Rng rng(1);
  const auto g = init_generator_params(n, rng);
  EXPECT_EQ(g.at("gen.l1.W").rows(), 128u);
  EXPECT_EQ(g.at("gen.l1.W").cols(), 256u);
  EXPECT_EQ(g.at("gen.l2.W").cols(), 128u);
  EXPECT_TRUE(g.contains("gen.bn.gamma"));
  n.context_dim = 1024;
  EXPECT_EQ(n.condition_dim(), 1152u);
  n.preset = Preset::basic;
  EXPECT_FALSE(init_generator_params(n, rng).contains("gen.bn.gamma"));
}

TEST(Networks, GeneratorMatchesHandEvaluatedMlp) {
  const NetworkConfig n = small_net();
  ad::ParamSet g;
  g.add("gen.l1.W", Tensor::from_rows({{1.0, -1.0, 0.5}, {2.0, 0.5, -1.0}}));
  g.add("gen.l1.b", Tensor::from_rows({{0.1, 0.0, -0.2}}));
  g.add("gen.l2.W", Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}));
  g.add("gen.l2.b", Tensor::from_rows({{0.0, 0.3}}));
  ad::Tape tape;
  ad::Binding b(tape, g, false);
  const Tensor out = generator_on_tape(b, n, tape.constant(Tensor::from_rows({{1.0, 0.5}})), ad::NormMode::eval).value();
  // hidden pre-activation: [1+1+0.1, -1+0.25, 0.5-0.5-0.2] = [2.1, -0.75, -0.2] -> relu [2.1, 0, 0]
  EXPECT_NEAR(out(0, 0), 2.1, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.3, 1e-15);
}

TEST(Networks, AppendixPresetUsesLeakySlope) {
  NetworkConfig n = small_net(Preset::appendix);
  n.hidden = 1;
  n.latent = 1;
  ad::ParamSet d;
  d.add("disc.l1.W", Tensor::from_rows({{1.0}, {1.0}}));
  d.add("disc.l1.b", Tensor::scalar(0.0));
  d.add("disc.l2.W", Tensor::scalar(1.0));
  d.add("disc.l2.b", Tensor::scalar(0.0));
  ad::Tape tape;
  ad::Binding b(tape, d, false);
  const double l = discriminator_logit_on_tape(b, n, tape.constant(Tensor::scalar(-3.0)),
                                               tape.constant(Tensor::scalar(1.0)))
                       .value()
                       .item();
  EXPECT_NEAR(l, -0.02, 1e-15);
}

TEST(Networks, ZeroFinalLayerGivesHalfProbability) {
  Rng rng(2);
  GanModel m(small_net(), std::nullopt, rng);
  for (double& v : m.discriminator().at("disc.l2.W").data()) v = 0.0;
  const Tensor p = m.discriminate(ld::testing::random_tensor(4, 2, 3), ld::testing::random_tensor(4, 2, 4));
  for (double v : p.data()) EXPECT_EQ(v, 0.5);
}

TEST(Losses, PinnedValues) {
  ad::Tape tape;
  const Tensor zeros(3, 1, 0.0);
  EXPECT_NEAR(discriminator_loss_on_tape(tape.constant(zeros), tape.constant(zeros)).value().item(),
              -2.0 * std::log(0.5), 1e-15);
  EXPECT_LT(discriminator_loss_on_tape(tape.constant(Tensor(3, 1, 40.0)), tape.constant(Tensor(3, 1, -40.0)))
                .value()
                .item(),
            1e-16);

  const Var real = tape.constant(Tensor::from_rows({{1.0, 2.0}}));
  const Var fake = tape.constant(Tensor::from_rows({{0.0, 0.0}}));
  const auto l = generator_loss_on_tape(tape.constant(Tensor::scalar(0.0)), real, fake, 0.0, 1.0,
                                        AdversarialLoss::non_saturating);
  EXPECT_NEAR(l.total.value().item(), -std::log(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(l.mse.value().item(), 5.0);
  EXPECT_EQ(generator_loss_on_tape(tape.constant(Tensor::scalar(0.0)), real, real, 1.0, 1.0,
                                   AdversarialLoss::non_saturating)
                .mse.value()
                .item(),
            0.0);
  EXPECT_THROW(generator_loss_on_tape(tape.constant(Tensor::scalar(0.0)), real, fake, -1.0, 1.0,
                                      AdversarialLoss::minimax),
               std::invalid_argument);
}

TEST(Losses, TotalIsExactSumOfComponents) {
  for (auto kind : {AdversarialLoss::non_saturating, AdversarialLoss::minimax}) {
    ad::Tape tape;
    const auto l = generator_loss_on_tape(tape.constant(ld::testing::random_tensor(5, 1, 5, -3, 3)),
                                          tape.constant(ld::testing::random_tensor(5, 4, 6)),
                                          tape.constant(ld::testing::random_tensor(5, 4, 7)), 2.5, 0.7, kind);
    EXPECT_DOUBLE_EQ(l.total.value().item(), 0.7 * l.adversarial.value().item() + 2.5 * l.mse.value().item());
  }
}

TEST(Losses, MseInvariantToBatchOrder) {
  const Tensor a = ld::testing::random_tensor(6, 3, 8), b = ld::testing::random_tensor(6, 3, 9);
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor pa(6, 3), pb(6, 3);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      pa(r, c) = a(perm[r], c);
      pb(r, c) = b(perm[r], c);
    }
  ad::Tape tape;
  const Var lf = tape.constant(Tensor(6, 1, 0.0));
  const double m1 = generator_loss_on_tape(lf, tape.constant(a), tape.constant(b), 1, 1, {}).mse.value().item();
  const double m2 = generator_loss_on_tape(lf, tape.constant(pa), tape.constant(pb), 1, 1, {}).mse.value().item();
  EXPECT_NEAR(m1, m2, 1e-14);
}

TEST(Losses, ValueFunctionAtHalfIsMinusTwoLnTwo) {
  const std::vector<double> z(7, 0.0);
  EXPECT_NEAR(value_function(z, z), -2.0 * std::log(2.0), 1e-12);
  EXPECT_THROW(value_function(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
}

TEST(Gradients, DiscriminatorLossDoesNotReachGenerator) {
  Rng rng(10);
  GanModel m(small_net(Preset::appendix), std::nullopt, rng);
  const auto samples = linear_task(4, 11);
  ad::Tape tape;
  ad::Binding g(tape, m.generator(), true);
  ad::Binding d(tape, m.discriminator(), true);
  const Var cond = tape.constant(m.conditions(samples));
  const Var fake = tape.constant(generator_on_tape(g, m.network(), cond, ad::NormMode::train).value());
  Tensor real(4, 2);
  for (std::size_t r = 0; r < 4; ++r) std::copy(samples[r].z_r.begin(), samples[r].z_r.end(), real.row_span(r).begin());
  const Var loss = discriminator_loss_on_tape(discriminator_logit_on_tape(d, m.network(), tape.constant(real), cond),
                                              discriminator_logit_on_tape(d, m.network(), fake, cond));
  tape.backward(loss);
  for (const Tensor& t : g.gradients())
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
  double dnorm = 0.0;
  for (const Tensor& t : d.gradients())
    for (double v : t.data()) dnorm += v * v;
  EXPECT_GT(dnorm, 0.0);
}

TEST(Training, UpdatesStayWithinTheirOwnNetwork) {
  // With one learning rate at 1e-300 that network can only drift by ~1e-300
  // per step; anything larger would have to come from the other optimizer.
  const auto train = linear_task(32, 12);
  GanTrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  auto max_shift = [](const ad::ParamSet& a, const ad::ParamSet& b) {
    double m = 0.0;
    for (const auto& e : a.entries())
      for (std::size_t i = 0; i < e.value.size(); ++i) m = std::max(m, std::abs(e.value[i] - b.at(e.name)[i]));
    return m;
  };
  for (int frozen = 0; frozen < 2; ++frozen) {
    Rng init(13);
    GanModel m(small_net(), std::nullopt, init);
    GanTrainConfig c = cfg;
    (frozen == 0 ? c.g_learning_rate : c.d_learning_rate) = 1e-300;
    Rng rng(14);
    const auto r = train_gan(m, train, {}, c, rng);
    const double g_shift = max_shift(m.generator(), r.model.generator());
    const double d_shift = max_shift(m.discriminator(), r.model.discriminator());
    if (frozen == 0) {
      EXPECT_LT(g_shift, 1e-290);
      EXPECT_NE(param_hash(r.model.discriminator()), param_hash(m.discriminator()));
    } else {
      EXPECT_NE(param_hash(r.model.generator()), param_hash(m.generator()));
      EXPECT_LT(d_shift, 1e-290);
    }
  }
}

TEST(Training, DeterministicAndLogged) {
  const auto train = linear_task(40, 15), valid = linear_task(10, 16);
  GanTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  auto run = [&] {
    Rng init(17), rng(18);
    return train_gan(GanModel(small_net(Preset::appendix), std::nullopt, init), train, valid, cfg, rng);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.log.size(), 3u);
  EXPECT_EQ(param_hash(a.model.generator()), param_hash(b.model.generator()));
  EXPECT_EQ(a.log[2].valid.mse, b.log[2].valid.mse);
  EXPECT_GT(a.log[0].valid.target_energy, 0.0);
  EXPECT_GE(a.log[2].valid.d_accuracy, 0.0);
  EXPECT_LE(a.log[2].valid.d_accuracy, 1.0);
  EXPECT_FALSE(a.diverged);
}

TEST(Training, RejectsBadConfiguration) {
  GanTrainConfig cfg;
  cfg.batch_size = 1;
  cfg.gamma = -1;
  try {
    cfg.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("gamma"), std::string::npos);
  }
  Rng rng(1);
  EXPECT_THROW(train_gan(GanModel(small_net(), std::nullopt, rng), linear_task(1, 1), {}, GanTrainConfig{}, rng),
               std::invalid_argument);
}

TEST(Training, PureRegressionLearnsLinearMap) {
  const auto train = linear_task(400, 19), valid = linear_task(100, 20);
  GanTrainConfig cfg;
  cfg.adv_weight = 0.0;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.g_learning_rate = 3e-3;
  NetworkConfig n = small_net();
  n.hidden = 16;
  Rng init(21), rng(22);
  const auto r = train_gan(GanModel(n, std::nullopt, init), train, valid, cfg, rng);
  EXPECT_LT(r.log.back().valid.mse, 0.05 * r.log.back().valid.target_energy);
}

TEST(Model, RejectsMismatchedParameterSets) {
  Rng rng(23);
  const NetworkConfig n = small_net();
  auto g = init_generator_params(n, rng);
  auto d = init_discriminator_params(n, rng);
  EXPECT_NO_THROW(GanModel(n, std::nullopt, g, d, std::nullopt));
  NetworkConfig wider = n;
  wider.hidden = 5;
  EXPECT_THROW(GanModel(wider, std::nullopt, g, d, std::nullopt), ShapeError);
  NetworkConfig ctx = n;
  ctx.context_dim = 4;
  EXPECT_THROW(GanModel(ctx, std::nullopt, rng), ShapeError);
}

}  // namespace
}  // namespace ld::gan
