#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "latentdialog/autodiff/gradcheck.hpp"
#include "latentdialog/vae.hpp"

namespace ld::vae {
namespace {

using ad::Tensor;

VaeConfig tiny_config(std::size_t vocab = 12, ad::CellType cell = ad::CellType::lstm) {
  VaeConfig c;
  c.vocab_size = vocab;
  c.embed_dim = 5;
  c.hidden = 8;
  c.latent = 4;
  c.cell = cell;
  return c;
}

TEST(Anneal, SigmoidScheduleEndpoints) {
  AnnealSchedule s{0.15, 4500};
  EXPECT_NEAR(anneal_weight(2250, s), 0.075, 1e-15);
  EXPECT_NEAR(anneal_weight(0, s), 0.15 * 0.001, 1e-12);
  EXPECT_NEAR(anneal_weight(4499, s), 0.15 * 0.999, 1e-5);
  EXPECT_EQ(anneal_weight(4500, s), 0.15);
  EXPECT_EQ(anneal_weight(100000, s), 0.15);
  for (std::int64_t t = 1; t < 4500; t += 97) EXPECT_GT(anneal_weight(t, s), anneal_weight(t - 1, s));
}

TEST(Config, ValidateListsEveryProblem) {
  VaeConfig c;
  c.vocab_size = 0;
  c.word_dropout = 1.5;
  try {
    c.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("vocab_size"), std::string::npos) << msg;
    EXPECT_NE(msg.find("word_dropout"), std::string::npos) << msg;
  }
}

TEST(Kl, ClosedFormValues) {
  EXPECT_EQ(kl_to_standard_normal({{0, 0, 0}, {0, 0, 0}}), 0.0);
  EXPECT_NEAR(kl_to_standard_normal({{1.0}, {0.0}}), 0.5, 1e-12);
}

TEST(Kl, MatchesNumericalIntegration) {
  // KL(N(0.5, e^2) || N(0, 1)) by trapezoidal quadrature of q log(q/p).
  const double mu = 0.5, sigma = std::exp(1.0);
  const double lo = mu - 20 * sigma, hi = mu + 20 * sigma;
  const int n = 400000;
  const double h = (hi - lo) / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double log_q = -0.5 * std::pow((x - mu) / sigma, 2) - std::log(sigma) - 0.5 * std::log(2 * M_PI);
    const double log_p = -0.5 * x * x - 0.5 * std::log(2 * M_PI);
    const double f = std::exp(log_q) * (log_q - log_p);
    integral += (i == 0 || i == n ? 0.5 : 1.0) * f;
  }
  integral *= h;
  EXPECT_NEAR(kl_to_standard_normal({{mu}, {1.0}}), integral, 1e-6);
}

TEST(Reparameterize, SampleMomentsMatchPosterior) {
  Rng rng(11);
  const PosteriorParams post{{1.5, -2.0}, {std::log(0.5), std::log(2.0)}};
  const int n = 100000;
  std::vector<double> sum(2, 0.0), sq(2, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto z = reparameterize(post, rng).z;
    for (int d = 0; d < 2; ++d) {
      sum[d] += z[d];
      sq[d] += z[d] * z[d];
    }
  }
  const double sd[2] = {0.5, 2.0};
  for (int d = 0; d < 2; ++d) {
    const double m = sum[d] / n;
    const double var = sq[d] / n - m * m;
    EXPECT_NEAR(m, post.mu[d], 4 * sd[d] / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(var), sd[d], 0.02 * sd[d]);
  }
}

TEST(WordDropout, ReplacesAboutHalfAndSparesControlTokens) {
  Rng rng(12);
  std::vector<int> tokens(20000, 7);
  tokens.front() = corpus::kBos;
  tokens.back() = corpus::kEos;
  tokens[5] = corpus::kPad;
  const auto out = word_dropout(tokens, 0.5, rng);
  EXPECT_EQ(out.front(), corpus::kBos);
  EXPECT_EQ(out.back(), corpus::kEos);
  EXPECT_EQ(out[5], corpus::kPad);
  const auto unk = std::count(out.begin(), out.end(), corpus::kUnk);
  const double frac = static_cast<double>(unk) / 19997.0;
  EXPECT_GE(frac, 0.48);
  EXPECT_LE(frac, 0.52);
  EXPECT_EQ(word_dropout(tokens, 0.0, rng), tokens);
}

TEST(Batch, DecoderInputsAndTargetsAreShifted) {
  const auto b = make_vae_batch({{5, 6, 7}, {8}}, 0.0, nullptr);
  EXPECT_EQ(b.encoder_inputs.width, 3u);
  EXPECT_EQ(b.decoder_inputs.at(0, 0), corpus::kBos);
  EXPECT_EQ(b.decoder_inputs.at(0, 1), 5);
  EXPECT_EQ(b.targets.at(0, 3), corpus::kEos);
  EXPECT_EQ(b.targets.at(1, 0), 8);
  EXPECT_EQ(b.targets.at(1, 1), corpus::kEos);
  EXPECT_EQ(b.targets.mask_vector(2), (std::vector<double>{1.0, 0.0}));
}

TEST(Model, ReconstructionNllMatchesPerStepSoftmax) {
  Rng rng(13);
  const VaeConfig cfg = tiny_config();
  const VaeModel model(cfg, rng);
  const LatentCode z{{0.3, -0.1, 0.7, 0.2}};
  const corpus::Utterance utt{4, 9, 5};
  const auto b = make_vae_batch({utt}, 0.0, nullptr);

  std::vector<int> dec_in{corpus::kBos, 4, 9, 5};
  const Tensor logits = model.decode_teacher_forced(z, dec_in);
  ASSERT_EQ(logits.rows(), 4u);
  const std::vector<int> targets{4, 9, 5, corpus::kEos};
  double want = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double m = -1e300;
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) m = std::max(m, logits(t, v));
    double s = 0.0;
    for (std::size_t v = 0; v < cfg.vocab_size; ++v) s += std::exp(logits(t, v) - m);
    want -= logits(t, static_cast<std::size_t>(targets[t])) - m - std::log(s);
  }

  ad::Tape tape;
  ad::Binding p(tape, model.params(), false);
  const double got =
      reconstruction_nll_on_tape(p, cfg, tape.constant(Tensor::row(z.z)), b.decoder_inputs, b.targets).value().item();
  EXPECT_NEAR(got, want, 1e-10);
}

TEST(Model, LossIsMeanOfNllPlusWeightedKl) {
  Rng rng(14);
  const VaeConfig cfg = tiny_config();
  const VaeModel model(cfg, rng);
  const auto b = make_vae_batch({{4, 5}, {6, 7, 8}}, 0.0, nullptr);
  const Tensor noise(2, 4, 0.0);
  ad::Tape tape;
  ad::Binding p(tape, model.params(), false);
  const VaeLoss l = vae_loss(p, cfg, b, noise, 0.3);
  EXPECT_NEAR(l.total.value().item(), l.nll + 0.3 * l.kl, 1e-12);
  const auto posts = model.encode_batch({{4, 5}, {6, 7, 8}});
  const double kl_mean = (kl_to_standard_normal(posts[0]) + kl_to_standard_normal(posts[1])) / 2.0;
  EXPECT_NEAR(l.kl, kl_mean, 1e-12);
}

TEST(Model, EncodeIsIndependentOfBatchCompanions) {
  Rng rng(15);
  const VaeModel model(tiny_config(), rng);
  const auto alone = model.encode(std::vector<int>{4, 5, 6});
  const auto batch = model.encode_batch({{7, 8, 9, 10, 11}, {4, 5, 6}});
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_NEAR(alone.mu[d], batch[1].mu[d], 1e-13);
    EXPECT_NEAR(alone.log_sigma[d], batch[1].log_sigma[d], 1e-13);
  }
  EXPECT_THROW(model.encode(std::vector<int>{}), ShapeError);
  EXPECT_THROW(model.encode(std::vector<int>{12}), ShapeError);
}

TEST(Model, RejectsMisshapedParameters) {
  Rng rng(16);
  const VaeConfig cfg = tiny_config();
  ad::ParamSet p = init_vae_params(cfg, rng);
  EXPECT_NO_THROW(VaeModel(cfg, p));
  VaeConfig other = cfg;
  other.hidden = 9;
  EXPECT_THROW(VaeModel(other, p), ShapeError);
}

TEST(Greedy, AlwaysEosGivesEmptySentence) {
  Rng rng(17);
  const VaeConfig cfg = tiny_config();
  ad::ParamSet p = init_vae_params(cfg, rng);
  p.at("out.b")(0, corpus::kEos) = 1e3;
  const VaeModel model(cfg, p);
  EXPECT_TRUE(model.decode_greedy({{0.1, 0.2, 0.3, 0.4}}, 10).empty());
}

TEST(Greedy, NonTerminatingDecoderStopsAtMaxLen) {
  Rng rng(18);
  const VaeConfig cfg = tiny_config();
  ad::ParamSet p = init_vae_params(cfg, rng);
  p.at("out.b")(0, 6) = 1e3;
  const VaeModel model(cfg, p);
  EXPECT_EQ(model.decode_greedy({{0.1, 0.2, 0.3, 0.4}}, 5), (std::vector<int>(5, 6)));
}

TEST(Greedy, MatchesExhaustiveArgmaxPath) {
  // Vocab 5: PAD BOS EOS UNK and one word. Enumerate every continuation of
  // length <= 3 over the emittable tokens and keep the one whose every token
  // is the argmax of the teacher-forced logits at that step.
  const std::vector<int> emittable{corpus::kEos, corpus::kUnk, 4};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    VaeConfig cfg = tiny_config(5);
    ad::ParamSet params = init_vae_params(cfg, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : params.at("out.b").data()) v = n(rng);
    const VaeModel model(cfg, params);
    const LatentCode z{{n(rng), n(rng), n(rng), n(rng)}};

    auto best_token = [&](const std::vector<int>& prefix) {
      std::vector<int> in{corpus::kBos};
      in.insert(in.end(), prefix.begin(), prefix.end());
      const Tensor logits = model.decode_teacher_forced(z, in);
      const std::size_t last = logits.rows() - 1;
      int best = emittable[0];
      for (int t : emittable)
        if (logits(last, static_cast<std::size_t>(t)) > logits(last, static_cast<std::size_t>(best))) best = t;
      return best;
    };

    std::vector<std::vector<int>> consistent;
    std::vector<std::vector<int>> frontier{{}};
    for (std::size_t len = 0; len <= 3; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& seq : frontier) {
        bool ok = true;
        for (std::size_t t = 0; t < seq.size() && ok; ++t) {
          ok = best_token(std::vector<int>(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t))) == seq[t];
        }
        if (!ok) continue;
        const bool ends = len < 3 ? best_token(seq) == corpus::kEos : true;
        if (ends) consistent.push_back(seq);
        if (len < 3) {
          for (int t : emittable)
            if (t != corpus::kEos) {
              auto s = seq;
              s.push_back(t);
              next.push_back(s);
            }
        }
      }
      frontier = std::move(next);
    }
    ASSERT_EQ(consistent.size(), 1u) << "seed " << seed;
    EXPECT_EQ(model.decode_greedy(z, 3), consistent.front()) << "seed " << seed;
  }
}

TEST(Greedy, BatchDecodeEqualsSingleDecodes) {
  Rng rng(19);
  const VaeModel model(tiny_config(), rng);
  std::vector<LatentCode> zs;
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 6; ++i) zs.push_back({{n(rng), n(rng), n(rng), n(rng)}});
  const auto batch = model.decode_greedy_batch(zs, 8);
  for (std::size_t i = 0; i < zs.size(); ++i) EXPECT_EQ(batch[i], model.decode_greedy(zs[i], 8));
}

TEST(Sampled, DeterministicForSeedAndBounded) {
  Rng init(20);
  const VaeModel model(tiny_config(), init);
  const LatentCode z{{0.5, 0.5, -0.5, 0.0}};
  Rng a(3), b(3);
  const auto x = model.decode_sampled(z, 6, a);
  EXPECT_EQ(x, model.decode_sampled(z, 6, b));
  EXPECT_LE(x.size(), 6u);
  for (int t : x) {
    EXPECT_NE(t, corpus::kPad);
    EXPECT_NE(t, corpus::kBos);
  }
}

TEST(Gradients, VaeLossParamsMatchFiniteDifferences) {
  for (auto cell : {ad::CellType::lstm, ad::CellType::gru}) {
    Rng rng(21);
    const VaeConfig cfg = tiny_config(12, cell);
    ad::ParamSet p = init_vae_params(cfg, rng);
    const auto batch = make_vae_batch({{4, 5, 6}, {7, 8}}, 0.0, nullptr);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor noise(2, 4);
    for (double& v : noise.data()) v = n(rng);
    const auto r = ad::check_param_gradients(
        [&](ad::Tape&, const ad::Binding& b) { return vae_loss(b, cfg, batch, noise, 0.5).total; }, p);
    EXPECT_LT(r.max_relative_error, 1e-4) << ad::to_string(cell) << " worst " << r.worst_entry;
  }
}

TEST(Train, DeterministicForFixedSeed) {
  VaeConfig cfg = tiny_config();
  cfg.epochs = 2;
  cfg.batch_size = 4;
  std::vector<corpus::Utterance> train{{4, 5, 6}, {7, 8}, {9, 10, 11}, {4, 4}, {5, 6, 7, 8}};
  std::vector<corpus::Utterance> valid{{4, 5}, {6, 7}};
  Rng a(5), b(5);
  const auto ra = train_vae(train, valid, cfg, a);
  const auto rb = train_vae(train, valid, cfg, b);
  EXPECT_TRUE(ra.model.params() == rb.model.params());
  ASSERT_EQ(ra.log.size(), 2u);
  EXPECT_EQ(ra.log[1].valid_neg_elbo, rb.log[1].valid_neg_elbo);
  EXPECT_FALSE(ra.diverged);
  std::size_t best = 0;
  for (const auto& e : ra.log) best += e.best ? 1 : 0;
  EXPECT_GE(best, 1u);
}

TEST(Train, CallbackCanStopEarly) {
  VaeConfig cfg = tiny_config();
  cfg.epochs = 10;
  std::vector<corpus::Utterance> train{{4, 5, 6}, {7, 8}};
  Rng rng(6);
  const auto r = train_vae(train, {}, cfg, rng, [](const VaeEpochLog& e) { return e.epoch < 3; });
  EXPECT_EQ(r.log.size(), 3u);
}

}  // namespace
}  // namespace ld::vae
