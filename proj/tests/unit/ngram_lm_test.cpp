#include <gtest/gtest.h>

#include <cmath>

#include "latentdialog/ngram_lm.hpp"
#include "support/metric_oracles.hpp"

namespace ld::metrics {
namespace {

using ld::testing::KnOracle;

const std::vector<Sentence> kThree{{"a", "b"}, {"a", "c"}, {"b", "c"}};

TEST(KneserNey, UnigramLevelByHand) {
  const KneserNeyTrigram lm(kThree);
  // Unseen history pairs and unseen middle words fall through to P1.
  EXPECT_NEAR(lm.probability("<unk>", "<unk>", "a"), KnOracle::p1_a(), 1e-12);
  EXPECT_NEAR(lm.probability("<unk>", "<unk>", "c"), KnOracle::p1_bc(), 1e-12);
  EXPECT_NEAR(lm.probability("<unk>", "<unk>", "<unk>"), KnOracle::p1_unk(), 1e-12);
}

TEST(KneserNey, PerplexityMatchesHandWorkedOracle) {
  const KneserNeyTrigram lm(kThree);
  EXPECT_NEAR(perplexity(lm, {{"a", "b"}}), KnOracle::ppl_a_b(), 1e-9);
  EXPECT_NEAR(perplexity(lm, {{"c", "zzz"}}), KnOracle::ppl_c_oov(), 1e-9);
}

TEST(KneserNey, DistributionsSumToOneForEveryContext) {
  std::vector<Sentence> train;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) train.push_back(ld::testing::random_words(rng, 1, 6, 7));
  const KneserNeyTrigram lm(train);
  const auto vocab = lm.vocabulary();
  ASSERT_EQ(vocab.size(), 9u);  // </s> <unk> and seven words
  std::vector<std::string> histories = vocab;
  histories.push_back("<s>");
  for (const auto& u : histories)
    for (const auto& v : histories) {
      double total = 0.0;
      for (const auto& w : vocab) total += lm.probability(u, v, w);
      EXPECT_NEAR(total, 1.0, 1e-9) << u << " " << v;
    }
}

TEST(KneserNey, RejectsBadInput) {
  EXPECT_THROW(KneserNeyTrigram({}), std::invalid_argument);
  EXPECT_THROW(KneserNeyTrigram(kThree, 1.0), std::invalid_argument);
  const KneserNeyTrigram lm(kThree);
  EXPECT_THROW(lm.probability("a", "b", "<s>"), std::invalid_argument);
  EXPECT_EQ(lm.normalize("nope"), "<unk>");
  EXPECT_THROW(perplexity(lm, {}), std::invalid_argument);
}

// A fixed-distribution model for checking the perplexity formula.
class TableLm final : public LanguageModel {
 public:
  explicit TableLm(std::vector<std::string> vocab, std::string certain = {})
      : vocab_(std::move(vocab)), certain_(std::move(certain)) {}
  double probability(std::string_view, std::string_view, std::string_view w) const override {
    if (certain_.empty()) return 1.0 / static_cast<double>(vocab_.size());
    return w == certain_ ? 1.0 : 1e-300;
  }
  std::vector<std::string> vocabulary() const override { return vocab_; }
  std::string normalize(std::string_view t) const override { return std::string(t); }

 private:
  std::vector<std::string> vocab_;
  std::string certain_;
};

TEST(Perplexity, UniformModelGivesVocabularySize) {
  const TableLm lm({"</s>", "x", "y", "z"});
  EXPECT_NEAR(perplexity(lm, {{"x", "y"}, {"z"}}), 4.0, 1e-12);
}

TEST(Perplexity, CertainModelGivesOne) {
  const TableLm lm({"</s>", "x"}, "</s>");
  EXPECT_DOUBLE_EQ(perplexity(lm, {{}, {}}), 1.0);
}

}  // namespace
}  // namespace ld::metrics
