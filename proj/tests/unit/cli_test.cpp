#include <gtest/gtest.h>

#include <sstream>

#include "latentdialog/checkpoint.hpp"
#include "latentdialog/cli.hpp"
#include "latentdialog/config.hpp"
#include "latentdialog/corpus.hpp"
#include "latentdialog/inference.hpp"
#include "latentdialog/ngram_lm.hpp"
#include "support/toy_experiment.hpp"

namespace ld::cli {
namespace {

namespace fs = std::filesystem;
using ld::testing::run;
using ld::testing::slurp;
using ld::testing::spit;

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// One trained single-turn pipeline shared by the tests below.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = ld::testing::make_toy_experiment("cli_pipeline");
    const std::string cfg = (dir_ / "config.json").string(), out = (dir_ / "run").string();
    for (const char* cmd : {"prepare", "train-vae", "train-gan", "generate", "evaluate"}) {
      const auto r = run({cmd, "--config", cfg, "--out", out});
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
  }
  static fs::path config() { return dir_ / "config.json"; }
  // Distinct test pairs; the toy grammar can repeat a pair.
  static std::size_t test_queries() {
    std::istringstream in(ld::testing::toy_dialog_corpus(3, 3));
    const auto raw = corpus::parse_dialog_lines(in);
    const auto vocab = corpus::Vocabulary::load(out() / "vocab.txt");
    return corpus::deduplicate(corpus::make_single_turn(corpus::encode_corpus(raw, vocab, 12))).size();
  }
  static fs::path out() { return dir_ / "run"; }
  static inline fs::path dir_;
};

TEST_F(Pipeline, WritesEveryArtifact) {
  for (const char* f : {"vocab.txt", "prepare.txt", "prepare.config.json", "vae.ckpt", "train-vae.log.jsonl",
                        "gan.ckpt", "train-gan.log.jsonl", "responses.tsv", "generate.config.json", "metrics.txt",
                        "metrics.json", "evaluate.config.json"}) {
    EXPECT_TRUE(fs::exists(out() / f)) << f;
  }
  const std::string log = slurp(out() / "train-vae.log.jsonl");
  // One record per epoch, then the checkpoint summary.
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  EXPECT_TRUE(contains(log, "\"stage\":\"vae\""));
  EXPECT_TRUE(contains(log, "\"best_epoch\":"));
}

TEST_F(Pipeline, ResponseFileHasRefAndHypRows) {
  std::ifstream in(out() / "responses.tsv");
  const auto rows = inference::parse_response_file(in);
  // 1 ref + 3 hyps per distinct test pair.
  EXPECT_EQ(rows.size(), test_queries() * 4u);
  EXPECT_EQ(rows[0].role, inference::Role::ref);
}

TEST_F(Pipeline, EvaluateMatchesLibrary) {
  const auto cfg = config::load_config(config());
  const corpus::Vocabulary vocab = corpus::Vocabulary::load(out() / "vocab.txt");
  const auto raw = corpus::load_corpus(cfg.data.train, cfg.data.format);
  std::vector<metrics::Sentence> lm_text;
  for (const auto& conv : raw.conversations)
    for (std::size_t i = 1; i < conv.size(); ++i) {
      auto t = conv[i];
      if (t.size() > cfg.data.max_utterance_len) t.resize(cfg.data.max_utterance_len);
      lm_text.push_back(vocab.decode(vocab.encode(t)));
    }
  std::ifstream in(out() / "responses.tsv");
  const auto report =
      metrics::evaluate(inference::group_responses(inference::parse_response_file(in)),
                        metrics::KneserNeyTrigram(lm_text, cfg.evaluate.lm_discount));
  EXPECT_EQ(slurp(out() / "metrics.txt"), report.to_text());
}

TEST_F(Pipeline, GenerateIsByteIdenticalOnRerun) {
  const fs::path again = dir_ / "responses2.tsv";
  const auto r = run({"generate", "--config", config().string(), "--out", out().string(), "--responses",
                      again.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(again), slurp(out() / "responses.tsv"));
}

TEST_F(Pipeline, NSamplesFlagOverridesConfig) {
  const fs::path p = dir_ / "five.tsv";
  ASSERT_EQ(run({"generate", "--config", config().string(), "--out", out().string(), "--n-samples", "5",
                 "--responses", p.string()})
                .code,
            0);
  std::ifstream in(p);
  EXPECT_EQ(inference::parse_response_file(in).size(), test_queries() * 6u);
}

TEST_F(Pipeline, MismatchedVaeIsRejectedWithBothHashes) {
  const fs::path other = dir_ / "other";
  fs::create_directories(other);
  fs::copy_file(out() / "vocab.txt", other / "vocab.txt");
  ASSERT_EQ(run({"train-vae", "--config", config().string(), "--out", other.string(), "--seed", "99"}).code, 0);
  const auto r = run({"generate", "--config", config().string(), "--out", out().string(), "--vae",
                      (other / "vae.ckpt").string(), "--responses", (dir_ / "never.tsv").string()});
  EXPECT_EQ(r.code, 1);
  const std::string vae_hash = sha256_hex(slurp(other / "vae.ckpt"));
  const std::string parent = sha256_hex(slurp(out() / "vae.ckpt"));
  EXPECT_TRUE(contains(r.err, vae_hash)) << r.err;
  EXPECT_TRUE(contains(r.err, parent)) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "never.tsv"));
}

TEST_F(Pipeline, SingleTurnCheckpointWithMultiTurnConfigIsAnError) {
  std::string text = slurp(config());
  text.replace(text.find("\"multi_turn\": false"), 19, "\"multi_turn\": true");
  spit(dir_ / "multi.json", text);
  const auto r = run({"generate", "--config", (dir_ / "multi.json").string(), "--out", out().string(),
                      "--responses", (dir_ / "never.tsv").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.err, "single-turn")) << r.err;
}

TEST_F(Pipeline, EvaluateRejectsFileWithoutHypotheses) {
  spit(dir_ / "refs.tsv", "0\tref\t0\ta b\n1\tref\t0\tc\n");
  const auto r = run({"evaluate", "--config", config().string(), "--out", (dir_ / "eval").string(), "--vocab",
                      (out() / "vocab.txt").string(), "--responses", (dir_ / "refs.tsv").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.err, "no hypotheses")) << r.err;
}

TEST(Cli, PrepareIsDeterministicAndCountsDuplicates) {
  const fs::path dir = ld::testing::make_toy_experiment("cli_prepare");
  // Repeat one conversation: three duplicated single-turn pairs.
  const std::string line = "a b __eou__ c d __eou__ e f __eou__ g\n";
  spit(dir / "train.txt", slurp(dir / "train.txt") + line + line);
  const std::string cfg = (dir / "config.json").string();
  ASSERT_EQ(run({"prepare", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(run({"prepare", "--config", cfg, "--out", (dir / "b").string()}).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "vocab.txt"), slurp(dir / "b" / "vocab.txt"));
  EXPECT_EQ(slurp(dir / "a" / "prepare.txt"), slurp(dir / "b" / "prepare.txt"));
  const std::string report = slurp(dir / "a" / "prepare.txt");
  EXPECT_TRUE(contains(report, "train.conversations = 42\n")) << report;
  // The toy corpus may repeat pairs itself; the two extra lines add exactly 3.
  std::istringstream in(ld::testing::toy_dialog_corpus(40, 1));
  const auto raw = corpus::parse_dialog_lines(in);
  const auto vocab = corpus::build_vocab(raw, 100, 1);
  const auto pairs = corpus::make_single_turn(corpus::encode_corpus(raw, vocab, 12));
  const std::size_t base = pairs.size() - corpus::deduplicate(pairs).size();
  EXPECT_TRUE(contains(report, "train.single_turn_duplicates_removed = " + std::to_string(base + 3) + "\n"))
      << report;
}

TEST(Cli, TrainGanWithoutVaeFailsBeforeWriting) {
  const fs::path dir = ld::testing::make_toy_experiment("cli_novae");
  const std::string cfg = (dir / "config.json").string(), out = (dir / "run").string();
  ASSERT_EQ(run({"prepare", "--config", cfg, "--out", out}).code, 0);
  const auto r = run({"train-gan", "--config", cfg, "--out", out});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.err, "VAE checkpoint not found")) << r.err;
  EXPECT_FALSE(fs::exists(dir / "run" / "gan.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "run" / "train-gan.log.jsonl"));
}

TEST(Cli, MissingGammaIsAnnounced) {
  const fs::path dir = ld::testing::make_toy_experiment("cli_gamma", false, R"("epochs": 1)", 1);
  const std::string cfg = (dir / "config.json").string(), out = (dir / "run").string();
  ASSERT_EQ(run({"prepare", "--config", cfg, "--out", out}).code, 0);
  ASSERT_EQ(run({"train-vae", "--config", cfg, "--out", out}).code, 0);
  const auto r = run({"train-gan", "--config", cfg, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(contains(r.err, "gan.gamma not set; using the default 1.0")) << r.err;
}

TEST(Cli, MultiTurnPipelineRuns) {
  const fs::path dir = ld::testing::make_toy_experiment("cli_multi", true);
  const std::string cfg = (dir / "config.json").string(), out = (dir / "run").string();
  for (const char* cmd : {"prepare", "train-vae", "train-gan", "generate", "evaluate"}) {
    const auto r = run({cmd, "--config", cfg, "--out", out});
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
  }
  const Checkpoint g = load_checkpoint(dir / "run" / "gan.ckpt").checkpoint;
  EXPECT_TRUE(g.has_group("context"));
}

TEST(Cli, ConfigErrorsAreListedTogether) {
  const fs::path dir = ld::testing::make_toy_experiment("cli_badcfg");
  spit(dir / "bad.json", R"({"vae": {"hidden": "big", "word_dropout": 2.0}, "gan": {"colour": 1}})");
  const auto r = run({"prepare", "--config", (dir / "bad.json").string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.err, "vae.hidden")) << r.err;
  EXPECT_TRUE(contains(r.err, "word_dropout")) << r.err;
  EXPECT_TRUE(contains(r.err, "gan.colour")) << r.err;
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"prepare"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, VerifyPrintsTableAndPasses) {
  const auto r = run({"verify"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "PASS")) << r.out;
  EXPECT_FALSE(contains(r.out, "FAIL ")) << r.out;
}

TEST(Cli, VerifyFailureExitsWithThree) {
  std::vector<verify::Check> checks{{"always wrong", [] { return verify::CheckResult{"always wrong", false, "x"}; }}};
  std::ostringstream out;
  EXPECT_EQ(run_verify(checks, out), 3);
  EXPECT_TRUE(contains(out.str(), "always wrong"));
}

}  // namespace
}  // namespace ld::cli
