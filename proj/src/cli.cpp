#include "latentdialog/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "latentdialog/checkpoint.hpp"
#include "latentdialog/config.hpp"
#include "latentdialog/inference.hpp"
#include "latentdialog/metrics.hpp"
#include "latentdialog/ngram_lm.hpp"

namespace ld::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum class Level { quiet, info, debug };

Level log_level() {
  const char* v = std::getenv(kLogLevelEnv);
  if (v == nullptr) return Level::info;
  const std::string s(v);
  if (s == "quiet") return Level::quiet;
  if (s == "debug") return Level::debug;
  return Level::info;
}

/// Structured records go to `out`; notices go to `err`.
class Logger {
 public:
  Logger(std::ostream& out, std::ostream& err) : out_(out), err_(err), level_(log_level()) {}

  void record(const ordered_json& j, std::ofstream* file = nullptr) {
    const std::string line = j.dump();
    if (file != nullptr) *file << line << '\n';
    if (level_ != Level::quiet) out_ << line << '\n';
  }
  void notice(const std::string& msg) {
    if (level_ != Level::quiet) err_ << "note: " << msg << '\n';
  }
  void debug(const std::string& msg) {
    if (level_ == Level::debug) err_ << "debug: " << msg << '\n';
  }
  std::ostream& out() { return out_; }

 private:
  std::ostream& out_;
  std::ostream& err_;
  Level level_;
};

/// Failure that maps to a specific exit code.
struct ExitError : std::runtime_error {
  ExitError(int code, const std::string& msg) : std::runtime_error(msg), code(code) {}
  int code;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string vocab;
  std::string vae;
  std::string gan;
  std::string responses;
  std::string test;
  std::optional<std::size_t> n_samples;
};

config::ExperimentConfig load_experiment(const Common& c) {
  config::ExperimentConfig cfg =
      c.config.empty() ? config::parse_config("{}") : config::load_config(fs::path(c.config));
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path artifact(const std::string& override_path, const fs::path& out, const char* name) {
  return override_path.empty() ? out / name : fs::path(override_path);
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw std::runtime_error(what + " path is not set");
  if (!fs::exists(p)) throw std::runtime_error(what + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) { write_file(p, text); }

corpus::DialogCorpus load_split(const fs::path& path, const config::ExperimentConfig& cfg,
                                const corpus::Vocabulary& vocab) {
  return corpus::encode_corpus(corpus::load_corpus(path, cfg.data.format), vocab, cfg.data.max_utterance_len);
}

std::vector<corpus::TurnSample> turn_samples(const corpus::DialogCorpus& dc, const config::DataConfig& data) {
  auto samples =
      data.multi_turn ? corpus::make_multi_turn(dc, data.max_context_turns) : corpus::make_single_turn(dc);
  std::erase_if(samples, [](const corpus::TurnSample& s) { return s.query.empty() || s.response.empty(); });
  return data.deduplicate ? corpus::deduplicate(samples) : samples;
}

std::vector<corpus::Utterance> nonempty_utterances(const corpus::DialogCorpus& dc) {
  auto utts = corpus::all_utterances(dc);
  std::erase_if(utts, [](const corpus::Utterance& u) { return u.empty(); });
  return utts;
}

Rng stage_rng(std::uint64_t seed, std::uint32_t stage) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stage};
  return Rng(seq);
}

struct LoadedVae {
  vae::VaeModel model;
  std::string hash;
  std::string vocab_hash;
};

LoadedVae load_vae(const fs::path& path) {
  require_file(path, "VAE checkpoint");
  const LoadedCheckpoint lc = load_checkpoint(path);
  if (lc.checkpoint.kind != CheckpointKind::vae) throw std::runtime_error(path.string() + " is not a VAE checkpoint");
  return {vae::VaeModel(config::vae_config_from_json(lc.checkpoint.config_json), lc.checkpoint.group("vae")),
          lc.file_hash, lc.checkpoint.vocab_hash};
}

struct LoadedGan {
  gan::GanModel model;
  std::string parent_hash;
  std::string vocab_hash;
};

LoadedGan load_gan(const fs::path& path, const vae::VaeModel& vae) {
  require_file(path, "GAN checkpoint");
  const LoadedCheckpoint lc = load_checkpoint(path);
  const Checkpoint& ck = lc.checkpoint;
  if (ck.kind != CheckpointKind::gan) throw std::runtime_error(path.string() + " is not a GAN checkpoint");
  config::GanSection section = config::gan_section_from_json(ck.config_json);
  section.network.latent = vae.config().latent;
  section.context.latent = vae.config().latent;
  std::optional<ctx::ContextConfig> cc;
  std::optional<ad::ParamSet> cp;
  if (ck.has_group("context")) {
    cc = section.context;
    cp = ck.group("context");
    section.network.context_dim = section.context.output_dim();
  } else {
    section.network.context_dim = 0;
  }
  return {gan::GanModel(section.network, cc, ck.group("generator"), ck.group("discriminator"), cp), ck.parent_hash,
          ck.vocab_hash};
}

void check_vocab(const corpus::Vocabulary& vocab, const std::string& expected, const std::string& what) {
  if (vocab.hash() != expected) {
    throw std::runtime_error("vocabulary hash " + vocab.hash() + " does not match the " + what + " (" + expected +
                             ")");
  }
}

ordered_json vae_record(const vae::VaeEpochLog& l) {
  ordered_json j;
  j["stage"] = "vae";
  j["epoch"] = l.epoch;
  j["iteration"] = l.iteration;
  j["kl_weight"] = l.kl_weight;
  j["train_loss"] = l.train_loss;
  j["train_nll"] = l.train_nll;
  j["train_kl"] = l.train_kl;
  j["valid_nll"] = l.valid_nll;
  j["valid_kl"] = l.valid_kl;
  j["valid_neg_elbo"] = l.valid_neg_elbo;
  j["valid_bleu"] = l.valid_bleu;
  j["best"] = l.best;
  return j;
}

ordered_json gan_record(const gan::GanEpochLog& l) {
  ordered_json j;
  j["stage"] = "gan";
  j["epoch"] = l.epoch;
  j["d_loss"] = l.d_loss;
  j["g_adv"] = l.g_adv;
  j["g_mse"] = l.g_mse;
  j["g_total"] = l.g_total;
  j["valid_mse"] = l.valid.mse;
  j["valid_target_energy"] = l.valid.target_energy;
  j["valid_d_accuracy"] = l.valid.d_accuracy;
  return j;
}

int cmd_prepare(const Common& c, Logger& log) {
  const config::ExperimentConfig cfg = load_experiment(c);
  require_file(cfg.data.train, "training corpus");
  const fs::path out(c.out);
  const corpus::RawCorpus train = corpus::load_corpus(cfg.data.train, cfg.data.format);
  const corpus::Vocabulary vocab = corpus::build_vocab(train, cfg.data.vocab_size, cfg.data.min_freq);

  std::ostringstream report;
  report << "vocab_size = " << vocab.size() << '\n';
  auto split_stats = [&](const std::string& name, const corpus::RawCorpus& raw) {
    const corpus::DialogCorpus dc = corpus::encode_corpus(raw, vocab, cfg.data.max_utterance_len);
    const auto single = corpus::make_single_turn(dc);
    const auto multi = corpus::make_multi_turn(dc, cfg.data.max_context_turns);
    const auto single_unique = corpus::deduplicate(single);
    const auto multi_unique = corpus::deduplicate(multi);
    report << name << ".conversations = " << dc.conversations.size() << '\n'
           << name << ".skipped = " << raw.skipped << '\n'
           << name << ".utterances = " << corpus::all_utterances(dc).size() << '\n'
           << name << ".single_turn_pairs = " << single.size() << '\n'
           << name << ".single_turn_duplicates_removed = " << single.size() - single_unique.size() << '\n'
           << name << ".multi_turn_samples = " << multi.size() << '\n'
           << name << ".multi_turn_duplicates_removed = " << multi.size() - multi_unique.size() << '\n';
  };
  split_stats("train", train);
  if (!cfg.data.valid.empty()) {
    require_file(cfg.data.valid, "validation corpus");
    split_stats("valid", corpus::load_corpus(cfg.data.valid, cfg.data.format));
  }
  if (!cfg.data.test.empty()) {
    require_file(cfg.data.test, "test corpus");
    split_stats("test", corpus::load_corpus(cfg.data.test, cfg.data.format));
  }

  fs::create_directories(out);
  const fs::path vocab_path = artifact(c.vocab, out, "vocab.txt");
  vocab.save(vocab_path);
  write_text(out / "prepare.txt", report.str());
  write_text(out / "prepare.config.json", config::to_json(cfg) + "\n");
  log.out() << report.str() << "vocab_file = " << vocab_path.string() << '\n';
  return 0;
}

int cmd_train_vae(const Common& c, Logger& log) {
  config::ExperimentConfig cfg = load_experiment(c);
  const fs::path out(c.out);
  const fs::path vocab_path = artifact(c.vocab, out, "vocab.txt");
  require_file(cfg.data.train, "training corpus");
  require_file(vocab_path, "vocabulary (run prepare first)");
  if (!cfg.data.valid.empty()) require_file(cfg.data.valid, "validation corpus");

  const corpus::Vocabulary vocab = corpus::Vocabulary::load(vocab_path);
  cfg.vae.vocab_size = vocab.size();
  cfg.vae.validate();
  const auto train = nonempty_utterances(load_split(cfg.data.train, cfg, vocab));
  std::vector<corpus::Utterance> valid;
  if (!cfg.data.valid.empty()) valid = nonempty_utterances(load_split(cfg.data.valid, cfg, vocab));

  fs::create_directories(out);
  std::ofstream log_file(out / "train-vae.log.jsonl", std::ios::binary);
  Rng rng = stage_rng(cfg.seed, 1);
  const vae::VaeTrainResult result = vae::train_vae(train, valid, cfg.vae, rng, [&](const vae::VaeEpochLog& l) {
    log.record(vae_record(l), &log_file);
    return true;
  });

  Checkpoint ck;
  ck.kind = CheckpointKind::vae;
  ck.seed = cfg.seed;
  ck.config_json = config::to_json(cfg);
  ck.vocab_hash = vocab.hash();
  ck.groups.emplace_back("vae", result.model.params());
  const fs::path ck_path = artifact(c.vae, out, "vae.ckpt");
  const std::string hash = save_checkpoint(ck, ck_path);
  ordered_json done;
  done["stage"] = "vae";
  done["checkpoint"] = ck_path.string();
  done["sha256"] = hash;
  done["best_epoch"] = result.best_epoch;
  done["diverged"] = result.diverged;
  log.record(done, &log_file);
  if (result.diverged) throw ExitError(3, "VAE training diverged: " + result.diagnostic);
  return 0;
}

int cmd_train_gan(const Common& c, Logger& log) {
  config::ExperimentConfig cfg = load_experiment(c);
  const fs::path out(c.out);
  const fs::path vocab_path = artifact(c.vocab, out, "vocab.txt");
  const fs::path vae_path = artifact(c.vae, out, "vae.ckpt");
  require_file(vae_path, "VAE checkpoint");
  require_file(vocab_path, "vocabulary (run prepare first)");
  require_file(cfg.data.train, "training corpus");
  if (!cfg.data.valid.empty()) require_file(cfg.data.valid, "validation corpus");

  const corpus::Vocabulary vocab = corpus::Vocabulary::load(vocab_path);
  LoadedVae vae = load_vae(vae_path);
  check_vocab(vocab, vae.vocab_hash, "VAE checkpoint");
  if (cfg.gan.gamma_defaulted) log.notice("gan.gamma not set; using the default 1.0");

  // The GAN echo carries the VAE shape it was trained against.
  cfg.vae = vae.model.config();
  cfg.gan.network.latent = cfg.vae.latent;
  cfg.gan.context.latent = cfg.vae.latent;
  cfg.gan.network.context_dim = cfg.data.multi_turn ? cfg.gan.context.output_dim() : 0;

  Rng rng = stage_rng(cfg.seed, 2);
  const auto train_samples = turn_samples(load_split(cfg.data.train, cfg, vocab), cfg.data);
  std::vector<corpus::TurnSample> valid_samples;
  if (!cfg.data.valid.empty()) valid_samples = turn_samples(load_split(cfg.data.valid, cfg, vocab), cfg.data);
  const auto train_pairs = gan::make_latent_pairs(train_samples, vae.model, cfg.gan.sample_posterior, &rng);
  const auto valid_pairs = gan::make_latent_pairs(valid_samples, vae.model, cfg.gan.sample_posterior, &rng);
  log.debug("latent pairs: " + std::to_string(train_pairs.size()) + " train, " +
            std::to_string(valid_pairs.size()) + " valid");

  std::optional<ctx::ContextConfig> cc;
  if (cfg.data.multi_turn) cc = cfg.gan.context;
  gan::GanModel model(cfg.gan.network, cc, rng);

  fs::create_directories(out);
  std::ofstream log_file(out / "train-gan.log.jsonl", std::ios::binary);
  const gan::GanTrainResult result =
      gan::train_gan(std::move(model), train_pairs, valid_pairs, cfg.gan.train, rng, [&](const gan::GanEpochLog& l) {
        log.record(gan_record(l), &log_file);
        return true;
      });

  Checkpoint ck;
  ck.kind = CheckpointKind::gan;
  ck.seed = cfg.seed;
  ck.config_json = config::to_json(cfg);
  ck.vocab_hash = vocab.hash();
  ck.parent_hash = vae.hash;
  ck.groups.emplace_back("generator", result.model.generator());
  ck.groups.emplace_back("discriminator", result.model.discriminator());
  if (result.model.multi_turn()) ck.groups.emplace_back("context", result.model.context_encoder().params());
  const fs::path ck_path = artifact(c.gan, out, "gan.ckpt");
  const std::string hash = save_checkpoint(ck, ck_path);
  ordered_json done;
  done["stage"] = "gan";
  done["checkpoint"] = ck_path.string();
  done["sha256"] = hash;
  done["vae_sha256"] = vae.hash;
  done["diverged"] = result.diverged;
  log.record(done, &log_file);
  if (result.diverged) throw ExitError(3, "GAN training diverged: " + result.diagnostic);
  return 0;
}

int cmd_generate(const Common& c, Logger& log) {
  config::ExperimentConfig cfg = load_experiment(c);
  if (c.n_samples) cfg.generate.n_samples = *c.n_samples;
  if (!c.test.empty()) cfg.data.test = c.test;
  cfg.generate.validate();
  const fs::path out(c.out);
  const fs::path vocab_path = artifact(c.vocab, out, "vocab.txt");
  const fs::path vae_path = artifact(c.vae, out, "vae.ckpt");
  const fs::path gan_path = artifact(c.gan, out, "gan.ckpt");
  require_file(vae_path, "VAE checkpoint");
  require_file(gan_path, "GAN checkpoint");
  require_file(vocab_path, "vocabulary");
  require_file(cfg.data.test, "test corpus");

  const corpus::Vocabulary vocab = corpus::Vocabulary::load(vocab_path);
  LoadedVae vae = load_vae(vae_path);
  LoadedGan g = load_gan(gan_path, vae.model);
  if (g.parent_hash != vae.hash) {
    throw std::runtime_error("GAN checkpoint was trained against VAE " + g.parent_hash + " but the VAE checkpoint is " +
                             vae.hash);
  }
  check_vocab(vocab, vae.vocab_hash, "VAE checkpoint");
  if (cfg.data.multi_turn && !g.model.multi_turn()) {
    throw std::runtime_error("test set is multi-turn but the GAN checkpoint is single-turn (no context encoder)");
  }

  const auto test = turn_samples(load_split(cfg.data.test, cfg, vocab), cfg.data);
  if (test.empty()) throw std::runtime_error("test corpus yields no query/response pairs");
  const inference::Models models{vocab, vae.model, g.model};
  const auto records = inference::batch_respond(models, test, cfg.generate, cfg.seed);

  fs::create_directories(out);
  const fs::path resp_path = artifact(c.responses, out, "responses.tsv");
  write_text(resp_path, inference::format_response_file(records));
  write_text(out / "generate.config.json", config::to_json(cfg) + "\n");
  log.out() << "queries = " << test.size() << '\n'
            << "samples_per_query = " << cfg.generate.n_samples << '\n'
            << "responses = " << resp_path.string() << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, Logger& log) {
  const config::ExperimentConfig cfg = load_experiment(c);
  const fs::path out(c.out);
  const fs::path resp_path = artifact(c.responses, out, "responses.tsv");
  const fs::path vocab_path = artifact(c.vocab, out, "vocab.txt");
  require_file(resp_path, "response file");
  require_file(cfg.data.train, "language-model training corpus");

  std::ifstream in(resp_path, std::ios::binary);
  const auto queries = inference::group_responses(inference::parse_response_file(in));

  // LM text goes through the same vocabulary as the generated responses.
  std::optional<corpus::Vocabulary> vocab;
  if (fs::exists(vocab_path)) vocab = corpus::Vocabulary::load(vocab_path);
  const corpus::RawCorpus raw = corpus::load_corpus(cfg.data.train, cfg.data.format);
  std::vector<metrics::Sentence> lm_text;
  for (const auto& conv : raw.conversations) {
    for (std::size_t i = cfg.evaluate.lm_text == "all" ? 0 : 1; i < conv.size(); ++i) {
      corpus::Tokens toks = conv[i];
      if (toks.size() > cfg.data.max_utterance_len) toks.resize(cfg.data.max_utterance_len);
      if (vocab) toks = vocab->decode(vocab->encode(toks));
      if (!toks.empty()) lm_text.push_back(std::move(toks));
    }
  }
  const metrics::KneserNeyTrigram lm(lm_text, cfg.evaluate.lm_discount);
  const metrics::MetricReport report = metrics::evaluate(queries, lm);

  fs::create_directories(out);
  write_text(out / "metrics.txt", report.to_text());
  write_text(out / "metrics.json", report.to_json() + "\n");
  write_text(out / "evaluate.config.json", config::to_json(cfg) + "\n");
  log.out() << report.to_text();
  return 0;
}

}  // namespace

int run_verify(const std::vector<verify::Check>& checks, std::ostream& out) {
  const auto results = verify::run_checks(checks);
  verify::print_table(out, results);
  return verify::all_passed(results) ? 0 : 3;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent-space dialog response generation: VAE + conditional latent GAN", "latentdialog"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", common.config, "Experiment configuration (JSON)");
    sub->add_option("--seed", common.seed, "Global seed (overrides the config)");
    auto* o = sub->add_option("--out", common.out, "Artifact directory");
    if (needs_out) o->required();
    sub->add_option("--vocab", common.vocab, "Vocabulary file (default <out>/vocab.txt)");
  };

  auto* prepare = app.add_subcommand("prepare", "Build the vocabulary and report sample counts");
  add_common(prepare, true);
  auto* train_vae = app.add_subcommand("train-vae", "Step 1: train the sentence VAE");
  add_common(train_vae, true);
  train_vae->add_option("--vae", common.vae, "Output checkpoint (default <out>/vae.ckpt)");
  auto* train_gan = app.add_subcommand("train-gan", "Step 2: train the latent GAN on a frozen VAE");
  add_common(train_gan, true);
  train_gan->add_option("--vae", common.vae, "VAE checkpoint (default <out>/vae.ckpt)");
  train_gan->add_option("--gan", common.gan, "Output checkpoint (default <out>/gan.ckpt)");
  auto* generate = app.add_subcommand("generate", "Sample responses for every test query");
  add_common(generate, true);
  generate->add_option("--vae", common.vae, "VAE checkpoint (default <out>/vae.ckpt)");
  generate->add_option("--gan", common.gan, "GAN checkpoint (default <out>/gan.ckpt)");
  generate->add_option("--test", common.test, "Test corpus (overrides the config)");
  generate->add_option("--n-samples", common.n_samples, "Responses per query (default 10)");
  generate->add_option("--responses", common.responses, "Output file (default <out>/responses.tsv)");
  auto* evaluate = app.add_subcommand("evaluate", "Score a response file");
  add_common(evaluate, true);
  evaluate->add_option("--responses", common.responses, "Response file (default <out>/responses.tsv)");
  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in verification battery");

  std::vector<std::string> argv_storage{"latentdialog"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  Logger log(out, err);
  try {
    if (*prepare) return cmd_prepare(common, log);
    if (*train_vae) return cmd_train_vae(common, log);
    if (*train_gan) return cmd_train_gan(common, log);
    if (*generate) return cmd_generate(common, log);
    if (*evaluate) return cmd_evaluate(common, log);
    if (*verify_cmd) return run_verify(verify::default_checks(), out);
  } catch (const ExitError& e) {
    err << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ld::cli
