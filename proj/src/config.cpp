#include "latentdialog/config.hpp"

#include <concepts>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "latentdialog/checkpoint.hpp"

namespace ld::config {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration (" + std::to_string(problems.size()) + " problem" +
                    (problems.size() == 1 ? "" : "s") + "):";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

/// Reads keys from one JSON object, recording type errors and unknown keys.
class Section {
 public:
  Section(const json& root, const std::string& name, std::vector<std::string>& errors)
      : prefix_(name.empty() ? "" : name + "."), errors_(errors) {
    if (name.empty()) {
      obj_ = &root;
    } else if (root.contains(name)) {
      obj_ = &root.at(name);
      if (!obj_->is_object()) {
        errors_.push_back(name + ": expected an object");
        obj_ = nullptr;
      }
    }
  }

  bool has(const std::string& key) const { return obj_ != nullptr && obj_->contains(key); }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) out = v->get<double>();
      else type_error(key, "a number");
    }
  }
  template <std::unsigned_integral U>
    requires(!std::same_as<U, bool>)
  void get(const std::string& key, U& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned()) out = v->get<U>();
      else type_error(key, "a nonnegative integer");
    }
  }
  void get(const std::string& key, std::int64_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_integer()) out = v->get<std::int64_t>();
      else type_error(key, "an integer");
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else type_error(key, "true or false");
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (v->is_string()) out = v->get<std::string>();
      else type_error(key, "a string");
    }
  }
  void get_path(const std::string& key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    if (!has(key)) {
      known_.insert(key);
      return;
    }
    get(key, s);
    if (s.empty()) return;
    std::filesystem::path p(s);
    out = p.is_absolute() || base.empty() ? p : base / p;
  }
  template <class E, class Parse>
  void get_enum(const std::string& key, E& out, Parse parse) {
    std::string s;
    if (!has(key)) {
      known_.insert(key);
      return;
    }
    get(key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      errors_.push_back(prefix_ + key + ": " + e.what());
    }
  }

  void finish() {
    if (obj_ == nullptr) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!known_.contains(k)) errors_.push_back(prefix_ + k + ": unknown key");
    }
  }

  void known(const std::string& key) { known_.insert(key); }

 private:
  const json* find(const std::string& key) {
    known_.insert(key);
    if (obj_ == nullptr || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }
  void type_error(const std::string& key, const char* want) {
    errors_.push_back(prefix_ + key + ": expected " + want);
  }

  const json* obj_ = nullptr;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

corpus::CorpusFormat parse_format(const std::string& s) { return corpus::parse_corpus_format(s); }

std::string format_name(corpus::CorpusFormat f) {
  return f == corpus::CorpusFormat::dialog_lines ? "dialog-lines" : "utterance-lines";
}

ad::Pooling parse_pooling(const std::string& s) {
  if (s == "final_state") return ad::Pooling::final_state;
  if (s == "mean") return ad::Pooling::mean;
  throw std::invalid_argument("unknown pooling '" + s + "' (expected final_state or mean)");
}

std::string pooling_name(ad::Pooling p) { return p == ad::Pooling::final_state ? "final_state" : "mean"; }

void collect(std::vector<std::string>& errors, const auto& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    std::istringstream lines(e.what());
    std::string line;
    std::getline(lines, line);  // heading
    while (std::getline(lines, line)) {
      const auto first = line.find_first_not_of(' ');
      if (first != std::string::npos) errors.push_back(line.substr(first));
    }
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"top level must be a JSON object"});

  std::vector<std::string> errors;
  ExperimentConfig c;

  Section top(root, "", errors);
  top.get("seed", c.seed);
  for (const char* s : {"data", "vae", "gan", "generate", "evaluate"}) top.known(s);
  top.finish();

  Section data(root, "data", errors);
  data.get_path("train", c.data.train, base_dir);
  data.get_path("valid", c.data.valid, base_dir);
  data.get_path("test", c.data.test, base_dir);
  data.get_enum("format", c.data.format, parse_format);
  data.get("vocab_size", c.data.vocab_size);
  data.get("min_freq", c.data.min_freq);
  data.get("max_utterance_len", c.data.max_utterance_len);
  data.get("multi_turn", c.data.multi_turn);
  data.get("max_context_turns", c.data.max_context_turns);
  data.get("deduplicate", c.data.deduplicate);
  data.finish();
  if (c.data.vocab_size <= corpus::kReservedCount) errors.push_back("data.vocab_size must exceed 4");
  if (c.data.max_utterance_len == 0) errors.push_back("data.max_utterance_len must be >= 1");
  if (c.data.min_freq == 0) errors.push_back("data.min_freq must be >= 1");

  Section vae(root, "vae", errors);
  c.vae.vocab_size = c.data.vocab_size;
  vae.get("vocab_size", c.vae.vocab_size);
  vae.get("embed_dim", c.vae.embed_dim);
  vae.get("hidden", c.vae.hidden);
  vae.get("latent", c.vae.latent);
  vae.get_enum("cell", c.vae.cell, ad::parse_cell_type);
  vae.get("word_dropout", c.vae.word_dropout);
  vae.get("kl_target", c.vae.anneal.lambda_max);
  vae.get("anneal_horizon", c.vae.anneal.horizon);
  vae.get("learning_rate", c.vae.learning_rate);
  vae.get("batch_size", c.vae.batch_size);
  vae.get("epochs", c.vae.epochs);
  vae.get("grad_clip", c.vae.grad_clip);
  vae.get("bleu_samples", c.vae.bleu_samples);
  vae.finish();
  c.vae.max_len = c.data.max_utterance_len;
  collect(errors, [&] { c.vae.validate(); });

  Section g(root, "gan", errors);
  c.gan.gamma_defaulted = !g.has("gamma");
  g.get("hidden", c.gan.network.hidden);
  g.get_enum("preset", c.gan.network.preset, gan::parse_preset);
  g.get_enum("head", c.gan.network.head, gan::parse_head);
  g.get("leaky_slope", c.gan.network.leaky_slope);
  g.get("bn_eps", c.gan.network.bn_eps);
  g.get("gamma", c.gan.train.gamma);
  g.get("adv_weight", c.gan.train.adv_weight);
  g.get("d_steps_per_g", c.gan.train.d_steps_per_g);
  g.get("g_learning_rate", c.gan.train.g_learning_rate);
  g.get("d_learning_rate", c.gan.train.d_learning_rate);
  g.get("batch_size", c.gan.train.batch_size);
  g.get("epochs", c.gan.train.epochs);
  g.get("grad_clip", c.gan.train.grad_clip);
  g.get("bn_momentum", c.gan.train.bn_momentum);
  g.get_enum("adversarial", c.gan.train.adversarial, gan::parse_adversarial_loss);
  g.get("sample_posterior", c.gan.sample_posterior);
  g.get("context_hidden", c.gan.context.hidden);
  g.get_enum("context_cell", c.gan.context.cell, ad::parse_cell_type);
  g.get_enum("context_pooling", c.gan.context.pooling, parse_pooling);
  g.finish();
  c.gan.network.latent = c.vae.latent;
  c.gan.context.latent = c.vae.latent;
  c.gan.network.context_dim = c.data.multi_turn ? c.gan.context.output_dim() : 0;
  collect(errors, [&] { c.gan.network.validate(); });
  collect(errors, [&] { c.gan.train.validate(); });
  collect(errors, [&] { c.gan.context.validate(); });

  Section gen(root, "generate", errors);
  gen.get("n_samples", c.generate.n_samples);
  gen.get("max_len", c.generate.max_len);
  gen.get("use_mean", c.generate.use_mean);
  gen.get("sample_decoder", c.generate.sample_decoder);
  gen.finish();
  if (c.generate.n_samples == 0) errors.push_back("generate.n_samples must be >= 1");
  if (c.generate.max_len == 0) errors.push_back("generate.max_len must be >= 1");

  Section ev(root, "evaluate", errors);
  ev.get("lm_discount", c.evaluate.lm_discount);
  ev.get("lm_text", c.evaluate.lm_text);
  ev.finish();
  if (!(c.evaluate.lm_discount > 0.0 && c.evaluate.lm_discount < 1.0)) {
    errors.push_back("evaluate.lm_discount must be in (0, 1)");
  }
  if (c.evaluate.lm_text != "responses" && c.evaluate.lm_text != "all") {
    errors.push_back("evaluate.lm_text must be responses or all");
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("config file not found: " + path.string());
  return parse_config(read_file(path), path.parent_path());
}

std::string to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  auto& d = j["data"];
  d["train"] = c.data.train.string();
  d["valid"] = c.data.valid.string();
  d["test"] = c.data.test.string();
  d["format"] = format_name(c.data.format);
  d["vocab_size"] = c.data.vocab_size;
  d["min_freq"] = c.data.min_freq;
  d["max_utterance_len"] = c.data.max_utterance_len;
  d["multi_turn"] = c.data.multi_turn;
  d["max_context_turns"] = c.data.max_context_turns;
  d["deduplicate"] = c.data.deduplicate;
  auto& v = j["vae"];
  v["vocab_size"] = c.vae.vocab_size;
  v["embed_dim"] = c.vae.embed_dim;
  v["hidden"] = c.vae.hidden;
  v["latent"] = c.vae.latent;
  v["cell"] = ad::to_string(c.vae.cell);
  v["word_dropout"] = c.vae.word_dropout;
  v["kl_target"] = c.vae.anneal.lambda_max;
  v["anneal_horizon"] = c.vae.anneal.horizon;
  v["learning_rate"] = c.vae.learning_rate;
  v["batch_size"] = c.vae.batch_size;
  v["epochs"] = c.vae.epochs;
  v["grad_clip"] = c.vae.grad_clip;
  v["bleu_samples"] = c.vae.bleu_samples;
  auto& g = j["gan"];
  g["hidden"] = c.gan.network.hidden;
  g["preset"] = gan::to_string(c.gan.network.preset);
  g["head"] = gan::to_string(c.gan.network.head);
  g["leaky_slope"] = c.gan.network.leaky_slope;
  g["bn_eps"] = c.gan.network.bn_eps;
  g["gamma"] = c.gan.train.gamma;
  g["adv_weight"] = c.gan.train.adv_weight;
  g["d_steps_per_g"] = c.gan.train.d_steps_per_g;
  g["g_learning_rate"] = c.gan.train.g_learning_rate;
  g["d_learning_rate"] = c.gan.train.d_learning_rate;
  g["batch_size"] = c.gan.train.batch_size;
  g["epochs"] = c.gan.train.epochs;
  g["grad_clip"] = c.gan.train.grad_clip;
  g["bn_momentum"] = c.gan.train.bn_momentum;
  g["adversarial"] = gan::to_string(c.gan.train.adversarial);
  g["sample_posterior"] = c.gan.sample_posterior;
  g["context_hidden"] = c.gan.context.hidden;
  g["context_cell"] = ad::to_string(c.gan.context.cell);
  g["context_pooling"] = pooling_name(c.gan.context.pooling);
  auto& gen = j["generate"];
  gen["n_samples"] = c.generate.n_samples;
  gen["max_len"] = c.generate.max_len;
  gen["use_mean"] = c.generate.use_mean;
  gen["sample_decoder"] = c.generate.sample_decoder;
  auto& ev = j["evaluate"];
  ev["lm_discount"] = c.evaluate.lm_discount;
  ev["lm_text"] = c.evaluate.lm_text;
  return j.dump(2);
}

vae::VaeConfig vae_config_from_json(const std::string& json_text) { return parse_config(json_text).vae; }

GanSection gan_section_from_json(const std::string& json_text) { return parse_config(json_text).gan; }

}  // namespace ld::config
