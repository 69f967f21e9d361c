#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentdialog/context_encoder.hpp"
#include "latentdialog/corpus.hpp"
#include "latentdialog/inference.hpp"
#include "latentdialog/latent_gan.hpp"
#include "latentdialog/vae.hpp"

namespace ld::config {

/// Raised with every problem found in a configuration, one per line.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct DataConfig {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
  corpus::CorpusFormat format = corpus::CorpusFormat::dialog_lines;
  /// Includes the four reserved ids.
  std::size_t vocab_size = 20000;
  std::size_t min_freq = 1;
  std::size_t max_utterance_len = 30;
  bool multi_turn = false;
  std::size_t max_context_turns = 10;
  bool deduplicate = true;
};

struct GanSection {
  gan::NetworkConfig network;
  gan::GanTrainConfig train;
  ctx::ContextConfig context;
  bool sample_posterior = false;
  /// Set when the config left gamma out and the default was applied.
  bool gamma_defaulted = false;
};

struct EvaluateConfig {
  double lm_discount = 0.75;
  /// "responses": response side of training pairs; "all": every utterance.
  std::string lm_text = "responses";
};

/// Every setting of an experiment after defaults are applied.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  vae::VaeConfig vae;
  GanSection gan;
  inference::GenerateOptions generate;
  EvaluateConfig evaluate;
};

/// Parses JSON text. Relative data paths resolve against `base_dir`.
/// Unknown keys, wrong types and out-of-range values are all collected and
/// reported together in a ConfigError.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective configuration as JSON with every key present.
std::string to_json(const ExperimentConfig& config);

/// Section readers used when restoring models from a checkpoint's config echo.
vae::VaeConfig vae_config_from_json(const std::string& json_text);
GanSection gan_section_from_json(const std::string& json_text);

}  // namespace ld::config
