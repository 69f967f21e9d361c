#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "latentdialog/metrics.hpp"

namespace ld::metrics {

inline constexpr std::string_view kLmBos = "<s>";
inline constexpr std::string_view kLmEos = "</s>";
inline constexpr std::string_view kLmUnk = "<unk>";

/// Trigram-interface language model over a closed vocabulary.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  /// P(word | two_back, one_back). Histories at the sentence start are <s>.
  virtual double probability(std::string_view two_back, std::string_view one_back, std::string_view word) const = 0;
  /// Every token the model can predict (includes </s> and <unk>).
  virtual std::vector<std::string> vocabulary() const = 0;
  /// Token as seen by the model; out-of-vocabulary words become <unk>.
  virtual std::string normalize(std::string_view token) const = 0;
};

/// exp(−mean log P) over every token of every response plus one </s> per
/// response. Throws when no tokens are scored or a probability is 0.
double perplexity(const LanguageModel& lm, const std::vector<Sentence>& responses);

/// Interpolated Kneser–Ney trigram model with one absolute discount.
///
/// Highest order uses raw counts, the bigram order uses continuation counts
/// N1+(• v w), and the unigram order N1+(• w) is interpolated with a uniform
/// distribution over the vocabulary, so every token gets nonzero mass.
class KneserNeyTrigram final : public LanguageModel {
 public:
  explicit KneserNeyTrigram(const std::vector<Sentence>& training, double discount = 0.75);

  double probability(std::string_view two_back, std::string_view one_back, std::string_view word) const override;
  std::vector<std::string> vocabulary() const override;
  std::string normalize(std::string_view token) const override;

  double discount() const noexcept { return discount_; }

 private:
  using Id = std::uint32_t;
  static std::uint64_t key2(Id a, Id b) { return (std::uint64_t{a} << 21) | b; }
  static std::uint64_t key3(Id a, Id b, Id c) { return (std::uint64_t{a} << 42) | (std::uint64_t{b} << 21) | c; }

  Id lookup(std::string_view token) const;
  double unigram(Id w) const;
  double bigram(Id v, Id w) const;
  double trigram(Id u, Id v, Id w) const;

  double discount_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Id> ids_;

  std::unordered_map<std::uint64_t, std::uint64_t> trigram_counts_;
  std::unordered_map<std::uint64_t, std::uint64_t> history_counts_;   // c(u v •)
  std::unordered_map<std::uint64_t, std::uint64_t> history_types_;    // N1+(u v •)
  std::unordered_map<std::uint64_t, std::uint64_t> bigram_cont_;      // N1+(• v w)
  std::unordered_map<Id, std::uint64_t> mid_totals_;                  // Σ_w N1+(• v w)
  std::unordered_map<Id, std::uint64_t> mid_types_;                   // #{w : N1+(• v w) > 0}
  std::unordered_map<Id, std::uint64_t> unigram_cont_;                // N1+(• w)
  std::uint64_t unigram_total_ = 0;
  std::uint64_t unigram_types_ = 0;
};

}  // namespace ld::metrics
