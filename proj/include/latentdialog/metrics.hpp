#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ld::metrics {

using Sentence = std::vector<std::string>;

/// Multiset of order-n n-grams.
template <class T>
std::map<std::vector<T>, std::size_t> count_ngrams(std::span<const T> tokens, std::size_t n) {
  std::map<std::vector<T>, std::size_t> counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<T>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                            tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

/// Clipped n-gram matches and hypothesis n-gram totals for orders 1..max_n.
struct BleuStats {
  std::vector<std::size_t> matches;
  std::vector<std::size_t> totals;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

template <class T>
BleuStats bleu_stats(std::span<const T> hypothesis, std::span<const T> reference, std::size_t max_n = 4) {
  BleuStats s;
  s.hypothesis_length = hypothesis.size();
  s.reference_length = reference.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto hyp = count_ngrams(hypothesis, n);
    const auto ref = count_ngrams(reference, n);
    std::size_t matched = 0, total = 0;
    for (const auto& [gram, c] : hyp) {
      total += c;
      auto it = ref.find(gram);
      if (it != ref.end()) matched += std::min(c, it->second);
    }
    s.matches.push_back(matched);
    s.totals.push_back(total);
  }
  return s;
}

/// Precision used for order n when it has no clipped matches:
/// 1 / (2 · total), with total floored at 1 for hypotheses shorter than n.
inline double smoothed_precision(std::size_t matches, std::size_t total) {
  const double t = static_cast<double>(std::max<std::size_t>(total, 1));
  if (matches == 0) return 1.0 / (2.0 * t);
  return static_cast<double>(matches) / t;
}

/// Sentence BLEU from precomputed statistics: geometric mean of the smoothed
/// precisions times the brevity penalty. An empty hypothesis scores 0.
inline double bleu_from_stats(const BleuStats& s) {
  if (s.hypothesis_length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < s.matches.size(); ++i) log_sum += std::log(smoothed_precision(s.matches[i], s.totals[i]));
  const double geo = std::exp(log_sum / static_cast<double>(s.matches.size()));
  const double c = static_cast<double>(s.hypothesis_length);
  const double r = static_cast<double>(s.reference_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return geo * bp;
}

template <class T>
double bleu_smoothed(std::span<const T> hypothesis, std::span<const T> reference, std::size_t max_n = 4) {
  if (reference.empty()) throw std::invalid_argument("BLEU needs a nonempty reference");
  return bleu_from_stats(bleu_stats(hypothesis, reference, max_n));
}

inline double bleu_smoothed(const Sentence& hypothesis, const Sentence& reference, std::size_t max_n = 4) {
  return bleu_smoothed<std::string>(hypothesis, reference, max_n);
}

struct BleuAggregate {
  double avg = 0.0;
  double max = 0.0;
  double hm = 0.0;
};

/// 2ab / (a + b), and 0 when both are 0.
double harmonic_mean(double a, double b);

/// Average, maximum and their harmonic mean over one query's sampled scores.
BleuAggregate bleu_aggregate(std::span<const double> scores);

/// Unique / total n-grams within one response. Responses shorter than n
/// score 1 when nonempty and 0 when empty.
template <class T>
double intra_distinct(std::span<const T> response, std::size_t n) {
  if (response.size() < n) return response.empty() ? 0.0 : 1.0;
  const auto counts = count_ngrams(response, n);
  return static_cast<double>(counts.size()) / static_cast<double>(response.size() - n + 1);
}

/// Unique / total n-grams pooled over a query's responses, with the same
/// short-response convention as intra_distinct.
template <class T>
double inter_distinct(const std::vector<std::vector<T>>& responses, std::size_t n) {
  std::set<std::vector<T>> unique;
  std::size_t total = 0;
  bool any_token = false;
  for (const auto& r : responses) {
    any_token = any_token || !r.empty();
    for (const auto& [gram, c] : count_ngrams<T>(r, n)) {
      unique.insert(gram);
      total += c;
    }
  }
  if (total == 0) return any_token ? 1.0 : 0.0;
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

/// Mean token count; 0 for an empty collection.
double average_sentence_length(const std::vector<Sentence>& responses);

/// Distinct word types over total tokens across every response.
double type_token_ratio(const std::vector<Sentence>& responses);

inline double intra_distinct(const Sentence& response, std::size_t n) {
  return intra_distinct<std::string>(response, n);
}

/// One test query: its ground-truth reply and the sampled replies.
struct QueryResponses {
  Sentence reference;
  std::vector<Sentence> hypotheses;
};

struct MetricReport {
  double bleu_avg = 0.0;
  double bleu_max = 0.0;
  double bleu_hm = 0.0;
  double intra1 = 0.0;
  double intra2 = 0.0;
  double inter1 = 0.0;
  double inter2 = 0.0;
  double asl = 0.0;
  double ttr = 0.0;
  double ppl = 0.0;
  std::size_t queries = 0;
  std::size_t hypotheses = 0;

  /// `key = value` lines in a fixed order.
  std::string to_text() const;
  /// Machine-readable table (JSON object) with full precision.
  std::string to_json() const;
};

class LanguageModel;

/// Full metric suite. BLEU avg/max are means over queries of the per-query
/// average and maximum; HM is the harmonic mean of those two means. Intra-n
/// averages over every hypothesis, inter-n over queries, ASL and TTR pool all
/// hypotheses, and PPL scores every hypothesis under `lm`.
MetricReport evaluate(const std::vector<QueryResponses>& queries, const LanguageModel& lm);

}  // namespace ld::metrics
