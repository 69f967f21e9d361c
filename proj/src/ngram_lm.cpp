#include "latentdialog/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace ld::metrics {

double perplexity(const LanguageModel& lm, const std::vector<Sentence>& responses) {
  double log_sum = 0.0;
  std::size_t count = 0;
  const std::string bos(kLmBos);
  for (const auto& r : responses) {
    std::string u = bos, v = bos;
    auto score = [&](const std::string& w) {
      const double p = lm.probability(u, v, w);
      if (!(p > 0.0)) throw std::runtime_error("language model assigned zero probability to '" + w + "'");
      log_sum += std::log(p);
      ++count;
      u = v;
      v = w;
    };
    for (const auto& tok : r) score(lm.normalize(tok));
    score(std::string(kLmEos));
  }
  if (count == 0) throw std::invalid_argument("perplexity needs at least one response");
  return std::exp(-log_sum / static_cast<double>(count));
}

KneserNeyTrigram::KneserNeyTrigram(const std::vector<Sentence>& training, double discount)
    : discount_(discount) {
  if (training.empty()) throw std::invalid_argument("language model training corpus is empty");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("KN discount must be in (0, 1)");

  std::set<std::string> words;
  for (const auto& s : training) words.insert(s.begin(), s.end());
  for (auto sv : {kLmBos, kLmEos, kLmUnk}) {
    words.erase(std::string(sv));
    tokens_.emplace_back(sv);
  }
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  if (tokens_.size() >= (1U << 21)) throw std::invalid_argument("vocabulary too large for trigram keys");
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<Id>(i));

  const Id bos = 0, eos = 1;
  for (const auto& s : training) {
    std::vector<Id> seq = {bos, bos};
    for (const auto& w : s) seq.push_back(ids_.at(w));
    seq.push_back(eos);
    for (std::size_t i = 2; i < seq.size(); ++i) ++trigram_counts_[key3(seq[i - 2], seq[i - 1], seq[i])];
  }

  std::unordered_set<std::uint64_t> bigrams_seen;
  for (const auto& [k, c] : trigram_counts_) {
    const Id u = static_cast<Id>(k >> 42), v = static_cast<Id>((k >> 21) & 0x1FFFFF), w = static_cast<Id>(k & 0x1FFFFF);
    (void)u;
    history_counts_[key2(u, v)] += c;
    ++history_types_[key2(u, v)];
    ++bigram_cont_[key2(v, w)];
  }
  for (const auto& [k, n] : bigram_cont_) {
    const Id v = static_cast<Id>(k >> 21), w = static_cast<Id>(k & 0x1FFFFF);
    mid_totals_[v] += n;
    ++mid_types_[v];
    ++unigram_cont_[w];
  }
  for (const auto& [w, n] : unigram_cont_) {
    unigram_total_ += n;
    ++unigram_types_;
  }
}

KneserNeyTrigram::Id KneserNeyTrigram::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? ids_.at(std::string(kLmUnk)) : it->second;
}

double KneserNeyTrigram::unigram(Id w) const {
  const double total = static_cast<double>(unigram_total_);
  auto it = unigram_cont_.find(w);
  const double n = it == unigram_cont_.end() ? 0.0 : static_cast<double>(it->second);
  // <s> is never predicted, so the uniform floor spreads over the rest.
  const double uniform = 1.0 / static_cast<double>(tokens_.size() - 1);
  return std::max(n - discount_, 0.0) / total + discount_ * static_cast<double>(unigram_types_) / total * uniform;
}

double KneserNeyTrigram::bigram(Id v, Id w) const {
  auto ht = mid_totals_.find(v);
  if (ht == mid_totals_.end()) return unigram(w);
  const double total = static_cast<double>(ht->second);
  auto it = bigram_cont_.find(key2(v, w));
  const double n = it == bigram_cont_.end() ? 0.0 : static_cast<double>(it->second);
  const double types = static_cast<double>(mid_types_.at(v));
  return std::max(n - discount_, 0.0) / total + discount_ * types / total * unigram(w);
}

double KneserNeyTrigram::trigram(Id u, Id v, Id w) const {
  auto hc = history_counts_.find(key2(u, v));
  if (hc == history_counts_.end()) return bigram(v, w);
  const double total = static_cast<double>(hc->second);
  auto it = trigram_counts_.find(key3(u, v, w));
  const double c = it == trigram_counts_.end() ? 0.0 : static_cast<double>(it->second);
  const double types = static_cast<double>(history_types_.at(key2(u, v)));
  return std::max(c - discount_, 0.0) / total + discount_ * types / total * bigram(v, w);
}

double KneserNeyTrigram::probability(std::string_view two_back, std::string_view one_back,
                                     std::string_view word) const {
  const Id w = lookup(word);
  if (w == 0) throw std::invalid_argument("<s> cannot be predicted");
  return trigram(lookup(two_back), lookup(one_back), w);
}

std::vector<std::string> KneserNeyTrigram::vocabulary() const {
  return std::vector<std::string>(tokens_.begin() + 1, tokens_.end());
}

std::string KneserNeyTrigram::normalize(std::string_view token) const {
  return ids_.contains(std::string(token)) ? std::string(token) : std::string(kLmUnk);
}

}  // namespace ld::metrics
