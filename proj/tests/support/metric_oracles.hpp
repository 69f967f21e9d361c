#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

// Deliberately naive reference implementations: every n-gram is compared
// position by position, no maps or sets.
namespace ld::testing {

using Words = std::vector<std::string>;

inline bool same_gram(const Words& a, std::size_t i, const Words& b, std::size_t j, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (a[i + k] != b[j + k]) return false;
  return true;
}

inline std::size_t occurrences(const Words& s, const Words& g, std::size_t gi, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= s.size(); ++j) c += same_gram(g, gi, s, j, n) ? 1 : 0;
  return c;
}

// True when the n-gram at position i is the first occurrence of its kind.
inline bool first_occurrence(const Words& s, std::size_t i, std::size_t n) {
  for (std::size_t j = 0; j < i; ++j)
    if (same_gram(s, i, s, j, n)) return false;
  return true;
}

inline std::size_t brute_total(const Words& hyp, std::size_t n) { return hyp.size() >= n ? hyp.size() - n + 1 : 0; }

inline std::size_t brute_clipped_matches(const Words& hyp, const Words& ref, std::size_t n) {
  std::size_t m = 0;
  for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
    if (!first_occurrence(hyp, i, n)) continue;
    m += std::min(occurrences(hyp, hyp, i, n), occurrences(ref, hyp, i, n));
  }
  return m;
}

inline std::size_t brute_unique(const Words& s, std::size_t n) {
  std::size_t u = 0;
  for (std::size_t i = 0; i + n <= s.size(); ++i) u += first_occurrence(s, i, n) ? 1 : 0;
  return u;
}

inline double brute_intra(const Words& s, std::size_t n) {
  if (s.size() < n) return s.empty() ? 0.0 : 1.0;
  return static_cast<double>(brute_unique(s, n)) / static_cast<double>(s.size() - n + 1);
}

inline double brute_inter(const std::vector<Words>& rs, std::size_t n) {
  // Pool n-grams from all responses, keeping track of sentence boundaries.
  std::vector<Words> grams;
  bool any = false;
  for (const auto& r : rs) {
    any = any || !r.empty();
    for (std::size_t i = 0; i + n <= r.size(); ++i) grams.emplace_back(r.begin() + i, r.begin() + i + n);
  }
  if (grams.empty()) return any ? 1.0 : 0.0;
  std::size_t unique = 0;
  for (std::size_t i = 0; i < grams.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i && !seen; ++j) seen = grams[i] == grams[j];
    unique += seen ? 0 : 1;
  }
  return static_cast<double>(unique) / static_cast<double>(grams.size());
}

inline double brute_ttr(const std::vector<Words>& rs) {
  Words flat;
  for (const auto& r : rs) flat.insert(flat.end(), r.begin(), r.end());
  return static_cast<double>(brute_unique(flat, 1)) / static_cast<double>(flat.size());
}

// Sentences over a tiny alphabet so n-gram repeats are common.
inline Words random_words(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len, int alphabet = 4) {
  static const char* kAlpha[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  const std::size_t len = std::uniform_int_distribution<std::size_t>(min_len, max_len)(rng);
  Words w;
  for (std::size_t i = 0; i < len; ++i) w.emplace_back(kAlpha[std::uniform_int_distribution<int>(0, alphabet - 1)(rng)]);
  return w;
}

// Interpolated KN trigram, discount 0.75, trained on {"a b", "a c", "b c"}.
// Vocabulary: <s> </s> <unk> a b c, so the uniform floor is 1/5.
//
// Trigram counts with <s> <s> padding:
//   (<s> <s> a)=2 (<s> <s> b)=1 (<s> a b)=1 (<s> a c)=1 (<s> b c)=1
//   (a b </s>)=1 (a c </s>)=1 (b c </s>)=1
// Continuation counts N1+(. v w):
//   (<s> a)=1 (<s> b)=1 (a b)=1 (a c)=1 (b c)=1 (b </s>)=1 (c </s>)=2
// Unigram continuations N1+(. w): a=1 b=2 c=2 </s>=2, total 7 over 4 types.
//
//   P1(w)        = max(N(w) - D, 0)/7 + D*4/7 * 1/5
//   P2(w|v)      = max(N(v w) - D, 0)/T(v) + D*types(v)/T(v) * P1(w)
//   P3(w|u v)    = max(c(u v w) - D, 0)/c(u v) + D*types(u v)/c(u v) * P2(w|v)
// with T(<s>)=2, types 2; T(a)=2, types 2; T(b)=2, types 2; T(c)=2, types 1.
struct KnOracle {
  static constexpr double D = 0.75;
  static double p1_a() { return 0.25 / 7 + D * 4 / 7 / 5; }
  static double p1_bc() { return 1.25 / 7 + D * 4 / 7 / 5; }  // b, c and </s>
  static double p1_unk() { return D * 4 / 7 / 5; }

  // Response "a b": P(a|<s> <s>) P(b|<s> a) P(</s>|a b).
  static double ppl_a_b() {
    const double p_a = 1.25 / 3 + D * 2 / 3 * (0.25 / 2 + D * p1_a());
    const double p_b = 0.25 / 2 + D * (0.25 / 2 + D * p1_bc());
    const double p_end = 0.25 + D * (0.25 / 2 + D * p1_bc());
    return std::exp(-(std::log(p_a) + std::log(p_b) + std::log(p_end)) / 3);
  }

  // Response "c zzz": the unseen word maps to <unk>; histories (<s> c) and
  // (c <unk>) were never seen so those steps back off entirely.
  static double ppl_c_oov() {
    const double p_c = D * 2 / 3 * (D * p1_bc());
    const double p_unk = D * 1 / 2 * p1_unk();
    const double p_end = p1_bc();  // no bigrams start with <unk>
    return std::exp(-(std::log(p_c) + std::log(p_unk) + std::log(p_end)) / 3);
  }
};

}  // namespace ld::testing
