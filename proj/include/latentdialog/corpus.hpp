#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "latentdialog/autodiff/tensor.hpp"

namespace ld::corpus {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr std::size_t kReservedCount = 4;
inline constexpr std::string_view kNumToken = "NUM";
inline constexpr std::string_view kTurnSeparator = "__eou__";

/// Token ↔ id map. Ids 0..3 are PAD, BOS, EOS, UNK; the remaining ids are
/// assigned in order of decreasing frequency.
class Vocabulary {
 public:
  /// Reserved entries only.
  Vocabulary();
  /// Reserved entries followed by `tokens` in id order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  /// UNK for unknown tokens.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;
  /// Space-joined surface text; PAD, BOS and EOS are dropped.
  std::string detokenize(std::span<const int> ids) const;

  /// One token per line; the first four lines are the reserved symbols.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::string serialize() const;
  /// SHA-256 hex digest of serialize().
  std::string hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

using Tokens = std::vector<std::string>;
using Utterance = std::vector<int>;

/// Lowercase, split on whitespace, map numerals to NUM.
Tokens tokenize(std::string_view text);

/// Conversations of tokenized utterances, before vocabulary lookup.
struct RawCorpus {
  std::vector<std::vector<Tokens>> conversations;
  /// Lines or blocks dropped for having fewer than two utterances.
  std::size_t skipped = 0;
};

/// One conversation per line, utterances separated by `__eou__`.
RawCorpus parse_dialog_lines(std::istream& in);
RawCorpus load_dialog_lines(const std::filesystem::path& path);
/// One utterance per line, conversations separated by blank lines.
RawCorpus parse_utterance_lines(std::istream& in);
RawCorpus load_utterance_lines(const std::filesystem::path& path);

enum class CorpusFormat { dialog_lines, utterance_lines };
CorpusFormat parse_corpus_format(const std::string& name);
RawCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// Frequency-ranked vocabulary with lexicographic tie-break. `max_size`
/// counts the reserved entries; tokens seen fewer than `min_freq` times are
/// left out.
Vocabulary build_vocab(const RawCorpus& corpus, std::size_t max_size, std::size_t min_freq);

/// Conversations of id sequences. Utterances store content ids only; BOS/EOS
/// framing is added when batches are built.
struct DialogCorpus {
  std::vector<std::vector<Utterance>> conversations;
};

/// Maps tokens through `vocab` and truncates each utterance to
/// `max_utterance_len` content tokens.
DialogCorpus encode_corpus(const RawCorpus& raw, const Vocabulary& vocab, std::size_t max_utterance_len);

/// Every utterance in conversation order.
std::vector<Utterance> all_utterances(const DialogCorpus& corpus);

struct TurnSample {
  std::vector<Utterance> context;
  Utterance query;
  Utterance response;

  friend auto operator<=>(const TurnSample&, const TurnSample&) = default;
  friend bool operator==(const TurnSample&, const TurnSample&) = default;
};

/// (∅, u_i, u_{i+1}) for every consecutive pair.
std::vector<TurnSample> make_single_turn(const DialogCorpus& corpus);
/// (u_1..u_{i−1} truncated to the last `max_context_turns`, u_i, u_{i+1}).
std::vector<TurnSample> make_multi_turn(const DialogCorpus& corpus, std::size_t max_context_turns);

/// Keeps the first occurrence of each (context, query, response).
std::vector<TurnSample> deduplicate(const std::vector<TurnSample>& samples);

/// Right-padded id matrix with per-row lengths and a 0/1 mask.
struct PaddedBatch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<int> ids;         ///< rows × width, row-major
  std::vector<std::size_t> lengths;
  std::vector<double> mask;     ///< rows × width

  int at(std::size_t r, std::size_t t) const { return ids[r * width + t]; }
  /// Ids at position t across rows.
  std::vector<int> column(std::size_t t) const;
  /// Mask at position t as a [rows×1] tensor.
  ad::Tensor mask_column(std::size_t t) const;
  /// Mask at position t as a flat vector.
  std::vector<double> mask_vector(std::size_t t) const;
};

PaddedBatch pad_sequences(const std::vector<Utterance>& sequences, int pad_id = kPad);

struct SampleBatch {
  std::vector<std::size_t> indices;  ///< positions in the source sample list
  PaddedBatch queries;
  PaddedBatch responses;
};

/// Consecutive slices of `samples`; the last batch may be short.
std::vector<SampleBatch> batch(const std::vector<TurnSample>& samples, std::size_t batch_size,
                               int pad_id = kPad);

}  // namespace ld::corpus
