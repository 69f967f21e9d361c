#include "latentdialog/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "latentdialog/checkpoint.hpp"

namespace ld::corpus {
namespace {

const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_numeral(std::string_view tok) {
  bool digit = false;
  for (char ch : tok) {
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      digit = true;
    } else if (ch != '.' && ch != ',' && ch != ':') {
      return false;
    }
  }
  return digit && std::isdigit(static_cast<unsigned char>(tok.front()));
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus file " + path.string());
  return in;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = kReserved;
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kPad || i == kBos || i == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

std::string Vocabulary::hash() const { return sha256_hex(serialize()); }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  out << serialize();
  if (!out) throw std::runtime_error("failed writing vocabulary file " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  if (lines.size() < kReservedCount) {
    throw std::runtime_error("vocabulary file " + path.string() + " is missing the reserved entries");
  }
  for (std::size_t i = 0; i < kReservedCount; ++i) {
    if (lines[i] != kReserved[i]) {
      throw std::runtime_error("vocabulary file " + path.string() + " line " + std::to_string(i + 1) +
                               ": expected reserved token " + kReserved[i]);
    }
  }
  return Vocabulary(std::vector<std::string>(lines.begin() + kReservedCount, lines.end()));
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string tok(text.substr(i, j - i));
      for (char& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      out.push_back(is_numeral(tok) ? std::string(kNumToken) : std::move(tok));
    }
    i = j;
  }
  return out;
}

RawCorpus parse_dialog_lines(std::istream& in) {
  RawCorpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<Tokens> conversation;
    std::string_view rest(line);
    bool blank = true;
    while (true) {
      const auto pos = rest.find(kTurnSeparator);
      Tokens utt = tokenize(rest.substr(0, pos));
      if (!utt.empty()) {
        conversation.push_back(std::move(utt));
        blank = false;
      }
      if (pos == std::string_view::npos) break;
      blank = false;
      rest.remove_prefix(pos + kTurnSeparator.size());
    }
    if (blank) continue;
    if (conversation.size() < 2) {
      ++corpus.skipped;
      continue;
    }
    corpus.conversations.push_back(std::move(conversation));
  }
  return corpus;
}

RawCorpus load_dialog_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_dialog_lines(in);
}

RawCorpus parse_utterance_lines(std::istream& in) {
  RawCorpus corpus;
  std::vector<Tokens> current;
  auto flush = [&] {
    if (current.size() >= 2) {
      corpus.conversations.push_back(std::move(current));
    } else if (current.size() == 1) {
      ++corpus.skipped;
    }
    current.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    Tokens utt = tokenize(line);
    if (utt.empty()) {
      flush();
    } else {
      current.push_back(std::move(utt));
    }
  }
  flush();
  return corpus;
}

RawCorpus load_utterance_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_utterance_lines(in);
}

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "dialog-lines") return CorpusFormat::dialog_lines;
  if (name == "utterance-lines") return CorpusFormat::utterance_lines;
  throw std::invalid_argument("unknown corpus format '" + name + "' (expected dialog-lines or utterance-lines)");
}

RawCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return format == CorpusFormat::dialog_lines ? load_dialog_lines(path) : load_utterance_lines(path);
}

Vocabulary build_vocab(const RawCorpus& corpus, std::size_t max_size, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& conv : corpus.conversations) {
    for (const auto& utt : conv) {
      for (const auto& tok : utt) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && std::find(kReserved.begin(), kReserved.end(), tok) == kReserved.end()) {
      ranked.emplace_back(tok, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t room = max_size > kReservedCount ? max_size - kReservedCount : 0;
  if (ranked.size() > room) ranked.resize(room);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(tokens);
}

DialogCorpus encode_corpus(const RawCorpus& raw, const Vocabulary& vocab, std::size_t max_utterance_len) {
  DialogCorpus out;
  out.conversations.reserve(raw.conversations.size());
  for (const auto& conv : raw.conversations) {
    std::vector<Utterance> encoded;
    for (const auto& utt : conv) {
      Utterance ids = vocab.encode(utt);
      if (max_utterance_len > 0 && ids.size() > max_utterance_len) ids.resize(max_utterance_len);
      encoded.push_back(std::move(ids));
    }
    out.conversations.push_back(std::move(encoded));
  }
  return out;
}

std::vector<Utterance> all_utterances(const DialogCorpus& corpus) {
  std::vector<Utterance> out;
  for (const auto& conv : corpus.conversations) out.insert(out.end(), conv.begin(), conv.end());
  return out;
}

std::vector<TurnSample> make_single_turn(const DialogCorpus& corpus) {
  std::vector<TurnSample> out;
  for (const auto& conv : corpus.conversations) {
    for (std::size_t i = 0; i + 1 < conv.size(); ++i) out.push_back({{}, conv[i], conv[i + 1]});
  }
  return out;
}

std::vector<TurnSample> make_multi_turn(const DialogCorpus& corpus, std::size_t max_context_turns) {
  std::vector<TurnSample> out;
  for (const auto& conv : corpus.conversations) {
    for (std::size_t i = 0; i + 1 < conv.size(); ++i) {
      const std::size_t begin = i > max_context_turns ? i - max_context_turns : 0;
      TurnSample s;
      s.context.assign(conv.begin() + static_cast<std::ptrdiff_t>(begin),
                       conv.begin() + static_cast<std::ptrdiff_t>(i));
      s.query = conv[i];
      s.response = conv[i + 1];
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<TurnSample> deduplicate(const std::vector<TurnSample>& samples) {
  std::set<TurnSample> seen;
  std::vector<TurnSample> out;
  for (const auto& s : samples) {
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

std::vector<int> PaddedBatch::column(std::size_t t) const {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = ids[r * width + t];
  return out;
}

std::vector<double> PaddedBatch::mask_vector(std::size_t t) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = mask[r * width + t];
  return out;
}

ad::Tensor PaddedBatch::mask_column(std::size_t t) const { return ad::Tensor(rows, 1, mask_vector(t)); }

PaddedBatch pad_sequences(const std::vector<Utterance>& sequences, int pad_id) {
  PaddedBatch b;
  b.rows = sequences.size();
  for (const auto& s : sequences) b.width = std::max(b.width, s.size());
  b.ids.assign(b.rows * b.width, pad_id);
  b.mask.assign(b.rows * b.width, 0.0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    b.lengths.push_back(sequences[r].size());
    for (std::size_t t = 0; t < sequences[r].size(); ++t) {
      b.ids[r * b.width + t] = sequences[r][t];
      b.mask[r * b.width + t] = 1.0;
    }
  }
  return b;
}

std::vector<SampleBatch> batch(const std::vector<TurnSample>& samples, std::size_t batch_size, int pad_id) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<SampleBatch> out;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    SampleBatch b;
    std::vector<Utterance> q, r;
    for (std::size_t i = start; i < end; ++i) {
      b.indices.push_back(i);
      q.push_back(samples[i].query);
      r.push_back(samples[i].response);
    }
    b.queries = pad_sequences(q, pad_id);
    b.responses = pad_sequences(r, pad_id);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace ld::corpus
