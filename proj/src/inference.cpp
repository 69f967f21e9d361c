#include "latentdialog/inference.hpp"

#include <charconv>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "latentdialog/context_encoder.hpp"

namespace ld::inference {

using ad::Tensor;

void GenerateOptions::validate() const {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
}

std::vector<std::vector<int>> respond_ids(const vae::VaeModel& vae, const LatentMap& map,
                                          const corpus::Utterance& query, const std::vector<double>& context_vector,
                                          const GenerateOptions& options, Rng& rng) {
  options.validate();
  if (query.empty()) throw std::invalid_argument("cannot respond to an empty query");
  const vae::PosteriorParams post = vae.encode(query);
  const std::size_t d_z = post.dim();
  Tensor cond(options.n_samples, d_z + context_vector.size());
  for (std::size_t s = 0; s < options.n_samples; ++s) {
    const std::vector<double> z = options.use_mean ? post.mu : vae::reparameterize(post, rng).z;
    auto row = cond.row_span(s);
    std::copy(z.begin(), z.end(), row.begin());
    std::copy(context_vector.begin(), context_vector.end(), row.begin() + static_cast<std::ptrdiff_t>(d_z));
  }
  const Tensor predicted = map(cond);
  if (predicted.rows() != options.n_samples || predicted.cols() != vae.config().latent) {
    throw ShapeError("latent map returned " + predicted.shape_string());
  }
  std::vector<vae::LatentCode> codes;
  for (std::size_t s = 0; s < options.n_samples; ++s) codes.push_back({predicted.row_vector(s)});
  if (!options.sample_decoder) return vae.decode_greedy_batch(codes, options.max_len);
  std::vector<std::vector<int>> out;
  for (const auto& c : codes) out.push_back(vae.decode_sampled(c, options.max_len, rng));
  return out;
}

std::vector<std::vector<int>> respond(const Models& models, const corpus::Utterance& query,
                                      const std::vector<corpus::Utterance>& context, const GenerateOptions& options,
                                      Rng& rng) {
  std::vector<double> c;
  if (models.gan.multi_turn()) {
    c = models.gan.context_encoder().encode_utterances(context, models.vae);
  } else if (!context.empty()) {
    throw std::invalid_argument("single-turn model cannot take a dialog context");
  }
  const gan::GanModel& g = models.gan;
  return respond_ids(models.vae, [&g](const Tensor& cond) { return g.generate(cond); }, query, c, options, rng);
}

std::vector<std::string> respond_text(const Models& models, const std::string& query,
                                      const std::vector<std::string>& context, const GenerateOptions& options,
                                      Rng& rng) {
  const corpus::Utterance q = models.vocab.encode(corpus::tokenize(query));
  if (q.empty()) throw std::invalid_argument("cannot respond to an empty query");
  std::vector<corpus::Utterance> ctx;
  for (const auto& turn : context) {
    corpus::Utterance u = models.vocab.encode(corpus::tokenize(turn));
    if (!u.empty()) ctx.push_back(std::move(u));
  }
  std::vector<std::string> out;
  for (const auto& ids : respond(models, q, ctx, options, rng)) out.push_back(models.vocab.detokenize(ids));
  return out;
}

std::vector<ResponseRecord> batch_respond(const Models& models, const std::vector<corpus::TurnSample>& test,
                                          const GenerateOptions& options, std::uint64_t seed) {
  options.validate();
  std::vector<ResponseRecord> records;
  records.reserve(test.size() * (options.n_samples + 1));
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(static_cast<std::uint64_t>(i) >> 32)};
    Rng rng(seq);
    records.push_back({i, Role::ref, 0, models.vocab.detokenize(test[i].response)});
    const auto hyps = respond(models, test[i].query, test[i].context, options, rng);
    for (std::size_t s = 0; s < hyps.size(); ++s) records.push_back({i, Role::hyp, s, models.vocab.detokenize(hyps[s])});
  }
  return records;
}

void write_response_file(std::ostream& out, const std::vector<ResponseRecord>& records) {
  for (const auto& r : records) {
    if (r.sentence.find_first_of("\t\n\r") != std::string::npos) {
      throw std::invalid_argument("response sentence contains a tab or newline");
    }
    out << r.query_id << '\t' << (r.role == Role::ref ? "ref" : "hyp") << '\t' << r.sample_idx << '\t' << r.sentence
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing response file");
}

std::string format_response_file(const std::vector<ResponseRecord>& records) {
  std::ostringstream ss;
  write_response_file(ss, records);
  return ss.str();
}

namespace {

std::size_t parse_index(std::string_view field, std::size_t line, const char* what) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::runtime_error("response file line " + std::to_string(line) + ": invalid " + what + " '" +
                             std::string(field) + "'");
  }
  return v;
}

}  // namespace

std::vector<ResponseRecord> parse_response_file(std::istream& in) {
  std::vector<ResponseRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::vector<std::string_view> fields;
    std::string_view rest(text);
    for (int k = 0; k < 3; ++k) {
      const auto tab = rest.find('\t');
      if (tab == std::string_view::npos) {
        throw std::runtime_error("response file line " + std::to_string(line) + ": expected 4 tab-separated fields");
      }
      fields.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    ResponseRecord r;
    r.query_id = parse_index(fields[0], line, "query id");
    if (fields[1] == "ref") {
      r.role = Role::ref;
    } else if (fields[1] == "hyp") {
      r.role = Role::hyp;
    } else {
      throw std::runtime_error("response file line " + std::to_string(line) + ": role must be ref or hyp, got '" +
                               std::string(fields[1]) + "'");
    }
    r.sample_idx = parse_index(fields[2], line, "sample index");
    if (rest.find('\t') != std::string_view::npos) {
      throw std::runtime_error("response file line " + std::to_string(line) + ": too many fields");
    }
    r.sentence = std::string(rest);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<metrics::QueryResponses> group_responses(const std::vector<ResponseRecord>& records) {
  struct Group {
    std::optional<metrics::Sentence> reference;
    std::vector<metrics::Sentence> hypotheses;
  };
  std::map<std::size_t, Group> groups;
  std::size_t hyps = 0;
  for (const auto& r : records) {
    Group& g = groups[r.query_id];
    metrics::Sentence tokens;
    std::istringstream words(r.sentence);
    for (std::string w; words >> w;) tokens.push_back(std::move(w));
    if (r.role == Role::ref) {
      if (g.reference) throw std::runtime_error("query " + std::to_string(r.query_id) + " has several references");
      g.reference = std::move(tokens);
    } else {
      g.hypotheses.push_back(std::move(tokens));
      ++hyps;
    }
  }
  if (hyps == 0) throw std::runtime_error("response set contains no hypotheses");
  std::vector<metrics::QueryResponses> out;
  for (auto& [id, g] : groups) {
    if (!g.reference) throw std::runtime_error("query " + std::to_string(id) + " has no reference");
    if (g.hypotheses.empty()) throw std::runtime_error("query " + std::to_string(id) + " has no hypotheses");
    out.push_back({std::move(*g.reference), std::move(g.hypotheses)});
  }
  return out;
}

}  // namespace ld::inference
