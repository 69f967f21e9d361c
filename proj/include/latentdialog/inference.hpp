#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "latentdialog/corpus.hpp"
#include "latentdialog/latent_gan.hpp"
#include "latentdialog/metrics.hpp"
#include "latentdialog/vae.hpp"

namespace ld::inference {

struct GenerateOptions {
  std::size_t n_samples = 10;
  std::size_t max_len = 30;
  /// Use the query's posterior mean instead of sampling z_q.
  bool use_mean = false;
  /// Sample tokens from the decoder instead of taking the argmax.
  bool sample_decoder = false;

  void validate() const;
};

/// Maps conditioning rows [B×(d_z+d_ctx)] to predicted response codes [B×d_z].
using LatentMap = std::function<ad::Tensor(const ad::Tensor&)>;

/// Core of the pipeline: n_samples query codes from q(z|query) (or its mean),
/// each concatenated with `context_vector`, mapped by `map` and decoded.
std::vector<std::vector<int>> respond_ids(const vae::VaeModel& vae, const LatentMap& map,
                                          const corpus::Utterance& query, const std::vector<double>& context_vector,
                                          const GenerateOptions& options, Rng& rng);

/// Frozen models used for generation.
struct Models {
  const corpus::Vocabulary& vocab;
  const vae::VaeModel& vae;
  const gan::GanModel& gan;
};

/// Responses for one query given as id sequences.
std::vector<std::vector<int>> respond(const Models& models, const corpus::Utterance& query,
                                      const std::vector<corpus::Utterance>& context, const GenerateOptions& options,
                                      Rng& rng);

/// Text in, detokenized text out. An empty query is rejected.
std::vector<std::string> respond_text(const Models& models, const std::string& query,
                                      const std::vector<std::string>& context, const GenerateOptions& options,
                                      Rng& rng);

enum class Role { ref, hyp };

/// One row of a response file.
struct ResponseRecord {
  std::size_t query_id = 0;
  Role role = Role::hyp;
  std::size_t sample_idx = 0;
  std::string sentence;

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

/// Per query in test order: the reference row (index 0), then hypotheses
/// 0..n−1. Each query draws from its own generator seeded by (seed, index).
std::vector<ResponseRecord> batch_respond(const Models& models, const std::vector<corpus::TurnSample>& test,
                                          const GenerateOptions& options, std::uint64_t seed);

/// `query_id \t ref|hyp \t sample_idx \t sentence`, one record per line.
void write_response_file(std::ostream& out, const std::vector<ResponseRecord>& records);
std::string format_response_file(const std::vector<ResponseRecord>& records);
/// Throws std::runtime_error naming the line of the first malformed row.
std::vector<ResponseRecord> parse_response_file(std::istream& in);

/// Groups records by query id (ascending) into reference plus hypotheses.
/// Throws when a query has no reference, several references or no hypotheses,
/// and when the record set holds no hypotheses at all.
std::vector<metrics::QueryResponses> group_responses(const std::vector<ResponseRecord>& records);

}  // namespace ld::inference
