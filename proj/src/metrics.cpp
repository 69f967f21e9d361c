#include "latentdialog/metrics.hpp"

#include <cstdio>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "latentdialog/ngram_lm.hpp"

namespace ld::metrics {

double harmonic_mean(double a, double b) {
  if (a + b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

BleuAggregate bleu_aggregate(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("bleu_aggregate needs at least one score");
  BleuAggregate out;
  double total = 0.0;
  out.max = scores.front();
  for (double s : scores) {
    total += s;
    out.max = std::max(out.max, s);
  }
  out.avg = total / static_cast<double>(scores.size());
  out.hm = harmonic_mean(out.avg, out.max);
  return out;
}

double average_sentence_length(const std::vector<Sentence>& responses) {
  if (responses.empty()) return 0.0;
  std::size_t tokens = 0;
  for (const auto& r : responses) tokens += r.size();
  return static_cast<double>(tokens) / static_cast<double>(responses.size());
}

double type_token_ratio(const std::vector<Sentence>& responses) {
  std::unordered_set<std::string> types;
  std::size_t tokens = 0;
  for (const auto& r : responses) {
    tokens += r.size();
    types.insert(r.begin(), r.end());
  }
  if (tokens == 0) throw std::invalid_argument("type-token ratio needs at least one token");
  return static_cast<double>(types.size()) / static_cast<double>(tokens);
}

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string MetricReport::to_text() const {
  std::string out;
  auto line = [&](const char* key, const std::string& v) {
    out += key;
    out += " = ";
    out += v;
    out += '\n';
  };
  line("queries", std::to_string(queries));
  line("hypotheses", std::to_string(hypotheses));
  line("bleu_avg", fixed(bleu_avg));
  line("bleu_max", fixed(bleu_max));
  line("bleu_hm", fixed(bleu_hm));
  line("intra1", fixed(intra1));
  line("intra2", fixed(intra2));
  line("inter1", fixed(inter1));
  line("inter2", fixed(inter2));
  line("asl", fixed(asl));
  line("ttr", fixed(ttr));
  line("ppl", fixed(ppl));
  return out;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["queries"] = queries;
  j["hypotheses"] = hypotheses;
  j["bleu_avg"] = bleu_avg;
  j["bleu_max"] = bleu_max;
  j["bleu_hm"] = bleu_hm;
  j["intra1"] = intra1;
  j["intra2"] = intra2;
  j["inter1"] = inter1;
  j["inter2"] = inter2;
  j["asl"] = asl;
  j["ttr"] = ttr;
  j["ppl"] = ppl;
  return j.dump(2) + "\n";
}

MetricReport evaluate(const std::vector<QueryResponses>& queries, const LanguageModel& lm) {
  MetricReport rep;
  std::vector<Sentence> all;
  double intra1 = 0.0, intra2 = 0.0;
  for (const auto& q : queries) {
    if (q.hypotheses.empty()) throw std::invalid_argument("a query has no hypotheses");
    std::vector<double> scores;
    for (const auto& h : q.hypotheses) {
      scores.push_back(bleu_smoothed(h, q.reference));
      intra1 += intra_distinct(h, 1);
      intra2 += intra_distinct(h, 2);
      all.push_back(h);
    }
    const BleuAggregate agg = bleu_aggregate(scores);
    rep.bleu_avg += agg.avg;
    rep.bleu_max += agg.max;
    rep.inter1 += inter_distinct(q.hypotheses, 1);
    rep.inter2 += inter_distinct(q.hypotheses, 2);
  }
  if (all.empty()) throw std::invalid_argument("no hypotheses to evaluate");
  const double nq = static_cast<double>(queries.size());
  const double nh = static_cast<double>(all.size());
  rep.queries = queries.size();
  rep.hypotheses = all.size();
  rep.bleu_avg /= nq;
  rep.bleu_max /= nq;
  rep.bleu_hm = harmonic_mean(rep.bleu_avg, rep.bleu_max);
  rep.intra1 = intra1 / nh;
  rep.intra2 = intra2 / nh;
  rep.inter1 /= nq;
  rep.inter2 /= nq;
  rep.asl = average_sentence_length(all);
  rep.ttr = type_token_ratio(all);
  rep.ppl = perplexity(lm, all);
  return rep;
}

}  // namespace ld::metrics
