#include "latentdialog/context_encoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace ld::ctx {

using ad::Tensor;
using ad::Var;

void ContextConfig::validate() const {
  std::vector<std::string> errors;
  if (latent == 0) errors.push_back("context latent dimension must be > 0");
  if (hidden == 0) errors.push_back("context hidden size must be > 0");
  if (errors.empty()) return;
  std::string msg = "invalid context encoder configuration:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::invalid_argument(msg);
}

ad::ParamSet init_context_params(const ContextConfig& config, Rng& rng) {
  config.validate();
  ad::ParamSet p;
  ad::add_cell(p, "ctx_fwd", config.cell, config.latent, config.hidden, rng);
  ad::add_cell(p, "ctx_bwd", config.cell, config.latent, config.hidden, rng);
  return p;
}

Var encode_context_on_tape(const ad::Binding& p, const ContextConfig& config,
                           const std::vector<std::vector<std::vector<double>>>& contexts) {
  ad::Tape& tape = p.tape();
  const std::size_t rows = contexts.size();
  if (rows == 0) throw ShapeError("encode_context_on_tape: empty batch");
  std::size_t width = 0;
  for (const auto& c : contexts) {
    width = std::max(width, c.size());
    for (const auto& z : c) {
      if (z.size() != config.latent) {
        throw ShapeError("context latent has dimension " + std::to_string(z.size()) + ", expected " +
                         std::to_string(config.latent));
      }
    }
  }
  if (width == 0) return tape.constant(Tensor(rows, config.output_dim()));

  std::vector<Var> steps;
  std::vector<Tensor> masks;
  for (std::size_t t = 0; t < width; ++t) {
    Tensor x(rows, config.latent);
    Tensor m(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      if (t >= contexts[r].size()) continue;
      std::copy(contexts[r][t].begin(), contexts[r][t].end(), x.row_span(r).begin());
      m(r, 0) = 1.0;
    }
    steps.push_back(tape.constant(std::move(x)));
    masks.push_back(std::move(m));
  }
  return ad::bidirectional_encode(p, "ctx_fwd", "ctx_bwd", config.cell, config.hidden, steps, masks,
                                  config.pooling);
}

ContextEncoder::ContextEncoder(const ContextConfig& config, Rng& rng)
    : config_(config), params_(init_context_params(config, rng)) {}

ContextEncoder::ContextEncoder(const ContextConfig& config, ad::ParamSet params)
    : config_(config), params_(std::move(params)) {
  Rng dummy(0);
  const ad::ParamSet reference = init_context_params(config_, dummy);
  if (reference.size() != params_.size()) throw ShapeError("context encoder parameter set has unexpected entries");
  for (const auto& e : reference.entries()) {
    if (!params_.contains(e.name) || !params_.at(e.name).same_shape(e.value)) {
      throw ShapeError("context encoder parameter '" + e.name + "' missing or misshapen");
    }
  }
}

std::vector<double> ContextEncoder::encode(const std::vector<std::vector<double>>& turn_latents) const {
  if (turn_latents.empty()) return std::vector<double>(config_.output_dim(), 0.0);
  ad::Tape tape;
  ad::Binding p(tape, params_, false);
  return encode_context_on_tape(p, config_, {turn_latents}).value().row_vector(0);
}

std::vector<std::vector<double>> context_latents(const std::vector<corpus::Utterance>& context,
                                                 const vae::VaeModel& vae) {
  std::vector<std::vector<double>> out;
  if (context.empty()) return out;
  for (auto& post : vae.encode_batch(context)) out.push_back(std::move(post.mu));
  return out;
}

std::vector<double> ContextEncoder::encode_utterances(const std::vector<corpus::Utterance>& context,
                                                      const vae::VaeModel& vae) const {
  return encode(context_latents(context, vae));
}

std::vector<double> condition(std::span<const double> z_q, std::span<const double> c) {
  std::vector<double> out(z_q.begin(), z_q.end());
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace ld::ctx
