#pragma once

#include <string>
#include <vector>

#include "latentdialog/autodiff/ops.hpp"
#include "latentdialog/autodiff/params.hpp"

namespace ld::ad {

// Parameter naming: a layer registered under `prefix` owns entries named
// "<prefix>.W", "<prefix>.b", and so on.

void add_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
/// x·W + b
Var linear(const Binding& p, const std::string& prefix, Var x);

enum class CellType { lstm, gru };

CellType parse_cell_type(const std::string& name);
std::string to_string(CellType cell);

/// Recurrent state. `c` is only meaningful for LSTM cells.
struct RnnState {
  Var h;
  Var c;
};

void add_cell(ParamSet& params, const std::string& prefix, CellType cell, std::size_t in,
              std::size_t hidden, Rng& rng);

/// One recurrent step over a batch: x is [B×in], state is [B×hidden].
///
/// LSTM gates are laid out i|f|g|o in a single [(in+hidden)×4h] weight.
/// GRU uses r|u from one [(in+hidden)×2h] weight and a separate candidate.
RnnState cell_step(const Binding& p, const std::string& prefix, CellType cell, Var x, RnnState state);

/// Zero state for a batch of `rows`.
RnnState zero_state(Tape& tape, CellType cell, std::size_t rows, std::size_t hidden);

enum class Pooling { final_state, mean };

/// Masked bidirectional recurrent encoder.
///
/// `steps[t]` is the [B×in] input at position t and `masks[t]` the [B×1] 0/1
/// validity column. Rows with shorter sequences are right-padded: the forward
/// direction freezes its state once the mask turns 0 and the backward
/// direction starts at each row's last valid step. Returns [B×2h]: the final
/// forward state concatenated with the final backward state, or the masked
/// mean of the per-step concatenations. Rows with no valid step yield zeros.
Var bidirectional_encode(const Binding& p, const std::string& fwd_prefix, const std::string& bwd_prefix,
                         CellType cell, std::size_t hidden, const std::vector<Var>& steps,
                         const std::vector<Tensor>& masks, Pooling pooling = Pooling::final_state);

enum class NormMode { train, eval };

/// gamma, beta (trainable) and running_mean, running_var (state).
void add_batch_norm(ParamSet& params, const std::string& prefix, std::size_t features);

/// Pending running-statistics update produced by a training-mode pass.
struct BatchNormUpdate {
  std::string prefix;
  BatchMoments moments;
  std::size_t batch = 0;
};

/// Batch norm with statistics from the batch (train) or running state (eval).
/// In train mode the batch moments are appended to `updates` when non-null.
Var batch_norm(const Binding& p, const std::string& prefix, Var x, NormMode mode, double eps,
               std::vector<BatchNormUpdate>* updates = nullptr);

/// running ← (1 − momentum)·running + momentum·batch, using the unbiased
/// batch variance for the running estimate.
void apply_batch_norm_updates(ParamSet& params, const std::vector<BatchNormUpdate>& updates, double momentum);

}  // namespace ld::ad
