#pragma once

#include <span>
#include <vector>

#include "latentdialog/autodiff/tape.hpp"

// Differentiable primitives. Every op validates shapes, records itself on the
// tape of its first operand and rejects non-finite results.

namespace ld::ad {

/// [m×k]·[k×n]
Var matmul(Var a, Var b);
/// Same shape, or `b` a [1×n] row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// scale·a + shift, elementwise.
Var affine(Var a, double scale, double shift = 0.0);
inline Var scale(Var a, double s) { return affine(a, s, 0.0); }
inline Var neg(Var a) { return affine(a, -1.0, 0.0); }

/// Horizontal concatenation; all parts share the row count.
Var concat_cols(const std::vector<Var>& parts);
/// Columns [begin, end).
Var slice_cols(Var a, std::size_t begin, std::size_t end);

Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double negative_slope);
Var exp(Var a);
Var log(Var a);
/// log(1 + eˣ), evaluated without overflow.
Var softplus(Var a);

/// Sum of all elements, [1×1].
Var sum(Var a);
/// Mean of all elements, [1×1].
Var mean(Var a);
/// Σ (a − b)², [1×1].
Var squared_error(Var a, Var b);

/// Σ_r weights[r] · (−log softmax(logits_r)[targets[r]]), [1×1].
/// Rows with weight 0 contribute exactly zero and receive zero gradient.
Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);
/// Unweighted form.
Var softmax_cross_entropy(Var logits, std::span<const int> targets);

/// Rows of `table` selected by `ids`; gradient scatters back into `table`.
Var embedding(Var table, std::span<const int> ids);

/// Row-wise select: mask[r]·a_r + (1 − mask[r])·b_r with mask a [rows×1] of 0/1.
Var blend(Var a, Var b, const Tensor& mask);

struct BatchMoments {
  Tensor mean;      ///< [1×features]
  Tensor variance;  ///< [1×features], biased (divides by batch)
};

/// Training-mode batch normalisation over rows. Requires at least 2 rows.
/// Writes the batch moments to `moments` when non-null.
Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchMoments* moments = nullptr);
/// Inference-mode batch normalisation with fixed statistics.
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps);

// Tape-free helpers.

/// Numerically stable logistic function.
double logistic(double x) noexcept;
/// log Σ exp(v), stable for large magnitudes.
double log_sum_exp(std::span<const double> v) noexcept;

}  // namespace ld::ad
