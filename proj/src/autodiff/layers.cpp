#include "latentdialog/autodiff/layers.hpp"

namespace ld::ad {

void add_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  params.add(prefix + ".W", xavier_uniform(in, out, rng));
  params.add(prefix + ".b", Tensor(1, out, 0.0));
}

Var linear(const Binding& p, const std::string& prefix, Var x) {
  return add(matmul(x, p[prefix + ".W"]), p[prefix + ".b"]);
}

CellType parse_cell_type(const std::string& name) {
  if (name == "lstm") return CellType::lstm;
  if (name == "gru") return CellType::gru;
  throw std::invalid_argument("unknown recurrent cell '" + name + "' (expected lstm or gru)");
}

std::string to_string(CellType cell) { return cell == CellType::lstm ? "lstm" : "gru"; }

void add_cell(ParamSet& params, const std::string& prefix, CellType cell, std::size_t in,
              std::size_t hidden, Rng& rng) {
  if (cell == CellType::lstm) {
    params.add(prefix + ".W", xavier_uniform(in + hidden, 4 * hidden, rng));
    Tensor b(1, 4 * hidden, 0.0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;  // forget gate
    params.add(prefix + ".b", std::move(b));
  } else {
    params.add(prefix + ".W", xavier_uniform(in + hidden, 2 * hidden, rng));
    params.add(prefix + ".b", Tensor(1, 2 * hidden, 0.0));
    params.add(prefix + ".Wn", xavier_uniform(in, hidden, rng));
    params.add(prefix + ".Un", xavier_uniform(hidden, hidden, rng));
    params.add(prefix + ".bn", Tensor(1, hidden, 0.0));
  }
}

RnnState cell_step(const Binding& p, const std::string& prefix, CellType cell, Var x, RnnState state) {
  const std::size_t h = state.h.cols();
  Var xh = concat_cols({x, state.h});
  if (cell == CellType::lstm) {
    Var gates = add(matmul(xh, p[prefix + ".W"]), p[prefix + ".b"]);
    Var i = sigmoid(slice_cols(gates, 0, h));
    Var f = sigmoid(slice_cols(gates, h, 2 * h));
    Var g = tanh(slice_cols(gates, 2 * h, 3 * h));
    Var o = sigmoid(slice_cols(gates, 3 * h, 4 * h));
    Var c = add(mul(f, state.c), mul(i, g));
    return {mul(o, tanh(c)), c};
  }
  Var gates = add(matmul(xh, p[prefix + ".W"]), p[prefix + ".b"]);
  Var r = sigmoid(slice_cols(gates, 0, h));
  Var u = sigmoid(slice_cols(gates, h, 2 * h));
  Var n = tanh(add(add(matmul(x, p[prefix + ".Wn"]), mul(r, matmul(state.h, p[prefix + ".Un"]))),
                   p[prefix + ".bn"]));
  // h' = (1 − u)·n + u·h
  Var next = add(n, mul(u, sub(state.h, n)));
  return {next, state.c};
}

RnnState zero_state(Tape& tape, CellType cell, std::size_t rows, std::size_t hidden) {
  RnnState s;
  s.h = tape.constant(Tensor(rows, hidden, 0.0));
  s.c = cell == CellType::lstm ? tape.constant(Tensor(rows, hidden, 0.0)) : s.h;
  return s;
}

namespace {

RnnState masked_step(const Binding& p, const std::string& prefix, CellType cell, Var x, RnnState s,
                     const Tensor& mask) {
  RnnState next = cell_step(p, prefix, cell, x, s);
  next.h = blend(next.h, s.h, mask);
  if (cell == CellType::lstm) next.c = blend(next.c, s.c, mask);
  return next;
}

}  // namespace

Var bidirectional_encode(const Binding& p, const std::string& fwd_prefix, const std::string& bwd_prefix,
                         CellType cell, std::size_t hidden, const std::vector<Var>& steps,
                         const std::vector<Tensor>& masks, Pooling pooling) {
  if (steps.empty() || steps.size() != masks.size()) {
    throw ShapeError("bidirectional_encode: need one mask per step and at least one step");
  }
  Tape& tape = p.tape();
  const std::size_t rows = steps.front().rows();
  const std::size_t n = steps.size();

  RnnState fwd = zero_state(tape, cell, rows, hidden);
  RnnState bwd = zero_state(tape, cell, rows, hidden);
  if (pooling == Pooling::final_state) {
    for (std::size_t t = 0; t < n; ++t) fwd = masked_step(p, fwd_prefix, cell, steps[t], fwd, masks[t]);
    for (std::size_t t = n; t-- > 0;) bwd = masked_step(p, bwd_prefix, cell, steps[t], bwd, masks[t]);
    return concat_cols({fwd.h, bwd.h});
  }

  std::vector<Var> fwd_h(n), bwd_h(n);
  for (std::size_t t = 0; t < n; ++t) {
    fwd = masked_step(p, fwd_prefix, cell, steps[t], fwd, masks[t]);
    fwd_h[t] = fwd.h;
  }
  for (std::size_t t = n; t-- > 0;) {
    bwd = masked_step(p, bwd_prefix, cell, steps[t], bwd, masks[t]);
    bwd_h[t] = bwd.h;
  }
  std::vector<double> lengths(rows, 0.0);
  for (const Tensor& m : masks) {
    for (std::size_t r = 0; r < rows; ++r) lengths[r] += m[r];
  }
  Var total;
  for (std::size_t t = 0; t < n; ++t) {
    Tensor w(rows, 2 * hidden, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (masks[t][r] == 0.0) continue;
      for (std::size_t c = 0; c < 2 * hidden; ++c) w(r, c) = 1.0 / lengths[r];
    }
    Var term = mul(concat_cols({fwd_h[t], bwd_h[t]}), tape.constant(std::move(w)));
    total = t == 0 ? term : add(total, term);
  }
  return total;
}

void add_batch_norm(ParamSet& params, const std::string& prefix, std::size_t features) {
  params.add(prefix + ".gamma", Tensor(1, features, 1.0));
  params.add(prefix + ".beta", Tensor(1, features, 0.0));
  params.add(prefix + ".running_mean", Tensor(1, features, 0.0), false);
  params.add(prefix + ".running_var", Tensor(1, features, 1.0), false);
}

Var batch_norm(const Binding& p, const std::string& prefix, Var x, NormMode mode, double eps,
               std::vector<BatchNormUpdate>* updates) {
  Var gamma = p[prefix + ".gamma"];
  Var beta = p[prefix + ".beta"];
  if (mode == NormMode::eval) {
    return batch_norm_eval(x, gamma, beta, p.tensor(prefix + ".running_mean"),
                           p.tensor(prefix + ".running_var"), eps);
  }
  BatchMoments moments;
  Var out = batch_norm_train(x, gamma, beta, eps, &moments);
  if (updates != nullptr) updates->push_back({prefix, std::move(moments), x.rows()});
  return out;
}

void apply_batch_norm_updates(ParamSet& params, const std::vector<BatchNormUpdate>& updates, double momentum) {
  for (const auto& u : updates) {
    Tensor& rm = params.at(u.prefix + ".running_mean");
    Tensor& rv = params.at(u.prefix + ".running_var");
    const double n = static_cast<double>(u.batch);
    const double unbias = n / (n - 1.0);
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * u.moments.mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * u.moments.variance[c] * unbias;
    }
  }
}

}  // namespace ld::ad
