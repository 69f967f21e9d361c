#include "latentdialog/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ld::ad {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <class F, class DF>
Var unary(const char* op, Var a, F f, DF dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape().record(op, std::move(out), {a}, [a, dfdx](const Tensor& g, const Tensor& y) {
    Tape& t = a.tape();
    const Tensor& x = t.value(a);
    Tensor& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sum_exp(std::span<const double> v) noexcept {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor out(av.rows(), bv.cols());
  gemm_nn(av, bv, out);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    Tape& t = a.tape();
    if (t.requires_grad(a)) gemm_nt(g, t.value(b), t.grad_buffer(a));
    if (t.requires_grad(b)) gemm_tn(t.value(a), g, t.grad_buffer(b));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.same_shape(bv)) {
    Tensor out = av;
    out.add_in_place(bv);
    return a.tape().record("add", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
      Tape& t = a.tape();
      if (t.requires_grad(a)) t.grad_buffer(a).add_in_place(g);
      if (t.requires_grad(b)) t.grad_buffer(b).add_in_place(g);
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row_span(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
    }
    return a.tape().record("add_row", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
      Tape& t = a.tape();
      if (t.requires_grad(a)) t.grad_buffer(a).add_in_place(g);
      if (t.requires_grad(b)) {
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto row = g.row_span(r);
          for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
        }
      }
    });
  }
  throw ShapeError("add: cannot broadcast " + bv.shape_string() + " onto " + av.shape_string());
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    Tape& t = a.tape();
    if (t.requires_grad(a)) t.grad_buffer(a).add_in_place(g);
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    Tape& t = a.tape();
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var affine(Var a, double scale, double shift) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = scale * av[i] + shift;
  return a.tape().record("affine", std::move(out), {a}, [a, scale](const Tensor& g, const Tensor&) {
    Tensor& ga = a.tape().grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_cols");
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row count mismatch " + parts.front().value().shape_string() +
                       " vs " + p.value().shape_string());
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.row_span(r).begin(), pv.cols(), out.row_span(r).begin() + offset);
    }
    offset += pv.cols();
  }
  return parts.front().tape().record("concat_cols", std::move(out), parts, [parts](const Tensor& g, const Tensor&) {
    Tape& t = parts.front().tape();
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t pc = p.cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row_span(r).subspan(off, pc);
          auto dst = gp.row_span(r);
          for (std::size_t c = 0; c < pc; ++c) dst[c] += src[c];
        }
      }
      off += pc;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin >= end || end > av.cols()) {
    throw ShapeError("slice_cols: invalid range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") for " + av.shape_string());
  }
  const std::size_t width = end - begin;
  Tensor out(av.rows(), width);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row_span(r).begin() + begin, width, out.row_span(r).begin());
  }
  return a.tape().record("slice_cols", std::move(out), {a}, [a, begin, width](const Tensor& g, const Tensor&) {
    Tensor& ga = a.tape().grad_buffer(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto src = g.row_span(r);
      auto dst = ga.row_span(r).subspan(begin, width);
      for (std::size_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return logistic(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double negative_slope) {
  return unary("leaky_relu", a, [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; },
               [negative_slope](double x, double) { return x > 0.0 ? 1.0 : negative_slope; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary("softplus", a,
               [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
               [](double x, double) { return logistic(x); });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](const Tensor& g, const Tensor&) {
    Tensor& ga = a.tape().grad_buffer(a);
    const double gv = g[0];
    for (double& v : ga.data()) v += gv;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return affine(sum(a), 1.0 / n);
}

Var squared_error(Var a, Var b) {
  require_same_tape(a, b, "squared_error");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "squared_error");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    s += d * d;
  }
  return a.tape().record("squared_error", Tensor::scalar(s), {a, b}, [a, b](const Tensor& g, const Tensor&) {
    Tape& t = a.tape();
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    const double gv = g[0];
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * gv * (x[i] - y[i]);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < x.size(); ++i) gb[i] -= 2.0 * gv * (x[i] - y[i]);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Tensor& lv = logits.value();
  const std::size_t rows = lv.rows();
  const std::size_t classes = lv.cols();
  if (targets.size() != rows || weights.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                     std::to_string(weights.size()) + " weights for logits " + lv.shape_string());
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw ShapeError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  // Softmax rows are cached for the backward pass.
  Tensor probs(rows, classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] == 0.0) continue;
    auto row = lv.row_span(r);
    const double lse = log_sum_exp(row);
    auto p = probs.row_span(r);
    for (std::size_t c = 0; c < classes; ++c) p[c] = std::exp(row[c] - lse);
    loss += weights[r] * (lse - row[static_cast<std::size_t>(targets[r])]);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape().record(
      "softmax_cross_entropy", Tensor::scalar(loss), {logits},
      [logits, probs = std::move(probs), tgt = std::move(tgt), w = std::move(w)](const Tensor& g, const Tensor&) {
        Tensor& gl = logits.tape().grad_buffer(logits);
        const double gv = g[0];
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          if (w[r] == 0.0) continue;
          auto p = probs.row_span(r);
          auto dst = gl.row_span(r);
          const double scale = gv * w[r];
          for (std::size_t c = 0; c < p.size(); ++c) dst[c] += scale * p[c];
          dst[static_cast<std::size_t>(tgt[r])] -= scale;
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets) {
  std::vector<double> ones(targets.size(), 1.0);
  return softmax_cross_entropy(logits, targets, ones);
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tv.rows()) {
      throw ShapeError("embedding: id " + std::to_string(id) + " outside table " + tv.shape_string());
    }
  }
  Tensor out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto src = tv.row_span(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape().record("embedding", std::move(out), {table},
                             [table, idv = std::move(idv)](const Tensor& g, const Tensor&) {
                               Tensor& gt = table.tape().grad_buffer(table);
                               for (std::size_t r = 0; r < idv.size(); ++r) {
                                 auto src = g.row_span(r);
                                 auto dst = gt.row_span(static_cast<std::size_t>(idv[r]));
                                 for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                               }
                             });
}

Var blend(Var a, Var b, const Tensor& mask) {
  require_same_tape(a, b, "blend");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "blend");
  if (mask.rows() != av.rows() || mask.cols() != 1) {
    throw ShapeError("blend: mask " + mask.shape_string() + " does not match " + av.shape_string());
  }
  Tensor out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const auto& src = mask[r] != 0.0 ? av : bv;
    std::copy_n(src.row_span(r).begin(), av.cols(), out.row_span(r).begin());
  }
  return a.tape().record("blend", std::move(out), {a, b}, [a, b, mask](const Tensor& g, const Tensor&) {
    Tape& t = a.tape();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      Var target = mask[r] != 0.0 ? a : b;
      if (!t.requires_grad(target)) continue;
      auto src = g.row_span(r);
      auto dst = t.grad_buffer(target).row_span(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var batch_norm_train(Var x, Var gamma, Var beta, double eps, BatchMoments* moments) {
  require_same_tape(x, gamma, "batch_norm");
  require_same_tape(x, beta, "batch_norm");
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t f = xv.cols();
  if (n < 2) throw ShapeError("batch_norm: training mode needs a batch of at least 2 rows");
  if (gamma.rows() != 1 || gamma.cols() != f || beta.rows() != 1 || beta.cols() != f) {
    throw ShapeError("batch_norm: gamma/beta must be [1x" + std::to_string(f) + "]");
  }
  Tensor mu(1, f), var(1, f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) mu[c] += xv(r, c);
  }
  for (std::size_t c = 0; c < f; ++c) mu[c] /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double d = xv(r, c) - mu[c];
      var[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < f; ++c) var[c] /= static_cast<double>(n);

  Tensor inv_std(1, f);
  for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
  Tensor xhat(n, f), out(n, f);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      xhat(r, c) = (xv(r, c) - mu[c]) * inv_std[c];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  if (moments != nullptr) *moments = {mu, var};
  return x.tape().record(
      "batch_norm", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& g, const Tensor&) {
        Tape& t = x.tape();
        const std::size_t rows = g.rows(), cols = g.cols();
        Tensor sum_g(1, cols), sum_g_xhat(1, cols);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            sum_g[c] += g(r, c);
            sum_g_xhat[c] += g(r, c) * xhat(r, c);
          }
        }
        if (t.requires_grad(gamma)) t.grad_buffer(gamma).add_in_place(sum_g_xhat);
        if (t.requires_grad(beta)) t.grad_buffer(beta).add_in_place(sum_g);
        if (t.requires_grad(x)) {
          const Tensor& gam = t.value(gamma);
          Tensor& gx = t.grad_buffer(x);
          const double m = static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
              gx(r, c) += gam[c] * inv_std[c] / m *
                          (m * g(r, c) - sum_g[c] - xhat(r, c) * sum_g_xhat[c]);
            }
          }
        }
      });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                    double eps) {
  require_same_tape(x, gamma, "batch_norm_eval");
  require_same_tape(x, beta, "batch_norm_eval");
  const Tensor& xv = x.value();
  const std::size_t f = xv.cols();
  for (const Tensor* p : {&gamma.value(), &beta.value(), &running_mean, &running_var}) {
    if (p->rows() != 1 || p->cols() != f) {
      throw ShapeError("batch_norm_eval: statistics must be [1x" + std::to_string(f) + "], got " +
                       p->shape_string());
    }
  }
  Tensor inv_std(1, f), xhat(xv.rows(), f), out(xv.rows(), f);
  for (std::size_t c = 0; c < f; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      xhat(r, c) = (xv(r, c) - running_mean[c]) * inv_std[c];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  return x.tape().record(
      "batch_norm_eval", std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](const Tensor& g, const Tensor&) {
        Tape& t = x.tape();
        const Tensor& gam = t.value(gamma);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) {
            if (t.requires_grad(x)) t.grad_buffer(x)(r, c) += g(r, c) * gam[c] * inv_std[c];
            if (t.requires_grad(gamma)) t.grad_buffer(gamma)[c] += g(r, c) * xhat(r, c);
            if (t.requires_grad(beta)) t.grad_buffer(beta)[c] += g(r, c);
          }
        }
      });
}

}  // namespace ld::ad
