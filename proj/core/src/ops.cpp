#include "rml/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace rml {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap map2d(const detail::TensorStorage& s, std::size_t rows, std::size_t cols,
                  std::size_t offset = 0) {
  return ConstMatMap(s.values.data() + offset, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

MatMap grad2d(detail::TensorStorage& s, std::size_t rows, std::size_t cols,
              std::size_t offset = 0) {
  return MatMap(s.grad.data() + offset, static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

ConstMatMap gradc2d(const detail::TensorStorage& s, std::size_t rows, std::size_t cols,
                    std::size_t offset = 0) {
  return ConstMatMap(s.grad.data() + offset, static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()) + " differ");
  }
}

bool want_grad(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() < 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul: expected operands of rank >=2 and rank 2, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  if (k != b.dim(0)) {
    throw std::invalid_argument("matmul: inner dimensions of " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()) + " do not agree");
  }
  Shape out_shape = a.shape();
  out_shape.back() = p;
  const bool track = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(std::move(out_shape), track);
  {
    MatMap c(out.values().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
    c.noalias() = map2d(*a.storage(), m, k) * map2d(*b.storage(), k, p);
  }
  if (track) {
    auto sa = a.storage(), sb = b.storage(), sc = out.storage();
    tape->record("matmul", sc, [sa, sb, sc, m, k, p] {
      auto dc = gradc2d(*sc, m, p);
      if (sa->requires_grad) {
        grad2d(*sa, m, k).noalias() += dc * map2d(*sb, k, p).transpose();
      }
      if (sb->requires_grad) {
        grad2d(*sb, k, p).noalias() += map2d(*sa, m, k).transpose() * dc;
      }
    });
  }
  return out;
}

namespace {

Tensor bmm_impl(const char* name, const Tensor& a, const Tensor& b, bool transpose_b,
                Tape* tape) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw std::invalid_argument(std::string(name) + ": expected rank-3 operands with equal "
                                "batch, got " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t p = transpose_b ? b.dim(1) : b.dim(2);
  if (k != bk) {
    throw std::invalid_argument(std::string(name) + ": inner dimensions of " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                " do not agree");
  }
  const bool track = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros({batch, m, p}, track);
  {
    double* cd = out.values().data();
    for (std::size_t i = 0; i < batch; ++i) {
      MatMap c(cd + i * m * p, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
      auto ai = map2d(*a.storage(), m, k, i * m * k);
      if (transpose_b) {
        c.noalias() = ai * map2d(*b.storage(), p, k, i * p * k).transpose();
      } else {
        c.noalias() = ai * map2d(*b.storage(), k, p, i * k * p);
      }
    }
  }
  if (track) {
    auto sa = a.storage(), sb = b.storage(), sc = out.storage();
    tape->record(name, sc, [sa, sb, sc, batch, m, k, p, transpose_b] {
      for (std::size_t i = 0; i < batch; ++i) {
        auto dc = gradc2d(*sc, m, p, i * m * p);
        auto ai = map2d(*sa, m, k, i * m * k);
        if (transpose_b) {
          auto bi = map2d(*sb, p, k, i * p * k);
          if (sa->requires_grad) grad2d(*sa, m, k, i * m * k).noalias() += dc * bi;
          if (sb->requires_grad) grad2d(*sb, p, k, i * p * k).noalias() += dc.transpose() * ai;
        } else {
          auto bi = map2d(*sb, k, p, i * k * p);
          if (sa->requires_grad) grad2d(*sa, m, k, i * m * k).noalias() += dc * bi.transpose();
          if (sb->requires_grad) grad2d(*sb, k, p, i * k * p).noalias() += ai.transpose() * dc;
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape) {
  return bmm_impl("bmm", a, b, false, tape);
}

Tensor bmm_nt(const Tensor& a, const Tensor& b, Tape* tape) {
  return bmm_impl("bmm_nt", a, b, true, tape);
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  require_same_shape("add", a, b);
  const bool track = want_grad(tape, {&a, &b});
  Tensor out = Tensor::from_values(a.shape(), std::vector<double>(a.values().begin(),
                                                                  a.values().end()),
                                   track);
  {
    auto ov = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  }
  if (track) {
    auto sa = a.storage(), sb = b.storage(), sc = out.storage();
    tape->record("add", sc, [sa, sb, sc] {
      const std::size_t n = sc->grad.size();
      if (sa->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) sa->grad[i] += sc->grad[i];
      }
      if (sb->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) sb->grad[i] += sc->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  require_same_shape("mul", a, b);
  const bool track = want_grad(tape, {&a, &b});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  }
  if (track) {
    auto sa = a.storage(), sb = b.storage(), sc = out.storage();
    tape->record("mul", sc, [sa, sb, sc] {
      const std::size_t n = sc->grad.size();
      if (sa->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) sa->grad[i] += sc->grad[i] * sb->values[i];
      }
      if (sb->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) sb->grad[i] += sc->grad[i] * sa->values[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor, Tape* tape) {
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = factor * av[i];
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("scale", sc, [sa, sc, factor] {
      for (std::size_t i = 0; i < sc->grad.size(); ++i) sa->grad[i] += factor * sc->grad[i];
    });
  }
  return out;
}

Tensor add_row_bias(const Tensor& a, const Tensor& bias, Tape* tape) {
  if (bias.rank() != 1 || bias.dim(0) != a.cols()) {
    throw std::invalid_argument("add_row_bias: bias " + shape_str(bias.shape()) +
                                " does not match last axis of " + shape_str(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const bool track = want_grad(tape, {&a, &bias});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] = av[r * cols + c] + bv[c];
    }
  }
  if (track) {
    auto sa = a.storage(), sb = bias.storage(), sc = out.storage();
    tape->record("add_row_bias", sc, [sa, sb, sc, rows, cols] {
      if (sa->requires_grad) {
        for (std::size_t i = 0; i < sc->grad.size(); ++i) sa->grad[i] += sc->grad[i];
      }
      if (sb->requires_grad) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) sb->grad[c] += sc->grad[r * cols + c];
        }
      }
    });
  }
  return out;
}

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor gelu(const Tensor& a, Tape* tape) {
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
      ov[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * kInvSqrt2));
    }
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("gelu", sc, [sa, sc] {
      for (std::size_t i = 0; i < sc->grad.size(); ++i) {
        const double x = sa->values[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        sa->grad[i] += sc->grad[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, bool training, RngStream* rng, Tape* tape) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) +
                                " outside [0, 1)");
  }
  if (!training || rate == 0.0) {
    const bool track = want_grad(tape, {&a});
    Tensor out = Tensor::from_values(a.shape(), std::vector<double>(a.values().begin(),
                                                                    a.values().end()),
                                     track);
    if (track) {
      auto sa = a.storage(), sc = out.storage();
      tape->record("dropout", sc, [sa, sc] {
        for (std::size_t i = 0; i < sc->grad.size(); ++i) sa->grad[i] += sc->grad[i];
      });
    }
    return out;
  }
  if (!rng) throw std::invalid_argument("dropout: rng required in training mode");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.size());
  for (double& f : *mask) f = rng->uniform() < rate ? 0.0 : keep_scale;
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * (*mask)[i];
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("dropout", sc, [sa, sc, mask] {
      for (std::size_t i = 0; i < sc->grad.size(); ++i) {
        sa->grad[i] += sc->grad[i] * (*mask)[i];
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a, Tape* tape) {
  if (a.rank() < 2) {
    throw std::invalid_argument("softmax_rows: expected rank >= 2, got " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    auto av = a.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = av.data() + r * cols;
      double* y = ov.data() + r * cols;
      double mx = x[0];
      for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        y[c] = std::exp(x[c] - mx);
        sum += y[c];
      }
      const double inv = 1.0 / sum;
      for (std::size_t c = 0; c < cols; ++c) y[c] *= inv;
    }
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("softmax_rows", sc, [sa, sc, rows, cols] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = sc->values.data() + r * cols;
        const double* dy = sc->grad.data() + r * cols;
        double* dx = sa->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - dot);
      }
    });
  }
  return out;
}

Tensor stack_tokens(const std::vector<Tensor>& tokens, Tape* tape) {
  if (tokens.empty()) throw std::invalid_argument("stack_tokens: no inputs");
  const std::size_t n = tokens[0].dim(0), d = tokens[0].dim(1);
  bool any_grad = false;
  for (const Tensor& t : tokens) {
    if (t.rank() != 2 || t.dim(0) != n || t.dim(1) != d) {
      throw std::invalid_argument("stack_tokens: inputs must all be [n, d], got " +
                                  shape_str(t.shape()) + " vs " +
                                  shape_str(tokens[0].shape()));
    }
    any_grad = any_grad || t.requires_grad();
  }
  const std::size_t v = tokens.size();
  const bool track = tape && any_grad;
  Tensor out = Tensor::zeros({n, v, d}, track);
  {
    auto ov = out.values();
    for (std::size_t m = 0; m < v; ++m) {
      auto tv = tokens[m].values();
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(tv.begin() + i * d, tv.begin() + (i + 1) * d,
                  ov.begin() + (i * v + m) * d);
      }
    }
  }
  if (track) {
    std::vector<std::shared_ptr<detail::TensorStorage>> ins;
    ins.reserve(v);
    for (const Tensor& t : tokens) ins.push_back(t.storage());
    auto sc = out.storage();
    tape->record("stack_tokens", sc, [ins, sc, n, v, d] {
      for (std::size_t m = 0; m < v; ++m) {
        if (!ins[m]->requires_grad) continue;
        for (std::size_t i = 0; i < n; ++i) {
          const double* src = sc->grad.data() + (i * v + m) * d;
          double* dst = ins[m]->grad.data() + i * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

Tensor sum_tokens(const Tensor& a, Tape* tape) {
  if (a.rank() != 3) {
    throw std::invalid_argument("sum_tokens: expected rank-3 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t n = a.dim(0), v = a.dim(1), d = a.dim(2);
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros({n, d}, track);
  {
    auto ov = out.values();
    auto av = a.values();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t m = 0; m < v; ++m) {
        const double* src = av.data() + (i * v + m) * d;
        double* dst = ov.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    }
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("sum_tokens", sc, [sa, sc, n, v, d] {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < v; ++m) {
          const double* src = sc->grad.data() + i * d;
          double* dst = sa->grad.data() + (i * v + m) * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a, Tape* tape) {
  const bool track = want_grad(tape, {&a});
  double total = 0.0;
  for (double x : a.values()) total += x;
  Tensor out = Tensor::scalar(total, track);
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("sum_all", sc, [sa, sc] {
      const double g = sc->grad[0];
      for (double& dx : sa->grad) dx += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a, Tape* tape) {
  if (a.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  const bool track = want_grad(tape, {&a});
  double total = 0.0;
  for (double x : a.values()) total += x;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(total * inv, track);
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("mean_all", sc, [sa, sc, inv] {
      const double g = sc->grad[0] * inv;
      for (double& dx : sa->grad) dx += g;
    });
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape) {
  require_same_shape("mse_loss", pred, target);
  const bool track = want_grad(tape, {&pred});
  double total = 0.0;
  auto pv = pred.values();
  auto tv = target.values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double diff = pv[i] - tv[i];
    total += diff * diff;
  }
  const double inv = 1.0 / static_cast<double>(pred.size());
  Tensor out = Tensor::scalar(total * inv, track);
  if (track) {
    auto sp = pred.storage(), st = target.storage(), sc = out.storage();
    tape->record("mse_loss", sc, [sp, st, sc, inv] {
      const double g = sc->grad[0] * 2.0 * inv;
      for (std::size_t i = 0; i < sp->grad.size(); ++i) {
        sp->grad[i] += g * (sp->values[i] - st->values[i]);
      }
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& a, double epsilon, Tape* tape) {
  if (a.rank() != 2) {
    throw std::invalid_argument("l2_normalize_rows: expected rank-2 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  auto norms = std::make_shared<std::vector<double>>(rows);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = av[r * cols + c];
      sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm == 0.0 && epsilon == 0.0) {
      throw std::domain_error("l2_normalize_rows: row " + std::to_string(r) +
                              " has zero norm");
    }
    (*norms)[r] = norm;
  }
  const bool track = want_grad(tape, {&a});
  Tensor out = Tensor::zeros(a.shape(), track);
  {
    auto ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const double inv = 1.0 / ((*norms)[r] + epsilon);
      for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] = av[r * cols + c] * inv;
    }
  }
  if (track) {
    auto sa = a.storage(), sc = out.storage();
    tape->record("l2_normalize_rows", sc, [sa, sc, norms, epsilon, rows, cols] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double norm = (*norms)[r];
        const double denom = norm + epsilon;
        const double* x = sa->values.data() + r * cols;
        const double* dy = sc->grad.data() + r * cols;
        double* dx = sa->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * x[c];
        const double shrink = norm > 0.0 ? dot / (denom * denom * norm) : 0.0;
        for (std::size_t c = 0; c < cols; ++c) dx[c] += dy[c] / denom - x[c] * shrink;
      }
    });
  }
  return out;
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& labels, double clip,
                      Tape* tape) {
  if (probs.rank() != 2) {
    throw std::invalid_argument("nll_from_probs: expected rank-2 probabilities, got " +
                                shape_str(probs.shape()));
  }
  const std::size_t n = probs.dim(0), classes = probs.dim(1);
  if (labels.size() != n) {
    throw std::invalid_argument("nll_from_probs: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  }
  auto pv = probs.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("nll_from_probs: label " + std::to_string(y) + " at row " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    const double p = std::min(std::max(pv[i * classes + y], clip), 1.0);
    total -= std::log(p);
  }
  const double inv = 1.0 / static_cast<double>(n);
  const bool track = want_grad(tape, {&probs});
  Tensor out = Tensor::scalar(total * inv, track);
  if (track) {
    auto sp = probs.storage(), sc = out.storage();
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    tape->record("nll_from_probs", sc, [sp, sc, labels_copy, clip, inv, classes] {
      const double g = sc->grad[0] * inv;
      for (std::size_t i = 0; i < labels_copy->size(); ++i) {
        const std::size_t idx = i * classes + static_cast<std::size_t>((*labels_copy)[i]);
        const double p = sp->values[idx];
        if (p > clip && p <= 1.0) sp->grad[idx] -= g / p;
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  if (a.rank() != 2) {
    throw std::invalid_argument("gather_rows: expected rank-2 input, got " +
                                shape_str(a.shape()));
  }
  const std::size_t cols = a.cols();
  Tensor out = Tensor::zeros({rows.size(), cols});
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= a.dim(0)) {
      throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) +
                              " outside [0, " + std::to_string(a.dim(0)) + ")");
    }
    std::copy(av.begin() + rows[i] * cols, av.begin() + (rows[i] + 1) * cols,
              ov.begin() + i * cols);
  }
  return out;
}

bool all_finite(const Tensor& a) {
  for (double x : a.values()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace rml
