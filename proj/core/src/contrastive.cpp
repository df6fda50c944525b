#include "rml/contrastive.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "rml/ops.hpp"

namespace rml {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;

// Accumulates one direction of the objective. For anchor i of the `own`
// branch the candidates are, in order: the paired positive, the n-1 other
// rows of the anchor's own branch, the n-1 other rows of the opposite
// branch. Softmax weights are written into the gradient accumulators scaled
// by inv_tau / n (the diagonal of g_cross collects p_pos - 1).
double direction_loss(const RowMat& s_own, const RowMat& s_cross, bool cross_rows,
                      double inv_tau, RowMat* g_own, RowMat* g_cross) {
  const Eigen::Index n = s_own.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  std::vector<double> logits;
  logits.reserve(static_cast<std::size_t>(2 * n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    logits.clear();
    const double pos = s_cross(i, i) * inv_tau;
    logits.push_back(pos);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) logits.push_back(s_own(i, j) * inv_tau);
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) logits.push_back((cross_rows ? s_cross(i, j) : s_cross(j, i)) * inv_tau);
    }
    double mx = logits[0];
    for (double t : logits) mx = std::max(mx, t);
    double sum = 0.0;
    for (double t : logits) sum += std::exp(t - mx);
    total += -pos + mx + std::log(sum);

    if (g_own) {
      const double scale = inv_tau * inv_n / sum;
      std::size_t c = 0;
      (*g_cross)(i, i) += scale * std::exp(logits[c++] - mx) - inv_tau * inv_n;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) (*g_own)(i, j) += scale * std::exp(logits[c++] - mx);
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        if (cross_rows) {
          (*g_cross)(i, j) += scale * std::exp(logits[c++] - mx);
        } else {
          (*g_cross)(j, i) += scale * std::exp(logits[c++] - mx);
        }
      }
    }
  }
  return total * inv_n;
}

Tensor nce_alignment(const Tensor& u, const Tensor& w, double tau, Tape* tape) {
  const std::size_t n = u.dim(0), d = u.dim(1);
  const double inv_tau = 1.0 / tau;
  ConstMatMap um(u.values().data(), n, d);
  ConstMatMap wm(w.values().data(), n, d);
  RowMat s_ab = um * wm.transpose();
  RowMat s_aa = um * um.transpose();
  RowMat s_bb = wm * wm.transpose();

  const bool track = tape && (u.requires_grad() || w.requires_grad());
  auto g_ab = track ? std::make_shared<RowMat>(RowMat::Zero(n, n)) : nullptr;
  auto g_aa = track ? std::make_shared<RowMat>(RowMat::Zero(n, n)) : nullptr;
  auto g_bb = track ? std::make_shared<RowMat>(RowMat::Zero(n, n)) : nullptr;

  const double loss_a = direction_loss(s_aa, s_ab, true, inv_tau, g_aa.get(), g_ab.get());
  const double loss_b = direction_loss(s_bb, s_ab, false, inv_tau, g_bb.get(), g_ab.get());
  Tensor out = Tensor::scalar(loss_a + loss_b, track);

  if (track) {
    auto su = u.storage(), sw = w.storage(), sc = out.storage();
    tape->record("nce_alignment", sc, [su, sw, sc, g_ab, g_aa, g_bb, n, d] {
      const double g = sc->grad[0];
      ConstMatMap um(su->values.data(), n, d);
      ConstMatMap wm(sw->values.data(), n, d);
      if (su->requires_grad) {
        MatMap du(su->grad.data(), n, d);
        du.noalias() += g * ((*g_ab) * wm);
        du.noalias() += g * (((*g_aa) + g_aa->transpose()) * um);
      }
      if (sw->requires_grad) {
        MatMap dw(sw->grad.data(), n, d);
        dw.noalias() += g * (g_ab->transpose() * um);
        dw.noalias() += g * (((*g_bb) + g_bb->transpose()) * wm);
      }
    });
  }
  return out;
}

}  // namespace

void ContrastiveConfig::validate() const {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("ContrastiveConfig: tau must be > 0, got " +
                                std::to_string(tau));
  }
  if (norm_epsilon < 0.0) {
    throw std::invalid_argument("ContrastiveConfig: norm_epsilon must be >= 0");
  }
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_sim: vectors of length " +
                                std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  }
  if (a.empty()) throw std::invalid_argument("cosine_sim: empty vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::domain_error("cosine_sim: zero-norm input");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor rml_loss(const Tensor& z_a, const Tensor& z_b, const ContrastiveConfig& config,
                Tape* tape) {
  config.validate();
  if (z_a.rank() != 2 || z_b.rank() != 2 || z_a.shape() != z_b.shape()) {
    throw std::invalid_argument("rml_loss: batches must share shape [n x d], got " +
                                shape_str(z_a.shape()) + " and " + shape_str(z_b.shape()));
  }
  if (z_a.dim(0) == 0) throw std::invalid_argument("rml_loss: empty batch");
  Tensor u = l2_normalize_rows(z_a, config.norm_epsilon, tape);
  Tensor w = l2_normalize_rows(z_b, config.norm_epsilon, tape);
  return nce_alignment(u, w, config.tau, tape);
}

}  // namespace rml
