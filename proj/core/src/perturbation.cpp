#include "rml/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace rml {
namespace {

void check_views_against_draw(const char* op, const std::vector<Tensor>& views,
                              const PerturbationDraw& draw) {
  if (views.size() != draw.view_count) {
    throw std::invalid_argument(std::string(op) + ": draw covers " +
                                std::to_string(draw.view_count) + " views, got " +
                                std::to_string(views.size()));
  }
  for (std::size_t m = 0; m < views.size(); ++m) {
    if (views[m].rank() != 2 || views[m].dim(0) != draw.batch_size ||
        views[m].cols() != draw.view_dims[m]) {
      throw std::invalid_argument(std::string(op) + ": view " + std::to_string(m) +
                                  " has shape " + shape_str(views[m].shape()) +
                                  ", draw expects [" + std::to_string(draw.batch_size) +
                                  " x " + std::to_string(draw.view_dims[m]) + "]");
    }
  }
}

}  // namespace

void PerturbationConfig::validate() const {
  if (noise_ratio < 0.0 || noise_ratio > 1.0) {
    throw std::invalid_argument("PerturbationConfig: noise_ratio " +
                                std::to_string(noise_ratio) + " outside [0, 1]");
  }
  if (unusable_ratio < 0.0 || unusable_ratio > 1.0) {
    throw std::invalid_argument("PerturbationConfig: unusable_ratio " +
                                std::to_string(unusable_ratio) + " outside [0, 1]");
  }
  if (noise_sigma < 0.0) {
    throw std::invalid_argument("PerturbationConfig: noise_sigma must be >= 0");
  }
}

std::size_t PerturbationDraw::masked_sample_count() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < batch_size; ++i) {
    for (std::size_t m = 0; m < view_count; ++m) {
      if (mask[i * view_count + m] == 0) {
        ++count;
        break;
      }
    }
  }
  return count;
}

PerturbationDraw resample_perturbation(const PerturbationConfig& config, RngStream& rng,
                                       std::size_t batch_size,
                                       const std::vector<std::size_t>& view_dims) {
  config.validate();
  const std::size_t v = view_dims.size();
  if (v == 0) throw std::invalid_argument("resample_perturbation: no views");
  if (v == 1 && config.unusable_ratio > 0.0) {
    throw std::invalid_argument(
        "resample_perturbation: unusable_ratio > 0 is infeasible with a single view");
  }

  PerturbationDraw draw;
  draw.batch_size = batch_size;
  draw.view_count = v;
  draw.view_dims = view_dims;
  draw.thresholds.resize(batch_size * v);
  draw.noise_applied.assign(batch_size * v, 0);
  draw.mask.assign(batch_size * v, 1);

  for (std::size_t i = 0; i < batch_size; ++i) {
    for (std::size_t m = 0; m < v; ++m) {
      const double u = rng.uniform();
      draw.thresholds[i * v + m] = u;
      if (u < config.noise_ratio) {
        draw.noise_applied[i * v + m] = 1;
        PerturbationDraw::NoiseCell cell;
        cell.sample = i;
        cell.view = m;
        cell.offset.resize(view_dims[m]);
        for (double& o : cell.offset) o = rng.normal(0.0, config.noise_sigma);
        draw.noise_cells.push_back(std::move(cell));
      }
    }
  }

  const std::size_t target =
      static_cast<std::size_t>(std::llround(config.unusable_ratio *
                                            static_cast<double>(batch_size)));
  if (target > 0) {
    std::vector<std::size_t> order(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) order[i] = i;
    for (std::size_t i = 0; i < target; ++i) {
      const std::size_t j = i + rng.uniform_int(batch_size - i);
      std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> view_order(v);
    for (std::size_t i = 0; i < target; ++i) {
      const std::size_t sample = order[i];
      const std::size_t drop = 1 + rng.uniform_int(v - 1);
      for (std::size_t m = 0; m < v; ++m) view_order[m] = m;
      for (std::size_t m = 0; m < drop; ++m) {
        const std::size_t j = m + rng.uniform_int(v - m);
        std::swap(view_order[m], view_order[j]);
        draw.mask[sample * v + view_order[m]] = 0;
      }
    }
  }
  return draw;
}

std::vector<Tensor> apply_noise(const std::vector<Tensor>& views,
                                const PerturbationDraw& draw, Tape* tape) {
  check_views_against_draw("apply_noise", views, draw);
  std::vector<Tensor> out;
  out.reserve(views.size());
  std::vector<std::size_t> cells_per_view(views.size(), 0);
  for (const auto& cell : draw.noise_cells) ++cells_per_view[cell.view];

  for (std::size_t m = 0; m < views.size(); ++m) {
    const Tensor& x = views[m];
    if (cells_per_view[m] == 0) {
      // Untouched view: share the input tensor as-is.
      out.push_back(x);
      continue;
    }
    const bool track = tape && x.requires_grad();
    Tensor y = Tensor::from_values(
        x.shape(), std::vector<double>(x.values().begin(), x.values().end()), track);
    auto yv = y.values();
    const std::size_t cols = x.cols();
    for (const auto& cell : draw.noise_cells) {
      if (cell.view != m) continue;
      double* row = yv.data() + cell.sample * cols;
      for (std::size_t c = 0; c < cols; ++c) row[c] += cell.offset[c];
    }
    if (track) {
      // Additive offsets: the adjoint passes straight through.
      auto sx = x.storage();
      auto sy = y.storage();
      tape->record("apply_noise", sy, [sx, sy] {
        for (std::size_t i = 0; i < sy->grad.size(); ++i) sx->grad[i] += sy->grad[i];
      });
    }
    out.push_back(std::move(y));
  }
  return out;
}

std::vector<Tensor> apply_mask(const std::vector<Tensor>& views,
                               const PerturbationDraw& draw, Tape* tape) {
  check_views_against_draw("apply_mask", views, draw);
  std::vector<Tensor> out;
  out.reserve(views.size());
  for (std::size_t m = 0; m < views.size(); ++m) {
    const Tensor& x = views[m];
    bool any_zero = false;
    for (std::size_t i = 0; i < draw.batch_size; ++i) {
      if (draw.mask[i * draw.view_count + m] == 0) {
        any_zero = true;
        break;
      }
    }
    if (!any_zero) {
      out.push_back(x);
      continue;
    }
    const bool track = tape && x.requires_grad();
    Tensor y = Tensor::from_values(
        x.shape(), std::vector<double>(x.values().begin(), x.values().end()), track);
    auto yv = y.values();
    const std::size_t cols = x.cols();
    for (std::size_t i = 0; i < draw.batch_size; ++i) {
      if (draw.mask[i * draw.view_count + m] == 0) {
        std::fill(yv.begin() + i * cols, yv.begin() + (i + 1) * cols, 0.0);
      }
    }
    if (track) {
      auto sx = x.storage();
      auto sy = y.storage();
      auto mask = std::make_shared<std::vector<std::uint8_t>>(draw.mask);
      const std::size_t v = draw.view_count;
      const std::size_t n = draw.batch_size;
      tape->record("apply_mask", sy, [sx, sy, mask, m, v, n, cols] {
        for (std::size_t i = 0; i < n; ++i) {
          if ((*mask)[i * v + m] == 0) continue;
          const double* src = sy->grad.data() + i * cols;
          double* dst = sx->grad.data() + i * cols;
          for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
        }
      });
    }
    out.push_back(std::move(y));
  }
  return out;
}

std::pair<std::vector<Tensor>, PerturbationDraw> noise_perturb(
    const std::vector<Tensor>& views, const PerturbationConfig& config, RngStream& rng,
    Tape* tape) {
  std::vector<std::size_t> dims;
  dims.reserve(views.size());
  for (const Tensor& v : views) dims.push_back(v.cols());
  const std::size_t n = views.empty() ? 0 : views[0].dim(0);
  PerturbationDraw draw = resample_perturbation(config, rng, n, dims);
  return {apply_noise(views, draw, tape), std::move(draw)};
}

std::pair<std::vector<Tensor>, PerturbationDraw> unusable_perturb(
    const std::vector<Tensor>& views, const PerturbationConfig& config, RngStream& rng,
    Tape* tape) {
  std::vector<std::size_t> dims;
  dims.reserve(views.size());
  for (const Tensor& v : views) dims.push_back(v.cols());
  const std::size_t n = views.empty() ? 0 : views[0].dim(0);
  PerturbationDraw draw = resample_perturbation(config, rng, n, dims);
  return {apply_mask(views, draw, tape), std::move(draw)};
}

}  // namespace rml
