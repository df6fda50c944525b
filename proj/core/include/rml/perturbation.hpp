#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "rml/rng.hpp"
#include "rml/tensor.hpp"

namespace rml {

struct PerturbationConfig {
  double noise_ratio = 0.25;     // probability a (sample, view) cell gets noise
  double noise_sigma = 0.4;      // stddev of the additive Gaussian noise
  double unusable_ratio = 0.25;  // fraction of samples with views zeroed out

  void validate() const;
};

// One realized random draw: per-cell noise thresholds and offsets plus a
// view-availability mask. A draw can be applied repeatedly and applying it
// never mutates its input.
struct PerturbationDraw {
  std::size_t batch_size = 0;
  std::size_t view_count = 0;
  std::vector<std::size_t> view_dims;

  // Row-major [batch, view]; noise lands on cells with threshold < noise_ratio.
  std::vector<double> thresholds;
  std::vector<std::uint8_t> noise_applied;
  // Offsets for each noisy cell, in draw order: (sample-major, view-minor).
  struct NoiseCell {
    std::size_t sample;
    std::size_t view;
    std::vector<double> offset;
  };
  std::vector<NoiseCell> noise_cells;

  // Row-major [batch, view]; 0 marks a zeroed (unusable) view. Exactly
  // round(unusable_ratio * batch) rows contain a zero and every row keeps at
  // least one available view.
  std::vector<std::uint8_t> mask;

  std::size_t masked_sample_count() const;
};

// Draws thresholds, offsets and the availability mask for one batch. With a
// single view an unusable_ratio > 0 is infeasible (a zeroed view would leave
// the sample empty) and raises an error.
PerturbationDraw resample_perturbation(const PerturbationConfig& config, RngStream& rng,
                                       std::size_t batch_size,
                                       const std::vector<std::size_t>& view_dims);

// Additive-noise branch: selected cells become x + offset, everything else is
// copied through untouched. Differentiable when a tape is supplied.
std::vector<Tensor> apply_noise(const std::vector<Tensor>& views,
                                const PerturbationDraw& draw, Tape* tape = nullptr);

// Unusable branch: masked views are zeroed whole-row, everything else copied.
std::vector<Tensor> apply_mask(const std::vector<Tensor>& views,
                               const PerturbationDraw& draw, Tape* tape = nullptr);

// Convenience wrappers that draw and immediately apply one branch.
std::pair<std::vector<Tensor>, PerturbationDraw> noise_perturb(
    const std::vector<Tensor>& views, const PerturbationConfig& config, RngStream& rng,
    Tape* tape = nullptr);
std::pair<std::vector<Tensor>, PerturbationDraw> unusable_perturb(
    const std::vector<Tensor>& views, const PerturbationConfig& config, RngStream& rng,
    Tape* tape = nullptr);

}  // namespace rml
