#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rml/tensor.hpp"

namespace rml {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_coord;
  std::size_t coords_checked = 0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central-difference verification of tape gradients. `f` must rebuild the
// graph from the current parameter values on each call (recording on the
// tape when one is supplied) and must be deterministic across calls: any
// stochastic pieces (dropout masks, perturbation draws) have to be frozen by
// the caller. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
// denominator.
GradCheckReport grad_check(const std::function<Tensor(Tape*)>& f,
                           std::span<const std::pair<std::string, Tensor>> params,
                           double step, double tolerance);

}  // namespace rml
