#pragma once

#include <string>
#include <vector>

#include "rml/grad_check.hpp"

namespace rml {

struct GradientSuiteEntry {
  std::string name;
  GradCheckReport report;
};

// End-to-end gradient verification on a small three-view model (dims 5/7/4,
// token and fused width 8, batch of 4): the alignment loss alone, cross-
// entropy plus the weighted alignment term, and the multi-branch objective,
// each differentiated with respect to every parameter (head included) and
// compared against central differences with frozen perturbation draws and
// dropout masks.
std::vector<GradientSuiteEntry> run_model_gradient_suite(double step = 1e-5,
                                                         double tolerance = 1e-3);

bool all_passed(const std::vector<GradientSuiteEntry>& entries);

}  // namespace rml
