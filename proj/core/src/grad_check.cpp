#include "rml/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rml {

GradCheckReport grad_check(const std::function<Tensor(Tape*)>& f,
                           std::span<const std::pair<std::string, Tensor>> params,
                           double step, double tolerance) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  const double probe1 = f(nullptr).item();
  const double probe2 = f(nullptr).item();
  if (probe1 != probe2) {
    throw std::runtime_error(
        "grad_check: function returned different values across evaluations; "
        "freeze all random draws before checking");
  }

  for (const auto& [name, p] : params) {
    if (!p.requires_grad()) {
      throw std::invalid_argument("grad_check: parameter '" + name +
                                  "' does not track gradients");
    }
    const_cast<Tensor&>(p).zero_grad();
  }

  Tape tape;
  Tensor loss = f(&tape);
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor values = params[pi].second;
    auto span = values.values();
    for (std::size_t i = 0; i < span.size(); ++i) {
      const double saved = span[i];
      span[i] = saved + step;
      const double up = f(nullptr).item();
      span[i] = saved - step;
      const double down = f(nullptr).item();
      span[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_coord = params[pi].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace rml
