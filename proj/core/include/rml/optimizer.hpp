#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rml/tensor.hpp"

namespace rml {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdamState {
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots;
  std::size_t step_count = 0;
};

// Adam with bias correction over a fixed parameter list. step() consumes the
// gradients currently stored on the parameters; a non-finite gradient aborts
// with the parameter's name and the step index.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, AdamConfig config);

  void zero_grad();
  void step();

  const AdamState& state() const { return state_; }
  std::size_t step_count() const { return state_.step_count; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace rml
