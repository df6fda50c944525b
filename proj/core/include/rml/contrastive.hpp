#pragma once

#include <span>

#include "rml/tensor.hpp"

namespace rml {

struct ContrastiveConfig {
  double tau = 0.5;          // softmax temperature, must be > 0
  double norm_epsilon = 0.0; // added to row norms when > 0; zero-norm rows error otherwise

  void validate() const;
};

// Cosine similarity of two equal-length vectors; zero-norm input is an error.
double cosine_sim(std::span<const double> a, std::span<const double> b);

// Bidirectional InfoNCE alignment between two representation batches of the
// same samples (rows are paired). For each anchor the positive is its paired
// row in the other batch and the negatives are the other n-1 rows of *both*
// batches, 2(n-1) in total; both directions are averaged with weight 1/n
// each. A batch of one sample has no negatives and yields exactly 0.
Tensor rml_loss(const Tensor& z_a, const Tensor& z_b, const ContrastiveConfig& config,
                Tape* tape);

}  // namespace rml
