#pragma once

#include <cstddef>
#include <vector>

#include "rml/rng.hpp"
#include "rml/tensor.hpp"

namespace rml {

struct KMeansConfig {
  std::size_t k = 0;
  std::size_t max_iter = 300;
  std::size_t restarts = 10;

  void validate() const;
};

struct ClusteringResult {
  std::vector<int> assignments;
  Tensor centers;  // [k, d]
  double inertia = 0.0;
  std::vector<double> inertia_history;  // winning restart, one entry per Lloyd pass
  std::size_t winning_restart = 0;
};

// Lloyd's algorithm with k-means++ seeding. Each restart uses its own derived
// rng stream; the winner is the restart with the smallest (inertia, restart
// index) pair, so results are reproducible even if restarts were to run
// concurrently. Ties in point-to-center distance resolve to the lowest
// center index, and a cluster left empty is reseeded with the point farthest
// from its current center.
ClusteringResult kmeans(const Tensor& points, const KMeansConfig& config, RngStream& rng);

}  // namespace rml
