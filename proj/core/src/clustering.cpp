#include "rml/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rml {
namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double sum = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

struct Run {
  std::vector<int> assignments;
  std::vector<double> centers;
  double inertia = std::numeric_limits<double>::infinity();
  std::vector<double> inertia_history;
};

Run run_once(const double* x, std::size_t n, std::size_t d, const KMeansConfig& config,
             RngStream rng) {
  const std::size_t k = config.k;
  std::vector<double> centers(k * d);

  // k-means++ seeding.
  {
    const std::size_t first = rng.uniform_int(n);
    std::copy(x + first * d, x + (first + 1) * d, centers.begin());
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(x + i * d, centers.data(), d);
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (double w : dist) total += w;
      std::size_t chosen;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += dist[i];
          if (acc > target) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = rng.uniform_int(n);  // all points coincide with a center
      }
      std::copy(x + chosen * d, x + (chosen + 1) * d, centers.begin() + c * d);
      for (std::size_t i = 0; i < n; ++i) {
        dist[i] = std::min(dist[i], sq_dist(x + i * d, centers.data() + c * d, d));
      }
    }
  }

  Run run;
  run.assignments.assign(n, -1);
  std::vector<int> next(n, -1);
  std::vector<double> sums(k * d);
  std::vector<std::size_t> counts(k);

  for (std::size_t iter = 0; iter < config.max_iter; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = sq_dist(x + i * d, centers.data() + c * d, d);
        if (dd < best) {
          best = dd;
          best_c = static_cast<int>(c);
        }
      }
      next[i] = best_c;
      inertia += best;
    }
    run.inertia_history.push_back(inertia);
    run.inertia = inertia;
    const bool converged = next == run.assignments;
    run.assignments = next;
    if (converged) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(next[i]);
      ++counts[c];
      const double* xi = x + i * d;
      double* s = sums.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += xi[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sums[c * d + j] * inv;
      } else {
        // Reseed an empty cluster with the point farthest from its center.
        std::size_t far_i = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t a = static_cast<std::size_t>(next[i]);
          const double dd = sq_dist(x + i * d, centers.data() + a * d, d);
          if (dd > far_d) {
            far_d = dd;
            far_i = i;
          }
        }
        std::copy(x + far_i * d, x + (far_i + 1) * d, centers.begin() + c * d);
      }
    }
  }
  run.centers = std::move(centers);
  return run;
}

}  // namespace

void KMeansConfig::validate() const {
  if (k == 0) throw std::invalid_argument("KMeansConfig: k must be >= 1");
  if (max_iter == 0) throw std::invalid_argument("KMeansConfig: max_iter must be >= 1");
  if (restarts == 0) throw std::invalid_argument("KMeansConfig: restarts must be >= 1");
}

ClusteringResult kmeans(const Tensor& points, const KMeansConfig& config, RngStream& rng) {
  config.validate();
  if (points.rank() != 2) {
    throw std::invalid_argument("kmeans: expected [n x d] points, got " +
                                shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (n < config.k) {
    throw std::invalid_argument("kmeans: " + std::to_string(n) + " points for k = " +
                                std::to_string(config.k));
  }
  const double* x = points.values().data();

  Run best;
  std::size_t best_restart = 0;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    Run run = run_once(x, n, d, config, rng.derive("restart", r));
    if (run.inertia < best.inertia) {
      best = std::move(run);
      best_restart = r;
    }
  }

  ClusteringResult result;
  result.assignments = std::move(best.assignments);
  result.centers = Tensor::from_values({config.k, d}, std::move(best.centers));
  result.inertia = best.inertia;
  result.inertia_history = std::move(best.inertia_history);
  result.winning_restart = best_restart;
  return result;
}

}  // namespace rml
