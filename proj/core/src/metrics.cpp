#include "rml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "rml/rng.hpp"

namespace rml {
namespace {

void check_paired(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + " labels");
  }
  if (a.empty()) throw std::invalid_argument(std::string(op) + ": empty labelings");
  for (int x : a) {
    if (x < 0) throw std::invalid_argument(std::string(op) + ": negative label");
  }
  for (int x : b) {
    if (x < 0) throw std::invalid_argument(std::string(op) + ": negative label");
  }
}

// Minimum-cost assignment on a square matrix via the potentials method.
std::vector<int> hungarian_min(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

double clustering_acc(const std::vector<int>& pred, const std::vector<int>& truth) {
  check_paired("clustering_acc", pred, truth);
  const int rows = *std::max_element(pred.begin(), pred.end()) + 1;
  const int cols = *std::max_element(truth.begin(), truth.end()) + 1;
  const int side = std::max(rows, cols);
  std::vector<std::vector<double>> counts(side, std::vector<double>(side, 0.0));
  for (std::size_t i = 0; i < pred.size(); ++i) counts[pred[i]][truth[i]] += 1.0;

  std::vector<std::vector<double>> cost(side, std::vector<double>(side));
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) cost[i][j] = -counts[i][j];
  }
  const std::vector<int> assign = hungarian_min(cost);
  double matched = 0.0;
  for (int i = 0; i < side; ++i) {
    if (assign[i] >= 0) matched += counts[i][assign[i]];
  }
  return matched / static_cast<double>(pred.size());
}

namespace {

bool identical_partitions(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> fwd, rev;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [fit, fnew] = fwd.emplace(a[i], b[i]);
    if (!fnew && fit->second != b[i]) return false;
    auto [rit, rnew] = rev.emplace(b[i], a[i]);
    if (!rnew && rit->second != a[i]) return false;
  }
  return true;
}

}  // namespace

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  check_paired("nmi", a, b);
  const std::size_t n = a.size();
  std::map<std::pair<int, int>, std::size_t> joint;
  std::map<int, std::size_t> ca, cb;
  for (std::size_t i = 0; i < n; ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  const double dn = static_cast<double>(n);
  double ha = 0.0, hb = 0.0;
  for (auto& [label, count] : ca) {
    const double p = count / dn;
    ha -= p * std::log(p);
  }
  for (auto& [label, count] : cb) {
    const double p = count / dn;
    hb -= p * std::log(p);
  }
  if (ha == 0.0 || hb == 0.0) {
    return identical_partitions(a, b) ? 1.0 : 0.0;
  }
  double mi = 0.0;
  for (auto& [key, count] : joint) {
    const double pij = count / dn;
    const double pi = ca[key.first] / dn;
    const double pj = cb[key.second] / dn;
    mi += pij * std::log(pij / (pi * pj));
  }
  return mi / std::sqrt(ha * hb);
}

ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth,
                                            std::size_t classes) {
  check_paired("classification_metrics", pred, truth);
  if (classes == 0) throw std::invalid_argument("classification_metrics: classes must be >= 1");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (static_cast<std::size_t>(pred[i]) >= classes ||
        static_cast<std::size_t>(truth[i]) >= classes) {
      throw std::out_of_range("classification_metrics: label outside [0, " +
                              std::to_string(classes) + ") at index " + std::to_string(i));
    }
  }
  std::vector<double> tp(classes, 0.0), fp(classes, 0.0), fn(classes, 0.0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) {
      ++correct;
      tp[pred[i]] += 1.0;
    } else {
      fp[pred[i]] += 1.0;
      fn[truth[i]] += 1.0;
    }
  }
  ClassificationReport report;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  double psum = 0.0, fsum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double pdenom = tp[c] + fp[c];
    const double rdenom = tp[c] + fn[c];
    const double precision = pdenom > 0.0 ? tp[c] / pdenom : 0.0;
    const double recall = rdenom > 0.0 ? tp[c] / rdenom : 0.0;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    psum += precision;
    fsum += f1;
  }
  report.macro_precision = psum / static_cast<double>(classes);
  report.macro_f1 = fsum / static_cast<double>(classes);
  return report;
}

std::string format_metrics_block(
    const std::vector<std::pair<std::string, double>>& metrics) {
  std::string out;
  char buf[96];
  for (const auto& [name, value] : metrics) {
    std::snprintf(buf, sizeof buf, "%s=%.12g\n", name.c_str(), value);
    out += buf;
  }
  return out;
}

void write_metrics_record(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, double>>& metrics,
                          std::uint64_t seed, const std::string& config_hash) {
  nlohmann::json record;
  record["seed"] = seed;
  record["config_hash"] = config_hash;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, value] : metrics) m[name] = value;
  record["metrics"] = m;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("metrics record: cannot open " + path.string() +
                                     " for writing");
  out << record.dump(2) << '\n';
  if (!out) throw std::runtime_error("metrics record: write to " + path.string() + " failed");
}

std::string config_hash_hex(const std::string& canonical_config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config)));
  return std::string(buf);
}

}  // namespace rml
