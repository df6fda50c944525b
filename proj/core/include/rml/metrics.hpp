#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rml {

// Clustering accuracy: the best one-to-one matching between predicted
// cluster ids and true class ids (optimal assignment over the contingency
// table), as a fraction of correctly matched samples.
double clustering_acc(const std::vector<int>& pred, const std::vector<int>& truth);

// Normalized mutual information with natural logarithms and sqrt(H*H)
// normalization. If either labeling has zero entropy, returns 1 when the two
// are identical as partitions and 0 otherwise.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

struct ClassificationReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_f1 = 0.0;
};

// Accuracy plus macro-averaged precision and F1 over all `classes` classes;
// undefined per-class ratios (0/0) count as 0.
ClassificationReport classification_metrics(const std::vector<int>& pred,
                                            const std::vector<int>& truth,
                                            std::size_t classes);

// "name=value" lines, one per metric, for stdout reporting.
std::string format_metrics_block(const std::vector<std::pair<std::string, double>>& metrics);

// JSON record with the metrics, the seed and a hash of the configuration,
// written next to other run outputs.
void write_metrics_record(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, double>>& metrics,
                          std::uint64_t seed, const std::string& config_hash);

// 16-hex-digit digest of a canonical configuration string.
std::string config_hash_hex(const std::string& canonical_config);

}  // namespace rml
