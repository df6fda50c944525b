#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rml/fusion.hpp"
#include "rml/metrics.hpp"
#include "rml/perturbation.hpp"
#include "rml/rng.hpp"
#include "rml/trainer.hpp"

namespace rml {

// Linear classifier on fused representations, producing softmax probabilities.
struct ClassifierHead {
  Tensor weight;  // [in_dim, classes]
  Tensor bias;    // [classes]

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

ClassifierHead init_head(std::size_t in_dim, std::size_t classes, RngStream& rng);

Tensor head_probs(const ClassifierHead& head, const Tensor& z, Tape* tape);

// Mean cross-entropy of integer labels under row-stochastic probabilities;
// probabilities are clipped to [1e-9, 1] inside the log.
Tensor ce_loss(const Tensor& probs, const std::vector<int>& labels, Tape* tape);

// Multi-branch cross-entropy: the sum of the clean batch's CE and the CE of
// the noise- and mask-perturbed batches, one fresh draw per branch pair.
// When z_noise/z_mask are supplied, the two perturbed fused batches are
// returned so callers can reuse them (e.g. for an alignment term) without
// extra forward passes.
Tensor mce_loss(const FusionModel& model, const ClassifierHead& head,
                const std::vector<Tensor>& views, const std::vector<int>& labels,
                const PerturbationConfig& perturb, bool training, RngStream& rng,
                Tape* tape, Tensor* z_noise = nullptr, Tensor* z_mask = nullptr);

struct NoisyLabelSet {
  std::vector<int> clean;
  std::vector<int> noisy;
  std::vector<std::size_t> corrupted;  // indices whose label was redrawn
  double rate = 0.0;
};

// Symmetric label noise: exactly round(rate * N) samples get their label
// redrawn uniformly over all `classes` classes (possibly landing on the
// original value).
NoisyLabelSet make_symmetric_noise(const std::vector<int>& labels, double rate,
                                   std::size_t classes, RngStream& rng);

// Seeded stratified split; every class present in `labels` keeps at least
// one sample on the training side.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double train_fraction, RngStream& rng);

enum class LossKind { cross_entropy, multi_branch_cross_entropy };

struct ClassifierTrainResult {
  FusionModel model;
  ClassifierHead head;
  ClassificationReport report;  // on the held-out split, against clean labels
  LossTrace trace;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

// Supervised training of the fusion network plus a linear head. Labels on
// the training side can be corrupted with symmetric noise; evaluation always
// uses the clean held-out labels. With lambda > 0 the objective adds
// lambda * alignment loss between the two perturbed fused batches; with
// lambda == 0 and plain CE no perturbed branches are computed at all.
ClassifierTrainResult train_classifier(const std::vector<Tensor>& views,
                                       const std::vector<int>& labels,
                                       std::size_t classes, FusionConfig fusion,
                                       const PerturbationConfig& perturb,
                                       const TrainConfig& train, LossKind loss_kind,
                                       double label_noise_rate,
                                       double train_fraction = 0.7);

std::vector<int> argmax_rows(const Tensor& probs);

}  // namespace rml
