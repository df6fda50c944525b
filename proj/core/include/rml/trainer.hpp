#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rml/contrastive.hpp"
#include "rml/fusion.hpp"
#include "rml/optimizer.hpp"
#include "rml/perturbation.hpp"
#include "rml/rng.hpp"

namespace rml {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 0;  // 0 means min(256, N)
  std::size_t epochs = 200;
  double tau = 0.5;
  double lambda = 1.0;  // weight of the alignment term in joint objectives
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  std::size_t effective_batch(std::size_t n) const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_epsilon}; }
};

struct LossTrace {
  std::vector<std::size_t> steps;
  std::vector<double> values;
};

void write_loss_trace(const std::filesystem::path& path, const LossTrace& trace);
LossTrace read_loss_trace(const std::filesystem::path& path);

struct AblationFlags {
  bool no_attention = false;        // identity token pass-through
  bool no_noise_branch = false;     // clean input replaces the noise branch
  bool no_unusable_branch = false;  // clean input replaces the masked branch
};

struct TrainResult {
  FusionModel model;
  LossTrace trace;
};

// Fisher-Yates permutation of 0..n-1 drawn from `rng`.
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng);

// Self-supervised training: every batch draws fresh noise and mask
// perturbations, embeds both corrupted copies, and aligns the two fused
// representations with the bidirectional InfoNCE loss. All randomness comes
// from independent streams derived from config.seed, so a seed pins down the
// whole trajectory. Perturbation draws are consumed identically whether or
// not an ablation flag disables a branch.
TrainResult train_self_supervised(const std::vector<Tensor>& views, FusionConfig fusion,
                                  const PerturbationConfig& perturb,
                                  const TrainConfig& train,
                                  const AblationFlags& ablation = {});

// Deterministic inference over a dataset; rows are evaluated independently.
Tensor infer_representations(const FusionModel& model, const std::vector<Tensor>& views);

// Alignment regularizer for an arbitrary host model: perturbs the host's
// per-view hidden representations (differentiably), fuses both branches with
// reg_model, and returns the alignment loss. Gradients flow into reg_model
// and back through `hidden` into the host's representation parameters; the
// host's task-specific parameters never appear in this term. Callers with
// lambda == 0 should skip the call entirely, which leaves the host's
// computation untouched. All randomness (perturbation draws and dropout)
// comes from reg_rng, which should be a stream independent of the host's.
Tensor regularizer_loss(const std::vector<Tensor>& hidden, const FusionModel& reg_model,
                        const PerturbationConfig& perturb, double tau, bool training,
                        RngStream& reg_rng, Tape* tape);

}  // namespace rml
