#include "rml/gradient_suite.hpp"

#include "rml/classification.hpp"
#include "rml/contrastive.hpp"
#include "rml/fusion.hpp"
#include "rml/ops.hpp"
#include "rml/perturbation.hpp"

namespace rml {

std::vector<GradientSuiteEntry> run_model_gradient_suite(double step, double tolerance) {
  FusionConfig config;
  config.view_count = 3;
  config.view_dims = {5, 7, 4};
  config.token_dim = 8;
  config.fused_dim = 8;
  config.dropout_rate = 0.2;

  RngStream init_rng(7);
  FusionModel model = init_fusion(config, init_rng);
  RngStream head_rng(11);
  const std::size_t classes = 3;
  ClassifierHead head = init_head(config.fused_dim, classes, head_rng);

  const std::size_t n = 4;
  RngStream data_rng(21);
  std::vector<Tensor> views;
  for (std::size_t d : config.view_dims) {
    Tensor t = Tensor::zeros({n, d});
    for (double& x : t.values()) x = data_rng.normal();
    views.push_back(std::move(t));
  }
  const std::vector<int> labels = {0, 1, 2, 1};

  PerturbationConfig perturb;
  perturb.noise_ratio = 0.3;
  perturb.noise_sigma = 0.4;
  perturb.unusable_ratio = 0.25;
  RngStream draw_rng(33);
  const PerturbationDraw noise_draw =
      resample_perturbation(perturb, draw_rng, n, config.view_dims);
  const PerturbationDraw mask_draw =
      resample_perturbation(perturb, draw_rng, n, config.view_dims);
  const RngStream dropout_frozen(55);
  const ContrastiveConfig align{0.5, 0.0};
  const double lambda = 0.7;

  const auto model_params = model.named_parameters();
  auto all_params = model_params;
  for (const auto& p : head.named_parameters()) all_params.push_back(p);

  struct Branches {
    Tensor clean, noise, mask;
  };
  auto forward_all = [&](Tape* tape) {
    RngStream dropout = dropout_frozen;
    Branches b;
    b.clean = fusion_forward(model, views, true, &dropout, tape);
    b.noise = fusion_forward(model, apply_noise(views, noise_draw), true, &dropout, tape);
    b.mask = fusion_forward(model, apply_mask(views, mask_draw), true, &dropout, tape);
    return b;
  };

  std::vector<GradientSuiteEntry> entries;

  entries.push_back(
      {"alignment-loss",
       grad_check(
           [&](Tape* tape) {
             Branches b = forward_all(tape);
             return rml_loss(b.noise, b.mask, align, tape);
           },
           model_params, step, tolerance)});

  entries.push_back(
      {"cross-entropy-plus-alignment",
       grad_check(
           [&](Tape* tape) {
             Branches b = forward_all(tape);
             Tensor loss = ce_loss(head_probs(head, b.clean, tape), labels, tape);
             return add(loss, scale(rml_loss(b.noise, b.mask, align, tape), lambda, tape),
                        tape);
           },
           all_params, step, tolerance)});

  entries.push_back(
      {"multi-branch-objective",
       grad_check(
           [&](Tape* tape) {
             Branches b = forward_all(tape);
             Tensor loss = ce_loss(head_probs(head, b.clean, tape), labels, tape);
             loss = add(loss, ce_loss(head_probs(head, b.noise, tape), labels, tape), tape);
             loss = add(loss, ce_loss(head_probs(head, b.mask, tape), labels, tape), tape);
             return add(loss, scale(rml_loss(b.noise, b.mask, align, tape), lambda, tape),
                        tape);
           },
           all_params, step, tolerance)});

  return entries;
}

bool all_passed(const std::vector<GradientSuiteEntry>& entries) {
  for (const auto& entry : entries) {
    if (!entry.report.pass) return false;
  }
  return true;
}

}  // namespace rml
