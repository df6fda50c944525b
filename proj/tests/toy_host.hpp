#pragma once

// A deliberately tiny supervised host model used to exercise the alignment
// regularizer: per-view linear encoders produce hidden representations, a
// linear head regresses a scalar target from their sum. The encoder weights
// are shared between the task loss and the alignment term, the head belongs
// to the task alone, and the fusion network belongs to the alignment alone.

#include <cstdint>
#include <utility>
#include <vector>

#include "rml/ops.hpp"
#include "rml/optimizer.hpp"
#include "rml/rng.hpp"
#include "rml/trainer.hpp"

namespace toy {

struct Host {
  std::vector<rml::Tensor> encoders;  // per view: [D_m, hidden]
  rml::Tensor task_w;                 // [hidden, 1]
  std::size_t hidden = 0;
};

inline Host init_host(const std::vector<std::size_t>& view_dims, std::size_t hidden,
                      rml::RngStream& rng) {
  Host host;
  host.hidden = hidden;
  for (std::size_t d : view_dims) {
    rml::Tensor w = rml::Tensor::zeros({d, hidden}, true);
    for (double& x : w.values()) x = 0.3 * rng.normal();
    host.encoders.push_back(w);
  }
  host.task_w = rml::Tensor::zeros({hidden, 1}, true);
  for (double& x : host.task_w.values()) x = 0.3 * rng.normal();
  return host;
}

inline std::vector<std::pair<std::string, rml::Tensor>> encoder_params(const Host& h) {
  std::vector<std::pair<std::string, rml::Tensor>> out;
  for (std::size_t m = 0; m < h.encoders.size(); ++m) {
    out.emplace_back("encoder" + std::to_string(m), h.encoders[m]);
  }
  return out;
}

inline std::vector<rml::Tensor> hidden_views(const Host& host,
                                             const std::vector<rml::Tensor>& views,
                                             rml::Tape* tape) {
  std::vector<rml::Tensor> hidden;
  for (std::size_t m = 0; m < views.size(); ++m) {
    hidden.push_back(rml::matmul(views[m], host.encoders[m], tape));
  }
  return hidden;
}

inline rml::Tensor task_loss(const Host& host, const std::vector<rml::Tensor>& hidden,
                             const rml::Tensor& target, rml::Tape* tape) {
  rml::Tensor pooled = rml::sum_tokens(rml::stack_tokens(hidden, tape), tape);
  rml::Tensor pred = rml::matmul(pooled, host.task_w, tape);
  return rml::mse_loss(pred, target, tape);
}

struct JointRun {
  Host host;
  rml::FusionModel align_model;
  std::vector<double> losses;
};

// A fixed-step full-batch joint training loop. With lambda == 0 the
// alignment term is skipped entirely, so the host's trajectory must be
// bit-identical to a run that never constructs the alignment model's
// gradients at all.
inline JointRun run_joint(const std::vector<rml::Tensor>& views,
                          const rml::Tensor& target, double lambda, std::size_t steps,
                          std::uint64_t seed, const rml::PerturbationConfig& perturb,
                          double tau) {
  using namespace rml;
  RngStream master(seed);
  RngStream host_rng = master.derive("host-init");
  RngStream align_init = master.derive("alignment-init");
  RngStream align_rng = master.derive("alignment");

  std::vector<std::size_t> dims;
  for (const Tensor& v : views) dims.push_back(v.cols());
  const std::size_t hidden = 4;

  JointRun run;
  run.host = init_host(dims, hidden, host_rng);

  FusionConfig fc;
  fc.view_count = views.size();
  fc.view_dims = std::vector<std::size_t>(views.size(), hidden);
  fc.token_dim = 6;
  fc.fused_dim = 5;
  fc.dropout_rate = 0.0;
  run.align_model = init_fusion(fc, align_init);

  auto params = encoder_params(run.host);
  params.emplace_back("task_w", run.host.task_w);
  for (const auto& p : run.align_model.named_parameters()) params.push_back(p);
  AdamOptimizer opt(params, AdamConfig{0.01, 0.9, 0.999, 1e-8});

  for (std::size_t s = 0; s < steps; ++s) {
    Tape tape;
    auto hidden_batch = hidden_views(run.host, views, &tape);
    Tensor loss = task_loss(run.host, hidden_batch, target, &tape);
    if (lambda > 0.0) {
      Tensor align = regularizer_loss(hidden_batch, run.align_model, perturb, tau, true,
                                      align_rng, &tape);
      loss = add(loss, scale(align, lambda, &tape), &tape);
    }
    run.losses.push_back(loss.item());
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  return run;
}

}  // namespace toy
