// Microbenchmarks for the hot paths: the fusion forward pass (inference and
// training), one full alignment-objective gradient step, the contrastive
// loss itself, perturbation resampling and k-means. Batch size is the
// benchmark argument where it matters.

#include <benchmark/benchmark.h>

#include <vector>

#include "rml/clustering.hpp"
#include "rml/contrastive.hpp"
#include "rml/fusion.hpp"
#include "rml/ops.hpp"
#include "rml/perturbation.hpp"
#include "rml/rng.hpp"
#include "rml/tensor.hpp"

namespace {

using namespace rml;

const std::vector<std::size_t> kViewDims = {20, 50, 10};

FusionModel make_model(std::size_t width) {
  FusionConfig config;
  config.view_count = kViewDims.size();
  config.view_dims = kViewDims;
  config.token_dim = width;
  config.fused_dim = width;
  RngStream rng(1);
  return init_fusion(config, rng);
}

std::vector<Tensor> make_views(std::size_t n) {
  RngStream rng(2);
  std::vector<Tensor> views;
  for (std::size_t d : kViewDims) {
    Tensor t = Tensor::zeros({n, d});
    for (double& x : t.values()) x = rng.normal();
    views.push_back(t);
  }
  return views;
}

void BM_FusionInference(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  FusionModel model = make_model(64);
  auto views = make_views(n);
  for (auto _ : state) {
    Tensor z = fusion_forward(model, views, false, nullptr, nullptr);
    benchmark::DoNotOptimize(z.values().data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_FusionInference)->Arg(16)->Arg(64)->Arg(256);

void BM_FusionTrainingForward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  FusionModel model = make_model(64);
  auto views = make_views(n);
  RngStream dropout(3);
  for (auto _ : state) {
    Tape tape;
    Tensor z = fusion_forward(model, views, true, &dropout, &tape);
    benchmark::DoNotOptimize(z.values().data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_FusionTrainingForward)->Arg(16)->Arg(64)->Arg(256);

// One alignment training step without the optimizer: perturb both branches,
// embed them, take the contrastive loss and backpropagate to every weight.
void BM_AlignmentStep(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  FusionModel model = make_model(64);
  auto views = make_views(n);
  PerturbationConfig perturb;
  ContrastiveConfig loss_config;
  RngStream rng(4);
  for (auto _ : state) {
    Tape tape;
    auto [noisy, noise_draw] = noise_perturb(views, perturb, rng, &tape);
    auto [masked, mask_draw] = unusable_perturb(views, perturb, rng, &tape);
    Tensor z_noise = fusion_forward(model, noisy, true, &rng, &tape);
    Tensor z_mask = fusion_forward(model, masked, true, &rng, &tape);
    Tensor loss = rml_loss(z_noise, z_mask, loss_config, &tape);
    for (auto&& [name, p] : model.named_parameters()) p.zero_grad();
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_AlignmentStep)->Arg(16)->Arg(64)->Arg(256);

void BM_AlignmentLoss(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  RngStream rng(5);
  Tensor a = Tensor::zeros({n, 64});
  Tensor b = Tensor::zeros({n, 64});
  for (double& x : a.values()) x = rng.normal();
  for (double& x : b.values()) x = rng.normal();
  ContrastiveConfig config;
  for (auto _ : state) {
    Tensor loss = rml_loss(a, b, config, nullptr);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_AlignmentLoss)->Arg(64)->Arg(256)->Arg(1024);

void BM_PerturbationResample(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  PerturbationConfig config;
  RngStream rng(6);
  for (auto _ : state) {
    PerturbationDraw draw = resample_perturbation(config, rng, n, kViewDims);
    benchmark::DoNotOptimize(draw.masked_sample_count());
  }
}
BENCHMARK(BM_PerturbationResample)->Arg(64)->Arg(256)->Arg(1024);

void BM_KMeans(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  RngStream data_rng(7);
  Tensor points = Tensor::zeros({n, 32});
  for (double& x : points.values()) x = data_rng.normal();
  KMeansConfig config;
  config.k = 5;
  config.restarts = 2;
  for (auto _ : state) {
    RngStream rng(8);
    ClusteringResult result = kmeans(points, config, rng);
    benchmark::DoNotOptimize(result.inertia);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n);
}
BENCHMARK(BM_KMeans)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
