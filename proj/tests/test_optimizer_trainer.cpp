#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "rml/grad_check.hpp"
#include "rml/ops.hpp"
#include "rml/optimizer.hpp"
#include "rml/rng.hpp"
#include "rml/trainer.hpp"
#include "toy_host.hpp"

using namespace rml;

namespace {

std::vector<Tensor> random_views(const std::vector<std::size_t>& dims, std::size_t n,
                                 std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Tensor> views;
  for (std::size_t d : dims) {
    Tensor t = Tensor::zeros({n, d});
    for (double& x : t.values()) x = rng.normal();
    views.push_back(t);
  }
  return views;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.values()[i] != b.values()[i]) return false;
  }
  return true;
}

bool same_trace(const LossTrace& a, const LossTrace& b) {
  return a.steps == b.steps && a.values == b.values;
}

}  // namespace

TEST_CASE("adam: first two bias-corrected steps match hand-computed values") {
  Tensor p = Tensor::from_values({1}, {1.0}, true);
  AdamOptimizer opt({{"p", p}}, AdamConfig{0.1, 0.9, 0.999, 1e-8});

  p.grad()[0] = 3.0;
  opt.step();
  CHECK(p.values()[0] == doctest::Approx(0.9000000003333333).epsilon(1e-14));
  CHECK(opt.step_count() == 1);

  opt.zero_grad();
  p.grad()[0] = -1.0;
  opt.step();
  CHECK(p.values()[0] == doctest::Approx(0.8599781433169098).epsilon(1e-14));
  CHECK(opt.step_count() == 2);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  Tensor p = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  AdamOptimizer opt({{"p", p}}, AdamConfig{});
  opt.zero_grad();
  opt.step();
  CHECK(p.values()[0] == 1.0);
  CHECK(p.values()[1] == -2.0);
  CHECK(p.values()[2] == 0.5);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: non-finite gradients abort with the parameter named") {
  Tensor p = Tensor::from_values({2}, {1.0, 2.0}, true);
  AdamOptimizer opt({{"head.weight", p}}, AdamConfig{});
  p.grad()[1] = std::nan("");
  try {
    opt.step();
    FAIL("expected a gradient error");
  } catch (const std::runtime_error& err) {
    CHECK(std::string(err.what()).find("head.weight") != std::string::npos);
  }
}

TEST_CASE("adam: config validation") {
  CHECK_THROWS_AS((AdamConfig{0.0, 0.9, 0.999, 1e-8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((AdamConfig{1e-3, 1.0, 0.999, 1e-8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((AdamConfig{1e-3, 0.9, -0.1, 1e-8}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((AdamConfig{1e-3, 0.9, 0.999, 0.0}).validate(), std::invalid_argument);
  CHECK_NOTHROW((AdamConfig{}).validate());
}

TEST_CASE("adam: shrinks a quadratic objective") {
  Tensor p = Tensor::from_values({2}, {4.0, -3.0}, true);
  AdamOptimizer opt({{"p", p}}, AdamConfig{0.05, 0.9, 0.999, 1e-8});
  double first = 0.0, last = 0.0;
  for (int s = 0; s < 400; ++s) {
    const double f = p.values()[0] * p.values()[0] + p.values()[1] * p.values()[1];
    if (s == 0) first = f;
    last = f;
    opt.zero_grad();
    p.grad()[0] = 2.0 * p.values()[0];
    p.grad()[1] = 2.0 * p.values()[1];
    opt.step();
  }
  CHECK(last < 1e-2 * first);
}

TEST_CASE("train config: defaults, batch fallback, and validation") {
  TrainConfig tc;
  CHECK(tc.effective_batch(100) == 100);
  CHECK(tc.effective_batch(10000) == 256);
  tc.batch_size = 32;
  CHECK(tc.effective_batch(100) == 32);
  CHECK(tc.effective_batch(16) == 16);  // clamped to the dataset

  TrainConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = TrainConfig{};
  bad.lambda = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("shuffled_indices: permutation, deterministic, seed-sensitive") {
  RngStream a(5), b(5), c(6);
  auto pa = shuffled_indices(10, a);
  auto pb = shuffled_indices(10, b);
  auto pc = shuffled_indices(10, c);
  CHECK(pa == pb);
  CHECK(pa != pc);
  std::vector<std::size_t> sorted = pa;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("training: a seed pins down the whole trajectory") {
  const std::vector<std::size_t> dims = {4, 3};
  auto views = random_views(dims, 12, 301);

  FusionConfig fc;
  fc.token_dim = 6;
  fc.fused_dim = 5;
  fc.dropout_rate = 0.2;
  PerturbationConfig pc{0.3, 0.4, 0.25};
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  tc.learning_rate = 1e-3;
  tc.seed = 99;

  TrainResult r1 = train_self_supervised(views, fc, pc, tc);
  TrainResult r2 = train_self_supervised(views, fc, pc, tc);
  CHECK(same_trace(r1.trace, r2.trace));
  auto p1 = r1.model.named_parameters();
  auto p2 = r2.model.named_parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(bitwise_equal(p1[i].second, p2[i].second));
  }

  // trace covers epochs * ceil(12 / 5) steps, numbered from zero
  const std::size_t expected = 3 * 3;
  REQUIRE(r1.trace.steps.size() == expected);
  REQUIRE(r1.trace.values.size() == expected);
  for (std::size_t s = 0; s < expected; ++s) {
    CHECK(r1.trace.steps[s] == s);
    CHECK(std::isfinite(r1.trace.values[s]));
  }

  TrainConfig other = tc;
  other.seed = 100;
  TrainResult r3 = train_self_supervised(views, fc, pc, other);
  CHECK_FALSE(same_trace(r1.trace, r3.trace));
}

TEST_CASE("training: the alignment loss trends down") {
  const std::vector<std::size_t> dims = {6, 4, 5};
  auto views = random_views(dims, 24, 303);

  FusionConfig fc;
  fc.token_dim = 8;
  fc.fused_dim = 8;
  fc.dropout_rate = 0.1;
  PerturbationConfig pc{0.25, 0.4, 0.25};
  TrainConfig tc;
  tc.epochs = 40;
  tc.learning_rate = 3e-3;
  tc.seed = 7;

  TrainResult r = train_self_supervised(views, fc, pc, tc);
  const auto& v = r.trace.values;
  REQUIRE(v.size() == 40);
  const double head = std::accumulate(v.begin(), v.begin() + 5, 0.0) / 5.0;
  const double tail = std::accumulate(v.end() - 5, v.end(), 0.0) / 5.0;
  CHECK(tail < head);
  for (double x : v) CHECK(std::isfinite(x));
}

TEST_CASE("loss trace files round-trip exactly") {
  LossTrace trace;
  for (std::size_t s = 0; s < 20; ++s) {
    trace.steps.push_back(s);
    trace.values.push_back(std::exp(-double(s) / 7.0) * 1.2345678901234567 + 1e-17);
  }
  const auto path = std::filesystem::temp_directory_path() / "rml_trace_test.txt";
  write_loss_trace(path, trace);
  LossTrace loaded = read_loss_trace(path);
  CHECK(loaded.steps == trace.steps);
  REQUIRE(loaded.values.size() == trace.values.size());
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    CHECK(loaded.values[i] == trace.values[i]);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_loss_trace(path), std::runtime_error);
}

TEST_CASE("ablations: disabled branches fall back to clean inputs") {
  const std::vector<std::size_t> dims = {4, 3};
  auto views = random_views(dims, 10, 305);

  FusionConfig fc;
  fc.token_dim = 6;
  fc.fused_dim = 5;
  fc.dropout_rate = 0.0;
  TrainConfig tc;
  tc.epochs = 2;
  tc.learning_rate = 1e-3;
  tc.seed = 11;

  // with perturbations configured off, ablating the branches changes nothing:
  // the same draws are consumed and the applied views share the clean storage
  PerturbationConfig clean{0.0, 0.4, 0.0};
  AblationFlags both;
  both.no_noise_branch = true;
  both.no_unusable_branch = true;
  TrainResult plain = train_self_supervised(views, fc, clean, tc);
  TrainResult ablated = train_self_supervised(views, fc, clean, tc, both);
  CHECK(same_trace(plain.trace, ablated.trace));

  // with perturbations on, the ablation genuinely changes the objective
  PerturbationConfig active{0.5, 0.8, 0.5};
  TrainResult noisy = train_self_supervised(views, fc, active, tc);
  AblationFlags no_noise;
  no_noise.no_noise_branch = true;
  TrainResult noise_off = train_self_supervised(views, fc, active, tc, no_noise);
  CHECK_FALSE(same_trace(noisy.trace, noise_off.trace));

  // the attention ablation equals configuring the attention stage away
  AblationFlags no_att;
  no_att.no_attention = true;
  TrainResult flag = train_self_supervised(views, fc, active, tc, no_att);
  FusionConfig manual = fc;
  manual.use_attention = false;
  TrainResult direct = train_self_supervised(views, manual, active, tc);
  CHECK(same_trace(flag.trace, direct.trace));
  CHECK_FALSE(same_trace(flag.trace, noisy.trace));
}

TEST_CASE("training rejects zeroing when only one view exists") {
  auto views = random_views({5}, 8, 307);
  FusionConfig fc;
  fc.token_dim = 4;
  fc.fused_dim = 4;
  PerturbationConfig pc{0.2, 0.4, 0.25};
  TrainConfig tc;
  tc.epochs = 1;
  tc.seed = 1;
  CHECK_THROWS_AS(train_self_supervised(views, fc, pc, tc), std::invalid_argument);

  // one view with the zeroing branch disabled by ratio 0 is fine
  PerturbationConfig pc_ok{0.2, 0.4, 0.0};
  CHECK_NOTHROW(train_self_supervised(views, fc, pc_ok, tc));
}

TEST_CASE("inference helper matches the forward pass and ignores batching") {
  const std::vector<std::size_t> dims = {4, 3};
  auto views = random_views(dims, 9, 309);
  FusionConfig fc;
  fc.token_dim = 6;
  fc.fused_dim = 5;
  PerturbationConfig pc{0.3, 0.4, 0.25};
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 13;
  TrainResult r = train_self_supervised(views, fc, pc, tc);

  Tensor all = infer_representations(r.model, views);
  CHECK(bitwise_equal(all, fusion_forward(r.model, views, false, nullptr, nullptr)));
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<Tensor> one;
    for (const Tensor& v : views) one.push_back(gather_rows(v, {i}));
    Tensor row = infer_representations(r.model, one);
    for (std::size_t j = 0; j < row.size(); ++j) {
      CHECK(row.values()[j] == all.values()[i * all.cols() + j]);
    }
  }
}

TEST_CASE("regularizer: gradients check out with frozen randomness") {
  const std::vector<std::size_t> dims = {3, 4};
  RngStream data(311);
  std::vector<Tensor> hidden;
  for (std::size_t d : dims) {
    Tensor t = Tensor::zeros({5, d}, true);
    for (double& x : t.values()) x = data.normal();
    hidden.push_back(t);
  }
  FusionConfig fc;
  fc.view_count = 2;
  fc.view_dims = dims;
  fc.token_dim = 6;
  fc.fused_dim = 5;
  fc.dropout_rate = 0.2;
  RngStream init(313);
  FusionModel reg_model = init_fusion(fc, init);
  PerturbationConfig pc{0.4, 0.5, 0.4};

  auto params = reg_model.named_parameters();
  params.emplace_back("hidden0", hidden[0]);
  params.emplace_back("hidden1", hidden[1]);

  const RngStream frozen(317);
  auto f = [&](Tape* tape) {
    RngStream local = frozen;
    return regularizer_loss(hidden, reg_model, pc, 0.5, true, local, tape);
  };
  CHECK(grad_check(f, params, 1e-5, 1e-4).pass);
}

TEST_CASE("regularizer: task-only parameters receive no alignment gradient") {
  const std::vector<std::size_t> dims = {4, 3, 5};
  auto views = random_views(dims, 8, 401);
  RngStream host_rng(403);
  toy::Host host = toy::init_host(dims, 4, host_rng);

  FusionConfig fc;
  fc.view_count = 3;
  fc.view_dims = {4, 4, 4};
  fc.token_dim = 6;
  fc.fused_dim = 5;
  fc.dropout_rate = 0.0;
  RngStream align_init(405);
  FusionModel reg_model = init_fusion(fc, align_init);
  PerturbationConfig pc{0.3, 0.4, 0.3};
  RngStream reg_rng(407);

  Tape tape;
  auto hidden = toy::hidden_views(host, views, &tape);
  Tensor align = regularizer_loss(hidden, reg_model, pc, 0.5, true, reg_rng, &tape);
  tape.backward(align);

  // the task head is disconnected from the alignment term
  for (double g : host.task_w.grad()) CHECK(g == 0.0);

  // shared encoders and the fusion parameters are not
  double enc_norm = 0.0;
  for (const Tensor& e : host.encoders) {
    for (double g : e.grad()) enc_norm += g * g;
  }
  CHECK(enc_norm > 0.0);
  double fusion_norm = 0.0;
  for (const auto& [name, p] : reg_model.named_parameters()) {
    for (double g : p.grad()) fusion_norm += g * g;
  }
  CHECK(fusion_norm > 0.0);

  // conversely, the task loss never reaches the fusion parameters
  Tape task_tape;
  auto hidden2 = toy::hidden_views(host, views, &task_tape);
  RngStream target_rng(409);
  Tensor target = Tensor::zeros({8, 1});
  for (double& x : target.values()) x = target_rng.normal();
  Tensor task = toy::task_loss(host, hidden2, target, &task_tape);
  for (auto&& [name, p] : reg_model.named_parameters()) p.zero_grad();
  for (Tensor& e : host.encoders) e.zero_grad();
  host.task_w.zero_grad();
  task_tape.backward(task);
  for (const auto& [name, p] : reg_model.named_parameters()) {
    for (double g : p.grad()) CHECK(g == 0.0);
  }
  double task_norm = 0.0;
  for (double g : host.task_w.grad()) task_norm += g * g;
  CHECK(task_norm > 0.0);
}

TEST_CASE("regularizer: weight zero reproduces the plain host bit for bit") {
  const std::vector<std::size_t> dims = {4, 3};
  auto views = random_views(dims, 10, 411);
  RngStream target_rng(413);
  Tensor target = Tensor::zeros({10, 1});
  for (double& x : target.values()) x = target_rng.normal();
  PerturbationConfig pc{0.3, 0.4, 0.3};

  toy::JointRun with_zero = toy::run_joint(views, target, 0.0, 6, 21, pc, 0.5);

  // a run that never builds the alignment side at all
  RngStream host_rng = RngStream(21).derive("host-init");
  toy::Host host = toy::init_host(dims, 4, host_rng);
  auto params = toy::encoder_params(host);
  params.emplace_back("task_w", host.task_w);
  AdamOptimizer opt(params, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  std::vector<double> losses;
  for (std::size_t s = 0; s < 6; ++s) {
    Tape tape;
    auto hidden = toy::hidden_views(host, views, &tape);
    Tensor loss = toy::task_loss(host, hidden, target, &tape);
    losses.push_back(loss.item());
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }

  CHECK(with_zero.losses == losses);
  for (std::size_t m = 0; m < dims.size(); ++m) {
    CHECK(bitwise_equal(with_zero.host.encoders[m], host.encoders[m]));
  }
  CHECK(bitwise_equal(with_zero.host.task_w, host.task_w));

  // a positive weight genuinely changes the trajectory
  toy::JointRun with_reg = toy::run_joint(views, target, 0.5, 6, 21, pc, 0.5);
  CHECK_FALSE(bitwise_equal(with_reg.host.task_w, host.task_w));
  for (double l : with_reg.losses) CHECK(std::isfinite(l));
}
