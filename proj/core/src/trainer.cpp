#include "rml/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rml/ops.hpp"

namespace rml {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (epochs == 0) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("TrainConfig: tau must be > 0");
  if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
  adam().validate();
}

std::size_t TrainConfig::effective_batch(std::size_t n) const {
  const std::size_t base = batch_size ? batch_size : 256;
  return std::max<std::size_t>(1, std::min(base, n));
}

void write_loss_trace(const std::filesystem::path& path, const LossTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("loss trace: cannot open " + path.string() +
                                     " for writing");
  char buf[64];
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g\n", trace.steps[i], trace.values[i]);
    out << buf;
  }
  if (!out) throw std::runtime_error("loss trace: write to " + path.string() + " failed");
}

LossTrace read_loss_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("loss trace: cannot open " + path.string());
  LossTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t step;
    double value;
    if (!(row >> step >> value)) {
      throw std::runtime_error("loss trace: malformed line '" + line + "' in " +
                               path.string());
    }
    trace.steps.push_back(step);
    trace.values.push_back(value);
  }
  return trace;
}

namespace {

void check_training_views(const std::vector<Tensor>& views) {
  if (views.empty()) throw std::invalid_argument("train: no views");
  for (std::size_t m = 0; m < views.size(); ++m) {
    if (views[m].rank() != 2) {
      throw std::invalid_argument("train: view " + std::to_string(m) +
                                  " has shape " + shape_str(views[m].shape()) +
                                  ", expected a matrix");
    }
    if (views[m].dim(0) != views[0].dim(0)) {
      throw std::invalid_argument("train: view " + std::to_string(m) + " has " +
                                  std::to_string(views[m].dim(0)) + " rows, view 0 has " +
                                  std::to_string(views[0].dim(0)));
    }
  }
}

}  // namespace

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(order[i], order[j]);
  }
  return order;
}

TrainResult train_self_supervised(const std::vector<Tensor>& views, FusionConfig fusion,
                                  const PerturbationConfig& perturb,
                                  const TrainConfig& train, const AblationFlags& ablation) {
  train.validate();
  perturb.validate();
  check_training_views(views);

  const std::size_t n = views[0].dim(0);
  if (fusion.view_count == 0) {
    fusion.view_count = views.size();
    fusion.view_dims.clear();
    for (const Tensor& v : views) fusion.view_dims.push_back(v.cols());
  }
  if (ablation.no_attention) fusion.use_attention = false;
  fusion.validate();

  RngStream master(train.seed);
  RngStream init_rng = master.derive("model-init");
  RngStream shuffle_rng = master.derive("shuffle");
  RngStream perturb_rng = master.derive("perturbation");
  RngStream dropout_rng = master.derive("dropout");

  FusionModel model = init_fusion(fusion, init_rng);
  AdamOptimizer optimizer(model.named_parameters(), train.adam());
  const ContrastiveConfig align{train.tau, 0.0};
  const std::size_t batch = train.effective_batch(n);

  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + count);
      std::vector<Tensor> batch_views;
      batch_views.reserve(views.size());
      for (const Tensor& v : views) batch_views.push_back(gather_rows(v, idx));

      // Both draws are taken every step so ablations change only what is
      // applied, never the random stream.
      PerturbationDraw noise_draw =
          resample_perturbation(perturb, perturb_rng, count, fusion.view_dims);
      PerturbationDraw mask_draw =
          resample_perturbation(perturb, perturb_rng, count, fusion.view_dims);
      const std::vector<Tensor> noisy =
          ablation.no_noise_branch ? batch_views : apply_noise(batch_views, noise_draw);
      const std::vector<Tensor> masked =
          ablation.no_unusable_branch ? batch_views : apply_mask(batch_views, mask_draw);

      Tape tape;
      Tensor z_noise = fusion_forward(model, noisy, true, &dropout_rng, &tape);
      Tensor z_mask = fusion_forward(model, masked, true, &dropout_rng, &tape);
      Tensor loss = rml_loss(z_noise, z_mask, align, &tape);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", step " + std::to_string(step));
      }
      optimizer.zero_grad();
      tape.backward(loss);
      optimizer.step();
      result.trace.steps.push_back(step);
      result.trace.values.push_back(value);
      ++step;
    }
  }
  result.model = std::move(model);
  return result;
}

Tensor infer_representations(const FusionModel& model, const std::vector<Tensor>& views) {
  return fusion_forward(model, views, false, nullptr, nullptr);
}

Tensor regularizer_loss(const std::vector<Tensor>& hidden, const FusionModel& reg_model,
                        const PerturbationConfig& perturb, double tau, bool training,
                        RngStream& reg_rng, Tape* tape) {
  perturb.validate();
  if (hidden.empty()) throw std::invalid_argument("regularizer_loss: no views");
  const std::size_t n = hidden[0].dim(0);
  std::vector<std::size_t> dims;
  dims.reserve(hidden.size());
  for (const Tensor& h : hidden) dims.push_back(h.cols());

  PerturbationDraw noise_draw = resample_perturbation(perturb, reg_rng, n, dims);
  PerturbationDraw mask_draw = resample_perturbation(perturb, reg_rng, n, dims);
  const std::vector<Tensor> noisy = apply_noise(hidden, noise_draw, tape);
  const std::vector<Tensor> masked = apply_mask(hidden, mask_draw, tape);

  Tensor z_noise = fusion_forward(reg_model, noisy, training, &reg_rng, tape);
  Tensor z_mask = fusion_forward(reg_model, masked, training, &reg_rng, tape);
  return rml_loss(z_noise, z_mask, ContrastiveConfig{tau, 0.0}, tape);
}

}  // namespace rml
