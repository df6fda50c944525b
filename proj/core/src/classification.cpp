#include "rml/classification.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "rml/contrastive.hpp"
#include "rml/ops.hpp"

namespace rml {
namespace {

constexpr double kProbClip = 1e-9;

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& x : t.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ClassifierHead::named_parameters() const {
  return {{"head.weight", weight}, {"head.bias", bias}};
}

ClassifierHead init_head(std::size_t in_dim, std::size_t classes, RngStream& rng) {
  if (in_dim == 0 || classes == 0) {
    throw std::invalid_argument("init_head: dimensions must be >= 1");
  }
  ClassifierHead head;
  head.weight = uniform_fan_in({in_dim, classes}, in_dim, rng);
  head.bias = Tensor::zeros({classes}, true);
  return head;
}

Tensor head_probs(const ClassifierHead& head, const Tensor& z, Tape* tape) {
  return softmax_rows(add_row_bias(matmul(z, head.weight, tape), head.bias, tape), tape);
}

Tensor ce_loss(const Tensor& probs, const std::vector<int>& labels, Tape* tape) {
  return nll_from_probs(probs, labels, kProbClip, tape);
}

Tensor mce_loss(const FusionModel& model, const ClassifierHead& head,
                const std::vector<Tensor>& views, const std::vector<int>& labels,
                const PerturbationConfig& perturb, bool training, RngStream& rng,
                Tape* tape, Tensor* z_noise, Tensor* z_mask) {
  if (views.empty()) throw std::invalid_argument("mce_loss: no views");
  const std::size_t n = views[0].dim(0);
  std::vector<std::size_t> dims;
  dims.reserve(views.size());
  for (const Tensor& v : views) dims.push_back(v.cols());

  PerturbationDraw noise_draw = resample_perturbation(perturb, rng, n, dims);
  PerturbationDraw mask_draw = resample_perturbation(perturb, rng, n, dims);
  const std::vector<Tensor> noisy = apply_noise(views, noise_draw);
  const std::vector<Tensor> masked = apply_mask(views, mask_draw);

  Tensor z_clean = fusion_forward(model, views, training, &rng, tape);
  Tensor zn = fusion_forward(model, noisy, training, &rng, tape);
  Tensor zm = fusion_forward(model, masked, training, &rng, tape);
  if (z_noise) *z_noise = zn;
  if (z_mask) *z_mask = zm;

  Tensor loss = ce_loss(head_probs(head, z_clean, tape), labels, tape);
  loss = add(loss, ce_loss(head_probs(head, zn, tape), labels, tape), tape);
  return add(loss, ce_loss(head_probs(head, zm, tape), labels, tape), tape);
}

NoisyLabelSet make_symmetric_noise(const std::vector<int>& labels, double rate,
                                   std::size_t classes, RngStream& rng) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("make_symmetric_noise: rate " + std::to_string(rate) +
                                " outside [0, 1]");
  }
  if (classes == 0) throw std::invalid_argument("make_symmetric_noise: classes must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::out_of_range("make_symmetric_noise: label " + std::to_string(labels[i]) +
                              " at index " + std::to_string(i) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }
  NoisyLabelSet set;
  set.clean = labels;
  set.noisy = labels;
  set.rate = rate;
  const std::size_t n = labels.size();
  const std::size_t target =
      static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  if (target == 0) return set;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(order[i], order[j]);
  }
  set.corrupted.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
  std::sort(set.corrupted.begin(), set.corrupted.end());
  for (std::size_t idx : set.corrupted) {
    set.noisy[idx] = static_cast<int>(rng.uniform_int(classes));
  }
  return set;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double train_fraction, RngStream& rng) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw std::invalid_argument("stratified_split: train_fraction " +
                                std::to_string(train_fraction) + " outside (0, 1)");
  }
  if (labels.empty()) throw std::invalid_argument("stratified_split: no labels");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<std::size_t> train_idx, test_idx;
  for (auto& [label, members] : by_class) {
    for (std::size_t i = 0; i + 1 < members.size(); ++i) {
      const std::size_t j = i + rng.uniform_int(members.size() - i);
      std::swap(members[i], members[j]);
    }
    const std::size_t take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(train_fraction *
                                              static_cast<double>(members.size()))),
        1, members.size());
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + take);
    test_idx.insert(test_idx.end(), members.begin() + take, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {std::move(train_idx), std::move(test_idx)};
}

std::vector<int> argmax_rows(const Tensor& probs) {
  const std::size_t n = probs.rows(), c = probs.cols();
  std::vector<int> out(n);
  auto pv = probs.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = pv.data() + i * c;
    int best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);
    }
    out[i] = best;
  }
  return out;
}

ClassifierTrainResult train_classifier(const std::vector<Tensor>& views,
                                       const std::vector<int>& labels,
                                       std::size_t classes, FusionConfig fusion,
                                       const PerturbationConfig& perturb,
                                       const TrainConfig& train, LossKind loss_kind,
                                       double label_noise_rate, double train_fraction) {
  train.validate();
  perturb.validate();
  if (views.empty()) throw std::invalid_argument("train_classifier: no views");
  const std::size_t n = views[0].dim(0);
  if (labels.size() != n) {
    throw std::invalid_argument("train_classifier: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " samples");
  }
  if (classes < 2) throw std::invalid_argument("train_classifier: need >= 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("train_classifier: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
  if (fusion.view_count == 0) {
    fusion.view_count = views.size();
    fusion.view_dims.clear();
    for (const Tensor& v : views) fusion.view_dims.push_back(v.cols());
  }
  fusion.validate();

  RngStream master(train.seed);
  RngStream split_rng = master.derive("split");
  RngStream label_rng = master.derive("label-noise");
  RngStream init_rng = master.derive("model-init");
  RngStream head_rng = master.derive("head-init");
  RngStream shuffle_rng = master.derive("shuffle");
  // One stream drives both perturbation draws and dropout masks here.
  RngStream sto_rng = master.derive("perturbation");

  auto [train_idx, test_idx] = stratified_split(labels, train_fraction, split_rng);

  std::vector<int> train_labels(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) train_labels[i] = labels[train_idx[i]];
  const NoisyLabelSet noisy_labels =
      make_symmetric_noise(train_labels, label_noise_rate, classes, label_rng);

  std::vector<Tensor> train_views, test_views;
  for (const Tensor& v : views) {
    train_views.push_back(gather_rows(v, train_idx));
    test_views.push_back(gather_rows(v, test_idx));
  }

  FusionModel model = init_fusion(fusion, init_rng);
  ClassifierHead head = init_head(fusion.fused_dim, classes, head_rng);

  auto params = model.named_parameters();
  for (auto& p : head.named_parameters()) params.push_back(p);
  AdamOptimizer optimizer(params, train.adam());

  const ContrastiveConfig align{train.tau, 0.0};
  const std::size_t n_train = train_idx.size();
  const std::size_t batch = train.effective_batch(n_train);
  const bool wants_branches =
      loss_kind == LossKind::multi_branch_cross_entropy || train.lambda > 0.0;

  ClassifierTrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    const std::vector<std::size_t> order = shuffled_indices(n_train, shuffle_rng);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t count = std::min(batch, n_train - start);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + start + count);
      std::vector<Tensor> batch_views;
      batch_views.reserve(train_views.size());
      for (const Tensor& v : train_views) batch_views.push_back(gather_rows(v, idx));
      std::vector<int> batch_labels(count);
      for (std::size_t i = 0; i < count; ++i) batch_labels[i] = noisy_labels.noisy[idx[i]];

      Tape tape;
      Tensor loss;
      if (!wants_branches) {
        Tensor z = fusion_forward(model, batch_views, true, &sto_rng, &tape);
        loss = ce_loss(head_probs(head, z, &tape), batch_labels, &tape);
      } else {
        Tensor z_noise, z_mask;
        if (loss_kind == LossKind::multi_branch_cross_entropy) {
          loss = mce_loss(model, head, batch_views, batch_labels, perturb, true,
                          sto_rng, &tape, &z_noise, &z_mask);
        } else {
          std::vector<std::size_t> dims;
          for (const Tensor& v : batch_views) dims.push_back(v.cols());
          PerturbationDraw noise_draw =
              resample_perturbation(perturb, sto_rng, count, dims);
          PerturbationDraw mask_draw =
              resample_perturbation(perturb, sto_rng, count, dims);
          Tensor z = fusion_forward(model, batch_views, true, &sto_rng, &tape);
          z_noise = fusion_forward(model, apply_noise(batch_views, noise_draw), true,
                                   &sto_rng, &tape);
          z_mask = fusion_forward(model, apply_mask(batch_views, mask_draw), true,
                                  &sto_rng, &tape);
          loss = ce_loss(head_probs(head, z, &tape), batch_labels, &tape);
        }
        if (train.lambda > 0.0) {
          loss = add(loss, scale(rml_loss(z_noise, z_mask, align, &tape), train.lambda,
                                 &tape), &tape);
        }
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("train_classifier: non-finite loss at epoch " +
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

  Tensor z_test = infer_representations(model, test_views);
  const Tensor probs = head_probs(head, z_test, nullptr);
  std::vector<int> truth(test_idx.size());
  for (std::size_t i = 0; i < test_idx.size(); ++i) truth[i] = labels[test_idx[i]];
  result.report = classification_metrics(argmax_rows(probs), truth, classes);
  result.model = std::move(model);
  result.head = std::move(head);
  result.train_indices = std::move(train_idx);
  result.test_indices = std::move(test_idx);
  return result;
}

}  // namespace rml
