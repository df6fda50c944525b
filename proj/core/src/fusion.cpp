#include "rml/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace rml {
namespace {

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& x : t.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

Tensor clone_param(const Tensor& t) {
  return Tensor::from_values(t.shape(),
                             std::vector<double>(t.values().begin(), t.values().end()),
                             true);
}

void check_views(const FusionConfig& config, const std::vector<Tensor>& views) {
  if (views.size() != config.view_count) {
    throw std::invalid_argument("fusion: got " + std::to_string(views.size()) +
                                " views, model expects " +
                                std::to_string(config.view_count));
  }
  for (std::size_t m = 0; m < views.size(); ++m) {
    if (views[m].rank() != 2 || views[m].cols() != config.view_dims[m]) {
      throw std::invalid_argument("fusion: view " + std::to_string(m) + " has shape " +
                                  shape_str(views[m].shape()) + ", expected [n x " +
                                  std::to_string(config.view_dims[m]) + "]");
    }
    if (views[m].dim(0) != views[0].dim(0)) {
      throw std::invalid_argument("fusion: view " + std::to_string(m) + " has " +
                                  std::to_string(views[m].dim(0)) + " rows, view 0 has " +
                                  std::to_string(views[0].dim(0)));
    }
  }
}

}  // namespace

void FusionConfig::validate() const {
  if (view_count == 0) throw std::invalid_argument("FusionConfig: view_count must be >= 1");
  if (view_dims.size() != view_count) {
    throw std::invalid_argument("FusionConfig: view_dims has " +
                                std::to_string(view_dims.size()) + " entries for " +
                                std::to_string(view_count) + " views");
  }
  for (std::size_t d : view_dims) {
    if (d == 0) throw std::invalid_argument("FusionConfig: view dimensions must be >= 1");
  }
  if (token_dim == 0 || fused_dim == 0) {
    throw std::invalid_argument("FusionConfig: token_dim and fused_dim must be >= 1");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("FusionConfig: dropout_rate " +
                                std::to_string(dropout_rate) + " outside [0, 1)");
  }
}

std::vector<std::pair<std::string, Tensor>> FusionModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t m = 0; m < embedders.size(); ++m) {
    const std::string base = "embedder" + std::to_string(m);
    out.emplace_back(base + ".weight1", embedders[m].weight1);
    out.emplace_back(base + ".bias1", embedders[m].bias1);
    out.emplace_back(base + ".weight2", embedders[m].weight2);
    out.emplace_back(base + ".bias2", embedders[m].bias2);
  }
  out.emplace_back("attention.query", w_query);
  out.emplace_back("attention.key", w_key);
  out.emplace_back("attention.value", w_value);
  out.emplace_back("ffn.weight1", ffn_w1);
  out.emplace_back("ffn.bias1", ffn_b1);
  out.emplace_back("ffn.weight2", ffn_w2);
  out.emplace_back("ffn.bias2", ffn_b2);
  out.emplace_back("output.weight", out_w);
  out.emplace_back("output.bias", out_b);
  return out;
}

std::vector<Tensor> FusionModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t FusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.size();
  return n;
}

FusionModel FusionModel::clone() const {
  FusionModel copy;
  copy.config = config;
  for (const ViewEmbedder& e : embedders) {
    copy.embedders.push_back({clone_param(e.weight1), clone_param(e.bias1),
                              clone_param(e.weight2), clone_param(e.bias2)});
  }
  copy.w_query = clone_param(w_query);
  copy.w_key = clone_param(w_key);
  copy.w_value = clone_param(w_value);
  copy.ffn_w1 = clone_param(ffn_w1);
  copy.ffn_b1 = clone_param(ffn_b1);
  copy.ffn_w2 = clone_param(ffn_w2);
  copy.ffn_b2 = clone_param(ffn_b2);
  copy.out_w = clone_param(out_w);
  copy.out_b = clone_param(out_b);
  return copy;
}

FusionModel init_fusion(FusionConfig config, RngStream& rng) {
  config.validate();
  FusionModel model;
  model.config = config;
  const std::size_t de = config.token_dim;
  for (std::size_t m = 0; m < config.view_count; ++m) {
    const std::size_t d = config.view_dims[m];
    ViewEmbedder e;
    e.weight1 = uniform_fan_in({d, d}, d, rng);
    e.bias1 = Tensor::zeros({d}, true);
    e.weight2 = uniform_fan_in({d, de}, d, rng);
    e.bias2 = Tensor::zeros({de}, true);
    model.embedders.push_back(std::move(e));
  }
  model.w_query = uniform_fan_in({de, de}, de, rng);
  model.w_key = uniform_fan_in({de, de}, de, rng);
  model.w_value = uniform_fan_in({de, de}, de, rng);
  const std::size_t ffn = config.ffn_width();
  model.ffn_w1 = uniform_fan_in({de, ffn}, de, rng);
  model.ffn_b1 = Tensor::zeros({ffn}, true);
  model.ffn_w2 = uniform_fan_in({ffn, de}, ffn, rng);
  model.ffn_b2 = Tensor::zeros({de}, true);
  model.out_w = uniform_fan_in({de, config.fused_dim}, de, rng);
  model.out_b = Tensor::zeros({config.fused_dim}, true);
  return model;
}

Tensor embed_views(const FusionModel& model, const std::vector<Tensor>& views,
                   bool training, RngStream* rng, Tape* tape) {
  check_views(model.config, views);
  const double rate = model.config.dropout_rate;
  std::vector<Tensor> tokens;
  tokens.reserve(views.size());
  for (std::size_t m = 0; m < views.size(); ++m) {
    const ViewEmbedder& e = model.embedders[m];
    Tensor h = add_row_bias(matmul(views[m], e.weight1, tape), e.bias1, tape);
    h = gelu(h, tape);
    h = dropout(h, rate, training, rng, tape);
    h = add_row_bias(matmul(h, e.weight2, tape), e.bias2, tape);
    h = dropout(h, rate, training, rng, tape);
    tokens.push_back(std::move(h));
  }
  return stack_tokens(tokens, tape);
}

Tensor attend_and_fuse(const FusionModel& model, const Tensor& tokens, Tape* tape,
                       AttentionTrace* trace) {
  const std::size_t de = model.config.token_dim;
  if (tokens.rank() != 3 || tokens.dim(1) != model.config.view_count ||
      tokens.dim(2) != de) {
    throw std::invalid_argument("attend_and_fuse: tokens " + shape_str(tokens.shape()) +
                                ", expected [n x " +
                                std::to_string(model.config.view_count) + " x " +
                                std::to_string(de) + "]");
  }
  Tensor attended;
  Tensor attention;
  if (model.config.use_attention) {
    Tensor q = matmul(tokens, model.w_query, tape);
    Tensor k = matmul(tokens, model.w_key, tape);
    Tensor v = matmul(tokens, model.w_value, tape);
    Tensor scores = scale(bmm_nt(q, k, tape), 1.0 / std::sqrt(static_cast<double>(de)), tape);
    attention = softmax_rows(scores, tape);
    attended = bmm(attention, v, tape);
  } else {
    attended = tokens;
  }
  Tensor residual = add(attended, tokens, tape);
  Tensor hidden = gelu(add_row_bias(matmul(residual, model.ffn_w1, tape), model.ffn_b1, tape), tape);
  Tensor ffn_out = add_row_bias(matmul(hidden, model.ffn_w2, tape), model.ffn_b2, tape);
  Tensor refined = add(residual, ffn_out, tape);
  Tensor fused = add_row_bias(matmul(sum_tokens(refined, tape), model.out_w, tape),
                              model.out_b, tape);
  if (trace) {
    trace->tokens = tokens.clone();
    trace->attention = attention.defined() ? attention.clone() : Tensor();
    trace->attended = attended.clone();
    trace->residual = residual.clone();
    trace->refined = refined.clone();
    trace->fused = fused.clone();
  }
  return fused;
}

namespace {

Tensor forward_batched(const FusionModel& model, const std::vector<Tensor>& views,
                       bool training, RngStream* rng, Tape* tape, AttentionTrace* trace) {
  return attend_and_fuse(model, embed_views(model, views, training, rng, tape), tape, trace);
}

void copy_block(const Tensor& src, Tensor& dst, std::size_t row) {
  auto sv = src.values();
  auto dv = dst.values();
  std::copy(sv.begin(), sv.end(), dv.begin() + row * sv.size());
}

}  // namespace

Tensor fusion_forward(const FusionModel& model, const std::vector<Tensor>& views,
                      bool training, RngStream* rng, Tape* tape, AttentionTrace* trace) {
  if (training || tape) {
    return forward_batched(model, views, training, rng, tape, trace);
  }
  // Inference: evaluate each sample on its own so results are independent of
  // how callers batch their data.
  check_views(model.config, views);
  const std::size_t n = views[0].dim(0);
  const std::size_t v = model.config.view_count;
  const std::size_t de = model.config.token_dim;
  Tensor fused = Tensor::zeros({n, model.config.fused_dim});
  if (trace) {
    trace->tokens = Tensor::zeros({n, v, de});
    trace->attention = model.config.use_attention ? Tensor::zeros({n, v, v}) : Tensor();
    trace->attended = Tensor::zeros({n, v, de});
    trace->residual = Tensor::zeros({n, v, de});
    trace->refined = Tensor::zeros({n, v, de});
    trace->fused = Tensor::zeros({n, model.config.fused_dim});
  }
  std::vector<Tensor> sample(v);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < v; ++m) sample[m] = gather_rows(views[m], {i});
    AttentionTrace row_trace;
    Tensor z = forward_batched(model, sample, false, nullptr, nullptr,
                               trace ? &row_trace : nullptr);
    copy_block(z, fused, i);
    if (trace) {
      copy_block(row_trace.tokens, trace->tokens, i);
      if (row_trace.attention.defined()) copy_block(row_trace.attention, trace->attention, i);
      copy_block(row_trace.attended, trace->attended, i);
      copy_block(row_trace.residual, trace->residual, i);
      copy_block(row_trace.refined, trace->refined, i);
      copy_block(row_trace.fused, trace->fused, i);
    }
  }
  return fused;
}

}  // namespace rml
