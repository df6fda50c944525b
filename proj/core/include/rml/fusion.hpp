#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rml/ops.hpp"
#include "rml/rng.hpp"
#include "rml/tensor.hpp"

namespace rml {

struct FusionConfig {
  std::size_t view_count = 0;
  std::vector<std::size_t> view_dims;
  std::size_t token_dim = 256;  // per-view embedding width
  std::size_t fused_dim = 256;  // output representation width
  std::size_t ffn_hidden = 0;   // 0 means token_dim
  double dropout_rate = 0.2;
  bool use_attention = true;

  std::size_t ffn_width() const { return ffn_hidden ? ffn_hidden : token_dim; }
  void validate() const;
};

struct ViewEmbedder {
  Tensor weight1, bias1;  // [D_m, D_m], [D_m]
  Tensor weight2, bias2;  // [D_m, token_dim], [token_dim]
};

// Multi-view fusion network: per-view MLP embedders produce one token per
// view, a single-head attention layer mixes each sample's tokens with each
// other, an FFN refines them (both with residual connections), and the sum
// of the refined tokens is projected to the fused representation.
struct FusionModel {
  FusionConfig config;
  std::vector<ViewEmbedder> embedders;
  Tensor w_query, w_key, w_value;          // [token_dim, token_dim], no bias
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;   // token_dim -> ffn -> token_dim
  Tensor out_w, out_b;                     // [token_dim, fused_dim], [fused_dim]

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  FusionModel clone() const;
};

// Weights drawn uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
FusionModel init_fusion(FusionConfig config, RngStream& rng);

// Intermediate stage outputs captured for inspection (values only).
struct AttentionTrace {
  Tensor tokens;       // [n, V, d_e] embedder outputs
  Tensor attention;    // [n, V, V] row-stochastic weights; empty if disabled
  Tensor attended;     // [n, V, d_e]
  Tensor residual;     // [n, V, d_e] attended + tokens
  Tensor refined;      // [n, V, d_e] residual + FFN(residual)
  Tensor fused;        // [n, fused_dim]
};

// Per-view embedders applied to a batch; result is [n, V, token_dim].
// rng is required only when training with a nonzero dropout rate.
Tensor embed_views(const FusionModel& model, const std::vector<Tensor>& views,
                   bool training, RngStream* rng, Tape* tape);

// Attention + FFN + residuals + sum fusion + output projection on a token
// batch [n, V, token_dim]; result is [n, fused_dim].
Tensor attend_and_fuse(const FusionModel& model, const Tensor& tokens, Tape* tape,
                       AttentionTrace* trace = nullptr);

// Full forward pass. In inference mode (training == false, tape == nullptr)
// samples are evaluated one at a time, so each output row depends only on
// its own sample and is bit-identical no matter how the batch is split.
Tensor fusion_forward(const FusionModel& model, const std::vector<Tensor>& views,
                      bool training, RngStream* rng, Tape* tape,
                      AttentionTrace* trace = nullptr);

enum class Provenance { clean, noise_perturbed, unusable_perturbed };

struct FusedBatch {
  Tensor z;  // [n, fused_dim]
  Provenance provenance = Provenance::clean;
};

}  // namespace rml
