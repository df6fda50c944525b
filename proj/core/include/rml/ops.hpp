#pragma once

#include <cstddef>
#include <vector>

#include "rml/rng.hpp"
#include "rml/tensor.hpp"

namespace rml {

// Differentiable tensor operations. Every op computes its result eagerly and,
// when `tape` is non-null and an input tracks gradients, records an adjoint
// step on the tape. Passing tape == nullptr runs pure inference.

// a: rank >= 2 with leading axes flattened, b: [k, p]. Result keeps a's
// leading axes with the last replaced by p.
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);

// Batched matrix products over the leading axis.
// bmm:    [B, m, k] x [B, k, p] -> [B, m, p]
// bmm_nt: [B, m, k] x [B, p, k] -> [B, m, p]  (second operand transposed)
Tensor bmm(const Tensor& a, const Tensor& b, Tape* tape);
Tensor bmm_nt(const Tensor& a, const Tensor& b, Tape* tape);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);
Tensor scale(const Tensor& a, double factor, Tape* tape);

// a: [..., k] plus bias[k] broadcast over all leading axes.
Tensor add_row_bias(const Tensor& a, const Tensor& bias, Tape* tape);

// Exact erf-based GELU, applied elementwise.
Tensor gelu(const Tensor& a, Tape* tape);

// Inverted dropout: kept entries are scaled by 1/(1-rate) so the expected
// value is preserved; identity when !training or rate == 0. rng is consumed
// (one uniform per element) whenever the mask is drawn, and must be non-null
// in that case. rate outside [0, 1) is a configuration error.
Tensor dropout(const Tensor& a, double rate, bool training, RngStream* rng,
               Tape* tape);

// Numerically stable softmax over the last axis.
Tensor softmax_rows(const Tensor& a, Tape* tape);

// V tensors of shape [n, d] -> [n, V, d].
Tensor stack_tokens(const std::vector<Tensor>& tokens, Tape* tape);

// [n, V, d] -> [n, d], summing over the middle axis.
Tensor sum_tokens(const Tensor& a, Tape* tape);

Tensor sum_all(const Tensor& a, Tape* tape);
Tensor mean_all(const Tensor& a, Tape* tape);

// Mean squared error against a constant target of identical shape.
Tensor mse_loss(const Tensor& pred, const Tensor& target, Tape* tape);

// Rows rescaled to unit Euclidean norm; denominators are (norm + epsilon).
// With epsilon == 0 a zero-norm row raises a domain error.
Tensor l2_normalize_rows(const Tensor& a, double epsilon, Tape* tape);

// Mean negative log-likelihood of integer labels under row-stochastic probs
// [n, C]; probabilities are clipped to [clip, 1] inside the log.
Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& labels,
                      double clip, Tape* tape);

// Non-differentiable helpers.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows);
bool all_finite(const Tensor& a);

}  // namespace rml
