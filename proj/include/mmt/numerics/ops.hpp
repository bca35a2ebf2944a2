#pragma once

// Differentiable primitives. Every op records itself on the tape of its
// inputs, checks shapes eagerly, and rejects non-finite outputs.

#include "mmt/numerics/rng.hpp"
#include "mmt/numerics/tape.hpp"

#include <span>
#include <vector>

namespace mmt {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

/// x[r x c] + bias[c] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
/// Elementwise product with a constant matrix of the same storage shape.
Var mul_constant(const Var& x, const Matrix& mask);

Var softmax_rows(const Var& x);
/// Normalizes over the last axis, then applies gain[d] and bias[d].
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var gelu(const Var& x);

/// Inverted dropout: survivors scaled by 1/(1 - rate); identity when not training.
Var dropout(const Var& x, double rate, Rng& rng, bool training);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Row gather; backward scatter-adds, so indices may repeat.
Var gather_rows(const Var& x, std::vector<Index> rows);
Var reshape(const Var& x, const Shape& shape);
/// Mean over rows -> [1 x c].
Var mean_rows(const Var& x);
Var sum(const Var& x);

/// Softmax cross-entropy of a single logit row against a class index.
Var cross_entropy(const Var& logits, Index label);

/// Scaled dot-product attention over independent groups and heads.
///
/// q is [groups*nq x d], k and v are [groups*nk x d]; group g of q attends
/// only to group g of k/v. The feature axis is split into `heads` equal
/// slices. Attention dropout (rate > 0, training) draws one mask per
/// (group, head) from `rng` in that order.
struct AttentionOptions {
  Index heads = 1;
  Index groups = 1;
  double scale = 1.0;
  double dropout = 0.0;
  Rng* rng = nullptr;
  bool training = false;
  /// When non-null, receives the post-softmax probabilities (before dropout)
  /// for every (group, head) in order.
  std::vector<Matrix>* probabilities = nullptr;
};

Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& options);

}  // namespace mmt
