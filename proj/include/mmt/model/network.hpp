#pragma once

// Forward passes for the four variants. All math runs on a caller-owned
// tape so the same code serves training (with backward) and inference.

#include "mmt/dataio/sample.hpp"
#include "mmt/model/params.hpp"
#include "mmt/numerics/ops.hpp"

namespace mmt::model {

enum class Branch : std::uint64_t { spatial = 1, temporal = 2, accel = 3, head = 4 };

enum class Site : std::uint64_t {
  embed_drop = 1,
  attn_drop = 2,
  proj_drop = 3,
  attn_path = 4,
  mlp_hidden_drop = 5,
  mlp_out_drop = 6,
  mlp_path = 7,
};

struct ForwardOptions {
  bool training = false;
  /// Root of every stochastic draw in this pass. Each site derives its own
  /// stream from (branch, layer, site), so enabling or disabling one site
  /// never shifts another site's draws.
  Rng rng{0};
  /// When non-null, collects every post-softmax attention matrix.
  std::vector<Matrix>* attention_probabilities = nullptr;
};

/// Binds a parameter set onto a tape for one forward pass. Parameters become
/// grad-enabled leaves on first use.
class Forward {
 public:
  Forward(Tape& tape, const ModelParams& params, const ModelConfig& config, ForwardOptions options = {});

  Tape& tape() { return tape_; }
  const ModelConfig& config() const { return config_; }
  const ForwardOptions& options() const { return options_; }
  bool training() const { return options_.training; }

  Var param(const std::string& name);
  Rng site_rng(Branch branch, Index layer, Site site) const;

  /// After tape.backward: gradients aligned with the parameter set, zero
  /// for parameters this pass never touched.
  Gradients gradients() const;

 private:
  Tape& tape_;
  const ModelParams& params_;
  const ModelConfig& config_;
  ForwardOptions options_;
  std::vector<Var> bound_;
};

/// Training: zero the branch with probability 1 - survival, else scale it by
/// 1/survival. Identity in eval mode or when survival == 1.
Var stochastic_depth(const Var& branch, double survival, Rng& rng, bool training);

/// CVA(x, y) = softmax((x Wq)(y Wk)^T / sqrt(d_k)) (y Wv).
/// x: [n_q x d] queries, y: [n_kv x d] keys/values.
Var cross_view_attention(const Var& x, const Var& y, const Var& wq, const Var& wk, const Var& wv, double d_k,
                         Index heads = 1, std::vector<Matrix>* probabilities = nullptr);

struct SpatialOutput {
  Var frame_features;  // [G x d_model], concatenated joint outputs projected to d_model
  Var s_cls;           // [G x d_spatial]
};

/// Spatial encoder over G frames at once; `frames` is [G x J x 3].
SpatialOutput spatial_encode(Forward& fw, const Var& frames);

/// Temporal token sequence [T_cls; frame features] plus position encodings.
Var skeleton_embed(Forward& fw, const Var& skeleton);
/// [A_cls; embedded acceleration tokens] plus position encodings.
Var accel_embed(Forward& fw, const Var& accel);

/// Pre-norm self-attention sub-block with residual.
Var attention_sublayer(Forward& fw, const std::string& prefix, const Var& z, Branch branch, Index layer,
                       Index groups, Index depth);
/// Pre-norm feed-forward sub-block with residual.
Var mlp_sublayer(Forward& fw, const std::string& prefix, const Var& z, Branch branch, Index layer, Index depth);
/// z + CVA(LN(z), LN(z_acc)).
Var cva_sublayer(Forward& fw, const std::string& prefix, const Var& z, const Var& z_acc);

Var skeleton_forward(Forward& fw, const Var& skeleton);
Var accel_forward(Forward& fw, const Var& accel);

enum class FusionMode { simple, crossview };
Var fusion_forward(Forward& fw, const Var& skeleton, const Var& accel, FusionMode mode);

/// Dispatches on the configured variant; returns [1 x classes] logits.
Var forward(Forward& fw, const data::ProcessedSample& sample);

/// Eval-mode logits.
Matrix predict_logits(const ModelParams& params, const ModelConfig& config, const data::ProcessedSample& sample);

struct LossAndGradients {
  double loss = 0.0;
  Matrix logits;
  Gradients gradients;
};

/// Cross-entropy of one sample, scaled by `weight`, with its gradients.
LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& config,
                                    const data::ProcessedSample& sample, const ForwardOptions& options,
                                    double weight = 1.0);

}  // namespace mmt::model
