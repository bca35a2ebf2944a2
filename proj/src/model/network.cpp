#include "mmt/model/network.hpp"

#include <cmath>

namespace mmt::model {
namespace {

Var linear(Forward& fw, const std::string& prefix, const Var& x) {
  return add_bias(matmul(x, fw.param(prefix + ".weight")), fw.param(prefix + ".bias"));
}

Var norm(Forward& fw, const std::string& prefix, const Var& x) {
  return layer_norm(x, fw.param(prefix + ".gain"), fw.param(prefix + ".bias"), 1e-5);
}

Var dropout_at(Forward& fw, const Var& x, double rate, Branch b, Index layer, Site site) {
  if (!fw.training() || rate == 0.0) return x;
  Rng rng = fw.site_rng(b, layer, site);
  return dropout(x, rate, rng, true);
}

std::string layer_prefix(const char* stack, Index i) { return std::string(stack) + ".layers." + std::to_string(i); }

Var cls_row(const Var& z) { return gather_rows(z, {0}); }

void require_shape(const Var& v, const Shape& want, const char* what) {
  if (v.shape() != want) {
    throw ShapeError(std::string(what) + ": expected " + shape_string(want) + ", got " + shape_string(v.shape()));
  }
}

// Runs one full encoder layer (attention then MLP).
Var encoder_layer(Forward& fw, const char* stack, const Var& z, Branch b, Index i, Index groups, Index depth) {
  const std::string p = layer_prefix(stack, i);
  return mlp_sublayer(fw, p, attention_sublayer(fw, p, z, b, i, groups, depth), b, i, depth);
}

}  // namespace

Forward::Forward(Tape& tape, const ModelParams& params, const ModelConfig& config, ForwardOptions options)
    : tape_(tape), params_(params), config_(config), options_(std::move(options)), bound_(params.size()) {}

Var Forward::param(const std::string& name) {
  const std::size_t i = params_.index_of(name);
  if (!bound_[i].valid()) bound_[i] = tape_.leaf(params_[i].value, true);
  return bound_[i];
}

Rng Forward::site_rng(Branch branch, Index layer, Site site) const {
  const std::uint64_t key = (static_cast<std::uint64_t>(branch) << 48) ^ (static_cast<std::uint64_t>(layer) << 16) ^
                            static_cast<std::uint64_t>(site);
  return options_.rng.fork(key);
}

Gradients Forward::gradients() const {
  Gradients g;
  g.reserve(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i].valid()) {
      g.push_back(tape_.grad(bound_[i]));
    } else {
      g.push_back(Matrix::Zero(params_[i].value.rows(), params_[i].value.cols()));
    }
  }
  return g;
}

Var stochastic_depth(const Var& branch, double survival, Rng& rng, bool training) {
  if (!(survival > 0.0 && survival <= 1.0)) throw std::invalid_argument("stochastic_depth: survival must be in (0, 1]");
  if (!training || survival == 1.0) return branch;
  return scale(branch, rng.uniform() < survival ? 1.0 / survival : 0.0);
}

Var cross_view_attention(const Var& x, const Var& y, const Var& wq, const Var& wk, const Var& wv, double d_k,
                         Index heads, std::vector<Matrix>* probabilities) {
  if (x.cols() != y.cols()) {
    throw ShapeError("cross_view_attention: branch widths differ, " + shape_string(x.shape()) + " vs " +
                     shape_string(y.shape()));
  }
  AttentionOptions opt;
  opt.heads = heads;
  opt.scale = 1.0 / std::sqrt(d_k);
  opt.probabilities = probabilities;
  return attention(matmul(x, wq), matmul(y, wk), matmul(y, wv), opt);
}

Var attention_sublayer(Forward& fw, const std::string& p, const Var& z, Branch b, Index layer, Index groups,
                       Index depth) {
  const ModelConfig& c = fw.config();
  const Var h = norm(fw, p + ".norm1", z);
  const Var q = linear(fw, p + ".attn.q", h);
  const Var k = linear(fw, p + ".attn.k", h);
  const Var v = linear(fw, p + ".attn.v", h);
  Rng attn_rng = fw.site_rng(b, layer, Site::attn_drop);
  AttentionOptions opt;
  opt.heads = c.heads;
  opt.groups = groups;
  opt.scale = 1.0 / std::sqrt(static_cast<double>(z.cols() / c.heads));
  opt.dropout = c.attn_drop;
  opt.rng = &attn_rng;
  opt.training = fw.training();
  opt.probabilities = fw.options().attention_probabilities;
  Var out = linear(fw, p + ".attn.out", attention(q, k, v, opt));
  out = dropout_at(fw, out, c.drop, b, layer, Site::proj_drop);
  Rng path = fw.site_rng(b, layer, Site::attn_path);
  out = stochastic_depth(out, survival_probability(layer, depth, c.stochastic_depth), path, fw.training());
  return add(z, out);
}

Var mlp_sublayer(Forward& fw, const std::string& p, const Var& z, Branch b, Index layer, Index depth) {
  const ModelConfig& c = fw.config();
  Var h = gelu(linear(fw, p + ".mlp.fc1", norm(fw, p + ".norm2", z)));
  h = dropout_at(fw, h, c.drop, b, layer, Site::mlp_hidden_drop);
  h = dropout_at(fw, linear(fw, p + ".mlp.fc2", h), c.drop, b, layer, Site::mlp_out_drop);
  Rng path = fw.site_rng(b, layer, Site::mlp_path);
  h = stochastic_depth(h, survival_probability(layer, depth, c.stochastic_depth), path, fw.training());
  return add(z, h);
}

Var cva_sublayer(Forward& fw, const std::string& p, const Var& z, const Var& z_acc) {
  const ModelConfig& c = fw.config();
  const Var x = norm(fw, p + ".cva.norm_q", z);
  const Var y = norm(fw, p + ".cva.norm_kv", z_acc);
  const Var fused = cross_view_attention(x, y, fw.param(p + ".cva.wq"), fw.param(p + ".cva.wk"), fw.param(p + ".cva.wv"),
                                         static_cast<double>(c.d_k()), c.cva_heads, fw.options().attention_probabilities);
  return add(z, fused);
}

SpatialOutput spatial_encode(Forward& fw, const Var& frames) {
  const ModelConfig& c = fw.config();
  const Index J = c.joints;
  if (frames.value().rank() != 3 || frames.shape()[1] != J || frames.shape()[2] != 3) {
    throw ShapeError("spatial_encode: expected [G x " + std::to_string(J) + " x 3], got " + shape_string(frames.shape()));
  }
  const Index G = frames.shape()[0];
  const Index n = J + 1;

  // Per frame: [S_cls, joint_0 .. joint_{J-1}] plus tiled position encodings.
  const Var joints = linear(fw, "spatial.embed", reshape(frames, {G * J, 3}));
  const Var cls = reshape(fw.param("spatial.cls"), {1, c.d_spatial});
  const Var pool = concat_rows(std::vector<Var>{joints, cls});
  std::vector<Index> order, pos_rows;
  order.reserve(static_cast<std::size_t>(G * n));
  for (Index g = 0; g < G; ++g) {
    order.push_back(G * J);
    pos_rows.push_back(0);
    for (Index j = 0; j < J; ++j) {
      order.push_back(g * J + j);
      pos_rows.push_back(j + 1);
    }
  }
  Var z = add(gather_rows(pool, order), gather_rows(fw.param("spatial.pos"), pos_rows));
  z = dropout_at(fw, z, c.drop, Branch::spatial, 0, Site::embed_drop);
  for (Index i = 0; i < c.depth_spatial; ++i) z = encoder_layer(fw, "spatial", z, Branch::spatial, i, G, c.depth_spatial);
  z = norm(fw, "spatial.norm", z);

  std::vector<Index> cls_rows, joint_rows;
  for (Index g = 0; g < G; ++g) {
    cls_rows.push_back(g * n);
    for (Index j = 0; j < J; ++j) joint_rows.push_back(g * n + 1 + j);
  }
  const Var concatenated = reshape(gather_rows(z, joint_rows), {G, J * c.d_spatial});
  return {linear(fw, "skeleton.frame_proj", concatenated), gather_rows(z, cls_rows)};
}

Var skeleton_embed(Forward& fw, const Var& skeleton) {
  const ModelConfig& c = fw.config();
  require_shape(skeleton, {c.frames, c.joints, 3}, "skeleton tokens");
  const SpatialOutput s = spatial_encode(fw, skeleton);
  // One S_cls per frame: average over frames, then project to T_cls.
  const Var t_cls = linear(fw, "skeleton.cls_proj", mean_rows(s.s_cls));
  Var z = add(concat_rows(std::vector<Var>{t_cls, s.frame_features}), fw.param("temporal.pos"));
  return dropout_at(fw, z, c.drop, Branch::temporal, 0, Site::embed_drop);
}

Var accel_embed(Forward& fw, const Var& accel) {
  const ModelConfig& c = fw.config();
  require_shape(accel, {c.accel_tokens, 3}, "acceleration tokens");
  const Var tokens = linear(fw, "accel.embed", accel);
  const Var cls = reshape(fw.param("accel.cls"), {1, c.d_model});
  Var z = add(concat_rows(std::vector<Var>{cls, tokens}), fw.param("accel.pos"));
  return dropout_at(fw, z, c.drop, Branch::accel, 0, Site::embed_drop);
}

namespace {

Var skeleton_trunk(Forward& fw, const Var& skeleton) {
  const ModelConfig& c = fw.config();
  Var z = skeleton_embed(fw, skeleton);
  for (Index i = 0; i < c.depth_temporal; ++i) z = encoder_layer(fw, "temporal", z, Branch::temporal, i, 1, c.depth_temporal);
  return cls_row(norm(fw, "temporal.norm", z));
}

Var accel_trunk(Forward& fw, const Var& accel) {
  const ModelConfig& c = fw.config();
  Var z = accel_embed(fw, accel);
  for (Index i = 0; i < c.depth_accel; ++i) z = encoder_layer(fw, "accel", z, Branch::accel, i, 1, c.depth_accel);
  return cls_row(norm(fw, "accel.norm", z));
}

}  // namespace

Var skeleton_forward(Forward& fw, const Var& skeleton) {
  if (fw.config().variant != Variant::skeleton) throw std::logic_error("skeleton_forward needs the skeleton variant");
  return linear(fw, "head", skeleton_trunk(fw, skeleton));
}

Var accel_forward(Forward& fw, const Var& accel) {
  if (fw.config().variant != Variant::accel) throw std::logic_error("accel_forward needs the accel variant");
  return linear(fw, "head", accel_trunk(fw, accel));
}

Var fusion_forward(Forward& fw, const Var& skeleton, const Var& accel, FusionMode mode) {
  const ModelConfig& c = fw.config();
  const Variant want = mode == FusionMode::crossview ? Variant::crossview_fusion : Variant::simple_fusion;
  if (c.variant != want) throw std::logic_error("fusion_forward: mode does not match the configured variant");
  if (!accel.valid() || accel.value().numel() == 0) {
    throw std::invalid_argument("fusion_forward: acceleration is missing; fill it before the model");
  }
  Var t_cls, a_cls;
  if (mode == FusionMode::simple) {
    t_cls = skeleton_trunk(fw, skeleton);
    a_cls = accel_trunk(fw, accel);
  } else {
    // Layer i of the temporal stack attends to layer i's post-MSA acceleration tokens.
    Var zt = skeleton_embed(fw, skeleton);
    Var za = accel_embed(fw, accel);
    const Index L = c.depth_temporal;
    for (Index i = 0; i < L; ++i) {
      const std::string pa = layer_prefix("accel", i);
      const std::string pt = layer_prefix("temporal", i);
      za = attention_sublayer(fw, pa, za, Branch::accel, i, 1, L);
      zt = attention_sublayer(fw, pt, zt, Branch::temporal, i, 1, L);
      zt = cva_sublayer(fw, pt, zt, za);
      zt = mlp_sublayer(fw, pt, zt, Branch::temporal, i, L);
      za = mlp_sublayer(fw, pa, za, Branch::accel, i, L);
    }
    t_cls = cls_row(norm(fw, "temporal.norm", zt));
    a_cls = cls_row(norm(fw, "accel.norm", za));
  }
  return linear(fw, "head", concat_cols(std::vector<Var>{t_cls, a_cls}));
}

Var forward(Forward& fw, const data::ProcessedSample& sample) {
  Tape& tape = fw.tape();
  const ModelConfig& c = fw.config();
  const bool has_accel = sample.accel.rank() > 0 && sample.accel.numel() > 0;
  if (c.uses_accel() && !has_accel) {
    throw std::invalid_argument("sample " + sample.id + ": acceleration is missing; run fill_missing upstream");
  }
  switch (c.variant) {
    case Variant::skeleton: return skeleton_forward(fw, tape.constant(sample.skeleton));
    case Variant::accel: return accel_forward(fw, tape.constant(sample.accel));
    case Variant::simple_fusion:
      return fusion_forward(fw, tape.constant(sample.skeleton), tape.constant(sample.accel), FusionMode::simple);
    case Variant::crossview_fusion:
      return fusion_forward(fw, tape.constant(sample.skeleton), tape.constant(sample.accel), FusionMode::crossview);
  }
  throw std::logic_error("unknown variant");
}

Matrix predict_logits(const ModelParams& params, const ModelConfig& config, const data::ProcessedSample& sample) {
  Tape tape;
  Forward fw(tape, params, config);
  return forward(fw, sample).data();
}

LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& config,
                                    const data::ProcessedSample& sample, const ForwardOptions& options, double weight) {
  Tape tape;
  Forward fw(tape, params, config, options);
  const Var logits = forward(fw, sample);
  Var loss = cross_entropy(logits, sample.label);
  if (weight != 1.0) loss = scale(loss, weight);
  tape.backward(loss);
  return {loss.value().item(), logits.data(), fw.gradients()};
}

}  // namespace mmt::model
