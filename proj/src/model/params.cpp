#include "mmt/model/params.hpp"

#include <stdexcept>

namespace mmt::model {
namespace {

constexpr double kInitStd = 0.02;

void add_linear(std::vector<ParamSpec>& out, const std::string& p, Index in, Index o) {
  out.push_back({p + ".weight", {in, o}, Init::weight});
  out.push_back({p + ".bias", {o}, Init::zeros});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& p, Index d) {
  out.push_back({p + ".gain", {d}, Init::ones});
  out.push_back({p + ".bias", {d}, Init::zeros});
}

void add_encoder_layer(std::vector<ParamSpec>& out, const std::string& p, Index d, Index ratio, bool cva) {
  add_norm(out, p + ".norm1", d);
  add_linear(out, p + ".attn.q", d, d);
  add_linear(out, p + ".attn.k", d, d);
  add_linear(out, p + ".attn.v", d, d);
  add_linear(out, p + ".attn.out", d, d);
  if (cva) {
    add_norm(out, p + ".cva.norm_q", d);
    add_norm(out, p + ".cva.norm_kv", d);
    out.push_back({p + ".cva.wq", {d, d}, Init::weight});
    out.push_back({p + ".cva.wk", {d, d}, Init::weight});
    out.push_back({p + ".cva.wv", {d, d}, Init::weight});
  }
  add_norm(out, p + ".norm2", d);
  add_linear(out, p + ".mlp.fc1", d, d * ratio);
  add_linear(out, p + ".mlp.fc2", d * ratio, d);
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  c.validate();
  std::vector<ParamSpec> out;
  const Index dm = c.d_model, ds = c.d_spatial;
  if (c.uses_skeleton()) {
    add_linear(out, "spatial.embed", 3, ds);
    out.push_back({"spatial.cls", {ds}, Init::zeros});
    out.push_back({"spatial.pos", {c.joints + 1, ds}, Init::position});
    for (Index i = 0; i < c.depth_spatial; ++i) add_encoder_layer(out, "spatial.layers." + std::to_string(i), ds, c.mlp_ratio, false);
    add_norm(out, "spatial.norm", ds);
    add_linear(out, "skeleton.frame_proj", c.joints * ds, dm);
    add_linear(out, "skeleton.cls_proj", ds, dm);
    out.push_back({"temporal.pos", {c.frames + 1, dm}, Init::position});
    const bool cva = c.variant == Variant::crossview_fusion;
    for (Index i = 0; i < c.depth_temporal; ++i) add_encoder_layer(out, "temporal.layers." + std::to_string(i), dm, c.mlp_ratio, cva);
    add_norm(out, "temporal.norm", dm);
  }
  if (c.uses_accel()) {
    add_linear(out, "accel.embed", 3, dm);
    out.push_back({"accel.cls", {dm}, Init::zeros});
    out.push_back({"accel.pos", {c.accel_tokens + 1, dm}, Init::position});
    for (Index i = 0; i < c.depth_accel; ++i) add_encoder_layer(out, "accel.layers." + std::to_string(i), dm, c.mlp_ratio, false);
    add_norm(out, "accel.norm", dm);
  }
  add_linear(out, "head", c.is_fusion() ? 2 * dm : dm, c.classes);
  return out;
}

Index parameter_count(const ModelConfig& c) {
  c.validate();
  const Index r = c.mlp_ratio;
  auto encoder = [r](Index d) { return (4 + 2 * r) * d * d + (9 + r) * d; };
  const Index dm = c.d_model, ds = c.d_spatial;
  Index n = 0;
  if (c.uses_skeleton()) {
    n += 4 * ds + ds + (c.joints + 1) * ds + c.depth_spatial * encoder(ds) + 2 * ds;
    n += c.joints * ds * dm + dm + ds * dm + dm + (c.frames + 1) * dm;
    n += c.depth_temporal * encoder(dm) + 2 * dm;
    if (c.variant == Variant::crossview_fusion) n += c.depth_temporal * (3 * dm * dm + 4 * dm);
  }
  if (c.uses_accel()) n += 4 * dm + dm + (c.accel_tokens + 1) * dm + c.depth_accel * encoder(dm) + 2 * dm;
  const Index head_in = c.is_fusion() ? 2 * dm : dm;
  n += head_in * c.classes + c.classes;
  return n;
}

void ModelParams::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ModelParams::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return it->second;
}

Index ModelParams::total_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

Gradients zeros_like(const ModelParams& params) {
  Gradients g;
  g.reserve(params.size());
  for (const auto& e : params) g.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  return g;
}

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  ModelParams params;
  for (const ParamSpec& spec : param_specs(config)) {
    Tensor t = Tensor::zeros(spec.shape);
    switch (spec.init) {
      case Init::zeros: break;
      case Init::ones: t.data().setOnes(); break;
      case Init::weight:
      case Init::position:
        for (Index i = 0; i < t.numel(); ++i) t.data().data()[i] = rng.truncated_normal(kInitStd);
        break;
    }
    params.add(spec.name, std::move(t));
  }
  return params;
}

}  // namespace mmt::model
