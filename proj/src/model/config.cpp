#include "mmt/model/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>

namespace mmt::model {

Variant parse_variant(const std::string& name) {
  if (name == "skeleton") return Variant::skeleton;
  if (name == "accel") return Variant::accel;
  if (name == "simple_fusion") return Variant::simple_fusion;
  if (name == "crossview_fusion") return Variant::crossview_fusion;
  throw std::invalid_argument("unknown model variant '" + name +
                              "' (allowed: skeleton, accel, simple_fusion, crossview_fusion)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::skeleton: return "skeleton";
    case Variant::accel: return "accel";
    case Variant::simple_fusion: return "simple_fusion";
    case Variant::crossview_fusion: return "crossview_fusion";
  }
  return "?";
}

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* key) {
    if (v < 1) throw std::invalid_argument(std::string("model.") + key + " must be positive");
  };
  positive(joints, "joints");
  positive(frames, "frames");
  positive(accel_tokens, "accel_tokens");
  positive(d_spatial, "d_spatial");
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(depth_spatial, "depth_spatial");
  positive(depth_temporal, "depth_temporal");
  positive(depth_accel, "depth_accel");
  positive(mlp_ratio, "mlp_ratio");
  positive(classes, "classes");
  positive(cva_heads, "cva_heads");
  if (d_model % heads != 0) throw std::invalid_argument("model.d_model must be divisible by model.heads");
  if (d_spatial % heads != 0) throw std::invalid_argument("model.d_spatial must be divisible by model.heads");
  if (d_model % cva_heads != 0) throw std::invalid_argument("model.d_model must be divisible by model.cva_heads");
  auto rate = [](double v, const char* key) {
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument(std::string("model.") + key + " must be in [0, 1)");
  };
  rate(drop, "drop");
  rate(attn_drop, "attn_drop");
  rate(stochastic_depth, "stochastic_depth");
  if (variant == Variant::crossview_fusion && depth_temporal != depth_accel) {
    throw std::invalid_argument("crossview_fusion needs model.depth_temporal == model.depth_accel");
  }
}

ModelConfig ModelConfig::small(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.joints = 5;
  c.frames = 6;
  c.accel_tokens = 6;
  c.d_spatial = 8;
  c.d_model = 16;
  c.heads = 2;
  c.depth_spatial = 2;
  c.depth_temporal = 2;
  c.depth_accel = 2;
  c.mlp_ratio = 2;
  c.classes = 3;
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

Index to_index(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument(key + ": expected an integer, got '" + s + "'");
  return static_cast<Index>(v);
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument(key + ": expected a number, got '" + s + "'");
  return v;
}

struct Field {
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&, const std::string&)> set;
};

template <Index ModelConfig::*M>
Field index_field() {
  return {[](const ModelConfig& c) { return std::to_string(c.*M); },
          [](ModelConfig& c, const std::string& k, const std::string& v) { c.*M = to_index(k, v); }};
}

template <double ModelConfig::*M>
Field double_field() {
  return {[](const ModelConfig& c) { return fmt(c.*M); },
          [](ModelConfig& c, const std::string& k, const std::string& v) { c.*M = to_double(k, v); }};
}

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"variant", {[](const ModelConfig& c) { return to_string(c.variant); },
                   [](ModelConfig& c, const std::string&, const std::string& v) { c.variant = parse_variant(v); }}},
      {"joints", index_field<&ModelConfig::joints>()},
      {"frames", index_field<&ModelConfig::frames>()},
      {"accel_tokens", index_field<&ModelConfig::accel_tokens>()},
      {"d_spatial", index_field<&ModelConfig::d_spatial>()},
      {"d_model", index_field<&ModelConfig::d_model>()},
      {"heads", index_field<&ModelConfig::heads>()},
      {"depth_spatial", index_field<&ModelConfig::depth_spatial>()},
      {"depth_temporal", index_field<&ModelConfig::depth_temporal>()},
      {"depth_accel", index_field<&ModelConfig::depth_accel>()},
      {"mlp_ratio", index_field<&ModelConfig::mlp_ratio>()},
      {"drop", double_field<&ModelConfig::drop>()},
      {"attn_drop", double_field<&ModelConfig::attn_drop>()},
      {"stochastic_depth", double_field<&ModelConfig::stochastic_depth>()},
      {"classes", index_field<&ModelConfig::classes>()},
      {"cva_heads", index_field<&ModelConfig::cva_heads>()},
  };
  return table;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> fields(const ModelConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, f] : field_table()) out.emplace_back(key, f.get(config));
  return out;
}

void set_field(ModelConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [k, f] : field_table()) {
    if (k == key) {
      f.set(config, "model." + key, value);
      return;
    }
  }
  throw std::invalid_argument("unknown model key '" + key + "'");
}

bool has_field(const std::string& key) {
  for (const auto& [k, f] : field_table())
    if (k == key) return true;
  return false;
}

double survival_probability(Index layer, Index depth, double rate) {
  if (depth <= 1) return 1.0;
  return 1.0 - rate * static_cast<double>(layer) / static_cast<double>(depth - 1);
}

}  // namespace mmt::model
