#pragma once

#include "mmt/numerics/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mmt::model {

enum class Variant { skeleton, accel, simple_fusion, crossview_fusion };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::skeleton, Variant::accel, Variant::simple_fusion,
                                           Variant::crossview_fusion};

struct ModelConfig {
  Variant variant = Variant::crossview_fusion;
  Index joints = 29;
  Index frames = 120;
  Index accel_tokens = 120;
  Index d_spatial = 16;
  Index d_model = 64;
  Index heads = 4;
  Index depth_spatial = 2;
  Index depth_temporal = 3;
  Index depth_accel = 3;
  Index mlp_ratio = 2;
  double drop = 0.0;
  double attn_drop = 0.0;
  double stochastic_depth = 0.2;
  Index classes = 6;
  /// Heads used by CrossView attention; the reference formulation is single-head.
  Index cva_heads = 1;

  void validate() const;

  bool uses_skeleton() const { return variant != Variant::accel; }
  bool uses_accel() const { return variant != Variant::skeleton; }
  bool is_fusion() const { return variant == Variant::simple_fusion || variant == Variant::crossview_fusion; }
  /// Key dimension of the attention scaling constant.
  Index d_k() const { return d_model / heads; }

  /// A configuration small enough for finite-difference checks.
  static ModelConfig small(Variant variant);
};

/// Flat (key, value) view used by config files and checkpoints.
std::vector<std::pair<std::string, std::string>> fields(const ModelConfig& config);
/// Sets one field from text; throws std::invalid_argument naming the key.
void set_field(ModelConfig& config, const std::string& key, const std::string& value);
bool has_field(const std::string& key);

/// Stochastic-depth survival probability for layer `layer` of a stack of
/// `depth` layers: linear from 1 at the first layer to 1 - rate at the last.
double survival_probability(Index layer, Index depth, double rate);

}  // namespace mmt::model
