#pragma once

#include "mmt/model/config.hpp"
#include "mmt/numerics/rng.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace mmt::model {

enum class Init { weight, zeros, ones, position };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

/// Parameter layout for a configuration: stable, config-derived names in a
/// fixed order. Weights are [in x out]; vectors are rank 1.
std::vector<ParamSpec> param_specs(const ModelConfig& config);

/// Closed-form parameter count; matches the sum over `param_specs`.
Index parameter_count(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered, name-addressable parameter set.
class ModelParams {
 public:
  void add(std::string name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;
  Tensor& at(const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor& at(const std::string& name) const { return entries_[index_of(name)].value; }

  std::size_t size() const { return entries_.size(); }
  NamedTensor& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Index total_count() const;

 private:
  std::vector<NamedTensor> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients aligned with ModelParams order.
using Gradients = std::vector<Matrix>;

Gradients zeros_like(const ModelParams& params);

/// Weights ~ truncated normal (std 0.02, cut at 2 std), biases and CLS
/// tokens zero, norm gains one, position encodings truncated normal.
ModelParams init_params(const ModelConfig& config, Rng& rng);

}  // namespace mmt::model
