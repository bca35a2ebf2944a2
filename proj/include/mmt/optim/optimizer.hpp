#pragma once

#include "mmt/model/params.hpp"

#include <functional>
#include <stdexcept>

namespace mmt::optim {

using model::Gradients;
using model::ModelParams;

struct OptimConfig {
  double base_lr = 0.0025;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  double asam_rho = 0.5;
  bool asam_enabled = true;
  std::int64_t total_steps = 0;
  double min_lr = 0.0;

  void validate() const;
};

struct OptimState {
  std::int64_t step = 0;
  Gradients momentum;

  static OptimState for_params(const ModelParams& params);
};

/// min_lr + (base_lr - min_lr)(1 + cos(pi t / T)) / 2, clamped to min_lr past T.
double cosine_lr(std::int64_t t, const OptimConfig& config);

/// g + wd w -> v = m v + g -> w -= lr v. Throws NumericalError naming the
/// first parameter with a non-finite gradient; nothing is modified then.
void sgd_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr, const OptimConfig& config);

/// Fills `grads` with dL/dw at `params` and returns L.
using LossClosure = std::function<double(const ModelParams& params, Gradients& grads)>;

/// Element-wise scale T_w: |w| for matrices, 1 for rank-1 tensors (biases,
/// gains, tokens).
Matrix asam_scale(const Tensor& w);

/// eps = rho T_w^2 g / ||T_w g||, zero when the norm vanishes.
Gradients asam_perturbation(const ModelParams& params, const Gradients& grads, double rho);

struct StepReport {
  double loss = 0.0;
  double perturbed_loss = 0.0;
  int gradient_evaluations = 0;
};

/// One ASAM step: ascend to w + eps, take the gradient there, descend from
/// the original w with sgd_step. With asam_enabled false this is one plain
/// SGD step with a single closure call.
StepReport asam_step(ModelParams& params, const LossClosure& closure, OptimState& state, double lr,
                     const OptimConfig& config);

struct GradientDiagnostics {
  double max_abs = 0.0;
  bool finite = true;
  std::vector<std::string> non_finite;
};

GradientDiagnostics clip_check(const ModelParams& params, const Gradients& grads);

}  // namespace mmt::optim
