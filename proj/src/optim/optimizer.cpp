#include "mmt/optim/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace mmt::optim {

void OptimConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("optim.base_lr must be > 0");
  if (!(asam_rho >= 0.0)) throw std::invalid_argument("optim.asam_rho must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optim.weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim.momentum must be in [0, 1)");
  if (total_steps < 0) throw std::invalid_argument("optim.total_steps must be >= 0");
  if (!(min_lr >= 0.0 && min_lr <= base_lr)) throw std::invalid_argument("optim.min_lr must be in [0, base_lr]");
}

OptimState OptimState::for_params(const ModelParams& params) { return {0, model::zeros_like(params)}; }

double cosine_lr(std::int64_t t, const OptimConfig& config) {
  const std::int64_t T = config.total_steps;
  if (T <= 0) return config.base_lr;
  if (t >= T) return config.min_lr;
  if (t <= 0) return config.base_lr;
  // cos(pi/2) is not exactly zero in floating point.
  if (2 * t == T) return (config.base_lr + config.min_lr) / 2.0;
  const double c = std::cos(std::numbers::pi * double(t) / double(T));
  return config.min_lr + 0.5 * (config.base_lr - config.min_lr) * (1.0 + c);
}

namespace {

void check_aligned(const ModelParams& params, const Gradients& grads, const char* what) {
  if (grads.size() != params.size())
    throw ShapeError(std::string(what) + ": " + std::to_string(grads.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& w = params[i].value.data();
    if (grads[i].rows() != w.rows() || grads[i].cols() != w.cols())
      throw ShapeError(std::string(what) + " shape mismatch for " + params[i].name);
  }
}

}  // namespace

void sgd_step(ModelParams& params, const Gradients& grads, OptimState& state, double lr, const OptimConfig& config) {
  check_aligned(params, grads, "gradient");
  if (state.momentum.empty()) state.momentum = model::zeros_like(params);
  check_aligned(params, state.momentum, "momentum");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!grads[i].allFinite()) throw NumericalError("non-finite gradient in " + params[i].name);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params[i].value.data();
    Matrix& v = state.momentum[i];
    const Matrix g = grads[i] + config.weight_decay * w;
    v = config.momentum * v + g;
    w -= lr * v;
  }
  ++state.step;
}

Matrix asam_scale(const Tensor& w) {
  if (w.rank() == 1) return Matrix::Ones(w.rows(), w.cols());
  return w.data().cwiseAbs();
}

Gradients asam_perturbation(const ModelParams& params, const Gradients& grads, double rho) {
  check_aligned(params, grads, "gradient");
  Gradients eps(params.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    eps[i] = asam_scale(params[i].value).cwiseProduct(grads[i]);
    sq += eps[i].squaredNorm();
  }
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (norm == 0.0 || rho == 0.0) {
      eps[i].setZero();
    } else {
      eps[i] = (rho / norm) * asam_scale(params[i].value).cwiseProduct(eps[i]);
    }
  }
  return eps;
}

StepReport asam_step(ModelParams& params, const LossClosure& closure, OptimState& state, double lr,
                     const OptimConfig& config) {
  StepReport report;
  Gradients grads = model::zeros_like(params);
  report.loss = closure(params, grads);
  ++report.gradient_evaluations;
  if (!std::isfinite(report.loss)) throw NumericalError("non-finite loss " + std::to_string(report.loss));
  if (!config.asam_enabled) {
    report.perturbed_loss = report.loss;
    sgd_step(params, grads, state, lr, config);
    return report;
  }

  const GradientDiagnostics diag = clip_check(params, grads);
  if (!diag.finite) throw NumericalError("non-finite gradient in " + diag.non_finite.front());
  const Gradients eps = asam_perturbation(params, grads, config.asam_rho);
  std::vector<Matrix> original(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    original[i] = params[i].value.data();
    params[i].value.data() += eps[i];
  }
  Gradients perturbed = model::zeros_like(params);
  try {
    report.perturbed_loss = closure(params, perturbed);
  } catch (...) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].value.data() = original[i];
    throw;
  }
  ++report.gradient_evaluations;
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value.data() = std::move(original[i]);
  if (!std::isfinite(report.perturbed_loss))
    throw NumericalError("non-finite loss at the perturbed point " + std::to_string(report.perturbed_loss));
  sgd_step(params, perturbed, state, lr, config);
  return report;
}

GradientDiagnostics clip_check(const ModelParams& params, const Gradients& grads) {
  check_aligned(params, grads, "gradient");
  GradientDiagnostics d;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].allFinite()) {
      d.finite = false;
      d.non_finite.push_back(params[i].name);
      continue;
    }
    if (grads[i].size() > 0) d.max_abs = std::max(d.max_abs, grads[i].cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace mmt::optim
