#include "doctest.h"

#include "mmt/optim/optimizer.hpp"

#include <cmath>
#include <limits>

using namespace mmt;
using namespace mmt::optim;

namespace {

ModelParams scalar_param(double w) {
  ModelParams p;
  p.add("w", Tensor({1, 1}, Matrix::Constant(1, 1, w)));
  return p;
}

OptimConfig plain(double lr) {
  OptimConfig c;
  c.base_lr = lr;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  return c;
}

// L(w) = 1/2 sum w^2 over every parameter.
double half_square(const ModelParams& p, Gradients& g) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    g[i] = p[i].value.data();
    loss += 0.5 * p[i].value.data().squaredNorm();
  }
  return loss;
}

ModelParams random_params(Rng& rng) {
  ModelParams p;
  Matrix a(3, 4), b(1, 4), c(2, 2);
  for (Matrix* m : {&a, &b, &c})
    for (Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal() + (rng.bernoulli(0.5) ? 0.5 : -0.5);
  p.add("layer.weight", Tensor({3, 4}, a));
  p.add("layer.bias", Tensor({4}, b));
  p.add("proj.weight", Tensor({2, 2}, c));
  return p;
}

// A loss with non-trivial curvature so perturbed gradients differ from g.
double quartic(const ModelParams& p, Gradients& g) {
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Matrix& w = p[i].value.data();
    g[i] = w.array().cube().matrix() + 0.3 * Matrix::Ones(w.rows(), w.cols());
    loss += 0.25 * w.array().pow(4).sum() + 0.3 * w.sum();
  }
  return loss;
}

}  // namespace

TEST_CASE("cosine_lr endpoints, midpoint and monotonicity") {
  OptimConfig c;
  c.base_lr = 0.02;
  c.min_lr = 0.001;
  c.total_steps = 100;
  CHECK(cosine_lr(0, c) == 0.02);
  CHECK(cosine_lr(100, c) == 0.001);
  CHECK(cosine_lr(50, c) == (0.02 + 0.001) / 2);
  CHECK(cosine_lr(500, c) == 0.001);
  for (std::int64_t t = 1; t <= 100; ++t) CHECK(cosine_lr(t, c) <= cosine_lr(t - 1, c));
  c.total_steps = 0;
  CHECK(cosine_lr(7, c) == 0.02);
}

TEST_CASE("sgd_step") {
  SUBCASE("zero gradient without decay leaves parameters and velocity at rest") {
    ModelParams p = scalar_param(1.5);
    OptimState s = OptimState::for_params(p);
    sgd_step(p, model::zeros_like(p), s, 0.1, OptimConfig{});
    OptimConfig c = plain(0.1);
    c.momentum = 0.9;
    sgd_step(p, model::zeros_like(p), s, 0.1, c);
    CHECK(p.at("w").data()(0, 0) != 1.5);  // default config decays
    ModelParams q = scalar_param(1.5);
    OptimState t = OptimState::for_params(q);
    sgd_step(q, model::zeros_like(q), t, 0.1, c);
    CHECK(q.at("w").data()(0, 0) == 1.5);
    CHECK(t.momentum[0](0, 0) == 0.0);
    CHECK(t.step == 1);
  }
  SUBCASE("vanilla step") {
    ModelParams p = scalar_param(2.0);
    OptimState s = OptimState::for_params(p);
    sgd_step(p, {Matrix::Constant(1, 1, 0.7)}, s, 0.1, plain(0.1));
    CHECK(p.at("w").data()(0, 0) == 2.0 - 0.1 * 0.7);
  }
  SUBCASE("two momentum steps follow the hand recurrence") {
    OptimConfig c = plain(0.1);
    c.momentum = 0.9;
    ModelParams p = scalar_param(1.0);
    OptimState s = OptimState::for_params(p);
    const double g = 0.5;
    sgd_step(p, {Matrix::Constant(1, 1, g)}, s, 0.1, c);
    const double w1 = 1.0 - 0.1 * g;
    CHECK(p.at("w").data()(0, 0) == w1);
    sgd_step(p, {Matrix::Constant(1, 1, g)}, s, 0.1, c);
    CHECK(p.at("w").data()(0, 0) == doctest::Approx(w1 - 0.1 * 1.9 * g).epsilon(1e-15));
  }
  SUBCASE("weight decay shrinks weights under zero gradient") {
    OptimConfig c = plain(0.1);
    c.weight_decay = 5e-4;
    for (double w0 : {-3.0, -0.2, 0.4, 5.0}) {
      ModelParams p = scalar_param(w0);
      OptimState s = OptimState::for_params(p);
      sgd_step(p, model::zeros_like(p), s, 0.1, c);
      CHECK(std::abs(p.at("w").data()(0, 0)) < std::abs(w0));
    }
  }
  SUBCASE("non-finite gradient aborts before any update") {
    ModelParams p;
    p.add("a", Tensor({2}, Matrix::Ones(1, 2)));
    p.add("b", Tensor({2}, Matrix::Ones(1, 2)));
    OptimState s = OptimState::for_params(p);
    Gradients g = model::zeros_like(p);
    g[0].setConstant(1.0);
    g[1](0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(sgd_step(p, g, s, 0.1, plain(0.1)), doctest::Contains("b"), NumericalError);
    CHECK(p.at("a").data() == Matrix::Ones(1, 2));
    CHECK(s.step == 0);
  }
  SUBCASE("gradient shape mismatch") {
    ModelParams p = scalar_param(1.0);
    OptimState s = OptimState::for_params(p);
    CHECK_THROWS_AS(sgd_step(p, {Matrix::Zero(2, 1)}, s, 0.1, plain(0.1)), ShapeError);
  }
}

TEST_CASE("asam_step on the scalar quadratic") {
  ModelParams p = scalar_param(2.0);
  OptimState s = OptimState::for_params(p);
  OptimConfig c = plain(0.1);
  c.asam_rho = 0.5;
  const StepReport r = asam_step(p, half_square, s, 0.1, c);
  CHECK(p.at("w").data()(0, 0) == 1.7);
  CHECK(r.gradient_evaluations == 2);
  CHECK(r.loss == 2.0);
  CHECK(r.perturbed_loss == 4.5);

  // Scaling w by c scales eps by c.
  for (double k : {0.5, 3.0, 10.0}) {
    const ModelParams q = scalar_param(2.0 * k);
    const Gradients eps = asam_perturbation(q, {Matrix::Constant(1, 1, 2.0 * k)}, 0.5);
    CHECK(eps[0](0, 0) == doctest::Approx(1.0 * k).epsilon(1e-15));
  }
}

TEST_CASE("asam with rho 0 is exactly sgd") {
  Rng rng(7);
  const ModelParams start = random_params(rng);
  OptimConfig c;
  c.asam_rho = 0.0;
  ModelParams a = start, b = start;
  OptimState sa = OptimState::for_params(a), sb = OptimState::for_params(b);
  for (int step = 0; step < 3; ++step) {
    asam_step(a, quartic, sa, 0.05, c);
    Gradients g = model::zeros_like(b);
    quartic(b, g);
    sgd_step(b, g, sb, 0.05, c);
  }
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].value.data() - b[i].value.data()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ascent norm identity and rank-1 exclusion") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const ModelParams p = random_params(rng);
    Gradients g = model::zeros_like(p);
    quartic(p, g);
    const double rho = 0.1 + trial * 0.2;
    const Gradients eps = asam_perturbation(p, g, rho);
    double sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sq += eps[i].cwiseQuotient(asam_scale(p[i].value)).squaredNorm();
    CHECK(std::abs(std::sqrt(sq) - rho) < 1e-9);
  }
  const ModelParams p = random_params(rng);
  CHECK(asam_scale(p.at("layer.bias")) == Matrix::Ones(1, 4));
  CHECK(asam_scale(p.at("layer.weight")) == p.at("layer.weight").data().cwiseAbs());
}

TEST_CASE("asam with a vanishing scaled gradient falls back to sgd") {
  ModelParams p = scalar_param(0.0);
  OptimState s = OptimState::for_params(p);
  const Gradients eps = asam_perturbation(p, {Matrix::Constant(1, 1, 3.0)}, 0.5);
  CHECK(eps[0](0, 0) == 0.0);
  const auto closure = [](const ModelParams& q, Gradients& g) {
    g[0] = Matrix::Constant(1, 1, 3.0);
    return q.at("w").data()(0, 0);
  };
  asam_step(p, closure, s, 0.1, plain(0.1));
  CHECK(p.at("w").data()(0, 0) == -0.1 * 3.0);
}

TEST_CASE("asam disabled makes one gradient evaluation") {
  Rng rng(3);
  ModelParams p = random_params(rng);
  OptimState s = OptimState::for_params(p);
  OptimConfig c;
  c.asam_enabled = false;
  int calls = 0;
  const auto counted = [&](const ModelParams& q, Gradients& g) {
    ++calls;
    return quartic(q, g);
  };
  CHECK(asam_step(p, counted, s, 0.01, c).gradient_evaluations == 1);
  CHECK(calls == 1);
  c.asam_enabled = true;
  CHECK(asam_step(p, counted, s, 0.01, c).gradient_evaluations == 2);
  CHECK(calls == 3);
  CHECK(s.step == 2);
}

TEST_CASE("clip_check") {
  ModelParams p;
  p.add("first", Tensor({2, 2}, Matrix::Zero(2, 2)));
  p.add("second", Tensor({3}, Matrix::Zero(1, 3)));
  Gradients g = model::zeros_like(p);
  CHECK(clip_check(p, g).max_abs == 0.0);
  CHECK(clip_check(p, g).finite);
  g[0].setOnes();
  g[1].setOnes();
  CHECK(clip_check(p, g).max_abs == 1.0);
  g[1](0, 2) = std::numeric_limits<double>::infinity();
  const GradientDiagnostics d = clip_check(p, g);
  CHECK_FALSE(d.finite);
  REQUIRE(d.non_finite.size() == 1);
  CHECK(d.non_finite[0] == "second");
  CHECK(d.max_abs == 1.0);
}

TEST_CASE("config validation") {
  OptimConfig c;
  CHECK_NOTHROW(c.validate());
  c.base_lr = 0.0;
  CHECK_THROWS(c.validate());
  c = OptimConfig{};
  c.asam_rho = -0.1;
  CHECK_THROWS(c.validate());
}
