#include "mmt/numerics/ops.hpp"

#include "mmt/numerics/kernels.hpp"

#include <cmath>

namespace mmt {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_matrix(const char* op, const Var& a) {
  if (a.value().rank() > 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("op applied to an unbound Var");
  return *a.tape();
}

Shape matrix_shape(Index rows, Index cols) { return Shape{rows, cols}; }

Eigen::Map<const Eigen::RowVectorXd> as_row(const Matrix& m) { return {m.data(), m.size()}; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  Matrix out = a.data() * b.data();
  const Shape shape = matrix_shape(out.rows(), out.cols());
  return tape_of(a).record("matmul", Tensor(shape, std::move(out)), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             if (a.requires_grad()) t.accumulate(a, g * b.data().transpose());
                             if (b.requires_grad()) t.accumulate(b, a.data().transpose() * g);
                           });
}

Var transpose(const Var& a) {
  require_matrix("transpose", a);
  Matrix out = a.data().transpose();
  const Shape shape = matrix_shape(out.rows(), out.cols());
  return tape_of(a).record("transpose", Tensor(shape, std::move(out)), {a},
                           [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  return tape_of(a).record("add", Tensor(a.shape(), a.data() + b.data()), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, g);
                           });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  return tape_of(a).record("sub", Tensor(a.shape(), a.data() - b.data()), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             t.accumulate(a, g);
                             if (b.requires_grad()) t.accumulate(b, -g);
                           });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Matrix out = a.data().cwiseProduct(b.data());
  return tape_of(a).record("mul", Tensor(a.shape(), std::move(out)), {a, b},
                           [a, b](Tape& t, const Matrix& g) {
                             if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.data()));
                             if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.data()));
                           });
}

Var scale(const Var& a, double factor) {
  return tape_of(a).record("scale", Tensor(a.shape(), a.data() * factor), {a},
                           [a, factor](Tape& t, const Matrix& g) { t.accumulate(a, g * factor); });
}

Var add_bias(const Var& x, const Var& bias) {
  if (bias.value().numel() != x.cols()) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " does not match last axis of " +
                     shape_string(x.shape()));
  }
  Matrix out = x.data().rowwise() + as_row(bias.data());
  return tape_of(x).record("add_bias", Tensor(x.shape(), std::move(out)), {x, bias},
                           [x, bias](Tape& t, const Matrix& g) {
                             t.accumulate(x, g);
                             if (bias.requires_grad()) {
                               Matrix db = g.colwise().sum();
                               t.accumulate(bias, db.reshaped<Eigen::RowMajor>(bias.rows(), bias.cols()));
                             }
                           });
}

Var mul_constant(const Var& x, const Matrix& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw ShapeError("mul_constant: mask does not match " + shape_string(x.shape()));
  }
  return tape_of(x).record("mul_constant", Tensor(x.shape(), x.data().cwiseProduct(mask)), {x},
                           [x, mask](Tape& t, const Matrix& g) { t.accumulate(x, g.cwiseProduct(mask)); });
}

Var softmax_rows(const Var& x) {
  Matrix y = softmax_rows(x.data());
  Tensor out(x.shape(), y);
  return tape_of(x).record("softmax_rows", std::move(out), {x}, [x, y](Tape& t, const Matrix& g) {
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(x, dx);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Index d = x.cols();
  if (gain.value().numel() != d || bias.value().numel() != d) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  Eigen::VectorXd inv_std;
  Matrix xhat = standardize_rows(x.data(), eps, &inv_std);
  Matrix out = (xhat.array().rowwise() * as_row(gain.data()).array()).matrix();
  out.rowwise() += as_row(bias.data());
  return tape_of(x).record(
      "layer_norm", Tensor(x.shape(), std::move(out)), {x, gain, bias},
      [x, gain, bias, xhat, inv_std](Tape& t, const Matrix& g) {
        if (x.requires_grad()) {
          const Matrix dxhat = (g.array().rowwise() * as_row(gain.data()).array()).matrix();
          const Eigen::VectorXd mean_d = dxhat.rowwise().mean();
          const Eigen::VectorXd mean_dx = dxhat.cwiseProduct(xhat).rowwise().mean();
          Matrix dx = dxhat;
          dx.colwise() -= mean_d;
          dx -= (xhat.array().colwise() * mean_dx.array()).matrix();
          dx = (dx.array().colwise() * inv_std.array()).matrix();
          t.accumulate(x, dx);
        }
        if (gain.requires_grad()) {
          Matrix dg = g.cwiseProduct(xhat).colwise().sum();
          t.accumulate(gain, dg.reshaped<Eigen::RowMajor>(gain.rows(), gain.cols()));
        }
        if (bias.requires_grad()) {
          Matrix db = g.colwise().sum();
          t.accumulate(bias, db.reshaped<Eigen::RowMajor>(bias.rows(), bias.cols()));
        }
      });
}

Var gelu(const Var& x) {
  Matrix out = x.data().unaryExpr([](double v) { return gelu_scalar(v); });
  return tape_of(x).record("gelu", Tensor(x.shape(), std::move(out)), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, g.cwiseProduct(x.data().unaryExpr([](double v) { return gelu_scalar_derivative(v); })));
  });
}

Var dropout(const Var& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul_constant(x, mask);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.data();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record("concat_rows", Tensor(matrix_shape(rows, cols), std::move(out)), inputs,
              [inputs](Tape& t, const Matrix& g) {
                Index r = 0;
                for (const Var& p : inputs) {
                  if (p.requires_grad()) t.accumulate(p, g.middleRows(r, p.rows()));
                  r += p.rows();
                }
              });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.data();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts.front())
      .record("concat_cols", Tensor(matrix_shape(rows, cols), std::move(out)), inputs,
              [inputs](Tape& t, const Matrix& g) {
                Index c = 0;
                for (const Var& p : inputs) {
                  if (p.requires_grad()) t.accumulate(p, g.middleCols(c, p.cols()));
                  c += p.cols();
                }
              });
}

Var gather_rows(const Var& x, std::vector<Index> rows) {
  const Index n = static_cast<Index>(rows.size());
  if (n == 0) throw ShapeError("gather_rows: empty index list");
  Matrix out(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_string(x.shape()));
    }
    out.row(i) = x.data().row(rows[i]);
  }
  return tape_of(x).record("gather_rows", Tensor(matrix_shape(n, x.cols()), std::move(out)), {x},
                           [x, rows = std::move(rows)](Tape& t, const Matrix& g) {
                             Matrix dx = Matrix::Zero(x.rows(), x.cols());
                             for (std::size_t i = 0; i < rows.size(); ++i) dx.row(rows[i]) += g.row(i);
                             t.accumulate(x, dx);
                           });
}

Var reshape(const Var& x, const Shape& shape) {
  Tensor out = x.value().reshaped(shape);
  return tape_of(x).record("reshape", std::move(out), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Eigen::Map<const Matrix>(g.data(), x.rows(), x.cols()));
  });
}

Var mean_rows(const Var& x) {
  Matrix out = x.data().colwise().mean();
  const Index n = x.rows();
  return tape_of(x).record("mean_rows", Tensor(matrix_shape(1, x.cols()), std::move(out)), {x},
                           [x, n](Tape& t, const Matrix& g) {
                             t.accumulate(x, g.replicate(n, 1) / static_cast<double>(n));
                           });
}

Var sum(const Var& x) {
  return tape_of(x).record("sum", Tensor::scalar(x.data().sum()), {x}, [x](Tape& t, const Matrix& g) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var cross_entropy(const Var& logits, Index label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: expected one logit row, got " + shape_string(logits.shape()));
  if (label < 0 || label >= logits.cols()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(logits.cols()) + ")");
  }
  Matrix p = softmax_rows(logits.data());
  const double m = logits.data().maxCoeff();
  const double lse = m + std::log((logits.data().array() - m).exp().sum());
  const double loss = lse - logits.data()(0, label);
  return tape_of(logits).record("cross_entropy", Tensor::scalar(loss), {logits},
                                [logits, p, label](Tape& t, const Matrix& g) {
                                  Matrix d = p;
                                  d(0, label) -= 1.0;
                                  t.accumulate(logits, d * g(0, 0));
                                });
}

Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& opt) {
  require_matrix("attention", q);
  require_matrix("attention", k);
  require_matrix("attention", v);
  const Index d = q.cols();
  if (k.cols() != d || v.cols() != d) throw ShapeError("attention: q/k/v feature sizes differ");
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value counts differ");
  if (opt.heads < 1 || d % opt.heads != 0) {
    throw ShapeError("attention: " + std::to_string(d) + " features do not split into " + std::to_string(opt.heads) + " heads");
  }
  if (opt.groups < 1 || q.rows() % opt.groups != 0 || k.rows() % opt.groups != 0) {
    throw ShapeError("attention: token counts do not split into " + std::to_string(opt.groups) + " groups");
  }
  if (!(opt.dropout >= 0.0 && opt.dropout < 1.0)) throw std::invalid_argument("attention: dropout rate must be in [0, 1)");
  const bool drop = opt.training && opt.dropout > 0.0;
  if (drop && !opt.rng) throw std::invalid_argument("attention: dropout requires an rng");

  const Index heads = opt.heads;
  const Index dh = d / heads;
  const Index nq = q.rows() / opt.groups;
  const Index nk = k.rows() / opt.groups;
  const double keep_scale = drop ? 1.0 / (1.0 - opt.dropout) : 1.0;

  // probs[g*heads + h] is the softmax output, masks likewise when dropping.
  std::vector<Matrix> probs(static_cast<std::size_t>(opt.groups * heads));
  std::vector<Matrix> masks(drop ? probs.size() : 0);
  Matrix out(q.rows(), d);
  for (Index g = 0; g < opt.groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      const std::size_t slot = static_cast<std::size_t>(g * heads + h);
      const auto qb = q.data().block(g * nq, h * dh, nq, dh);
      const auto kb = k.data().block(g * nk, h * dh, nk, dh);
      const auto vb = v.data().block(g * nk, h * dh, nk, dh);
      Matrix scores = (qb * kb.transpose()) * opt.scale;
      probs[slot] = softmax_rows(scores);
      if (opt.probabilities) opt.probabilities->push_back(probs[slot]);
      if (drop) {
        Matrix mask(nq, nk);
        for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = opt.rng->uniform() < opt.dropout ? 0.0 : keep_scale;
        out.block(g * nq, h * dh, nq, dh) = probs[slot].cwiseProduct(mask) * vb;
        masks[slot] = std::move(mask);
      } else {
        out.block(g * nq, h * dh, nq, dh) = probs[slot] * vb;
      }
    }
  }

  const Index groups = opt.groups;
  const double sc = opt.scale;
  return tape_of(q).record(
      "attention", Tensor(matrix_shape(q.rows(), d), std::move(out)), {q, k, v},
      [q, k, v, probs = std::move(probs), masks = std::move(masks), groups, heads, dh, nq, nk, sc](Tape& t,
                                                                                                   const Matrix& g_out) {
        Matrix dq = Matrix::Zero(q.rows(), q.cols());
        Matrix dk = Matrix::Zero(k.rows(), k.cols());
        Matrix dv = Matrix::Zero(v.rows(), v.cols());
        const bool dropped = !masks.empty();
        for (Index g = 0; g < groups; ++g) {
          for (Index h = 0; h < heads; ++h) {
            const std::size_t slot = static_cast<std::size_t>(g * heads + h);
            const Matrix& p = probs[slot];
            const auto qb = q.data().block(g * nq, h * dh, nq, dh);
            const auto kb = k.data().block(g * nk, h * dh, nk, dh);
            const auto vb = v.data().block(g * nk, h * dh, nk, dh);
            const auto go = g_out.block(g * nq, h * dh, nq, dh);
            Matrix dp = go * vb.transpose();
            if (dropped) {
              dv.block(g * nk, h * dh, nk, dh) = p.cwiseProduct(masks[slot]).transpose() * go;
              dp = dp.cwiseProduct(masks[slot]);
            } else {
              dv.block(g * nk, h * dh, nk, dh) = p.transpose() * go;
            }
            const Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
            Matrix ds = p.cwiseProduct(dp - dots.replicate(1, nk)) * sc;
            dq.block(g * nq, h * dh, nq, dh) = ds * kb;
            dk.block(g * nk, h * dh, nk, dh) = ds.transpose() * qb;
          }
        }
        if (q.requires_grad()) t.accumulate(q, dq);
        if (k.requires_grad()) t.accumulate(k, dk);
        if (v.requires_grad()) t.accumulate(v, dv);
      });
}

}  // namespace mmt
