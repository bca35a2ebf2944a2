#pragma once

// Multirate preprocessing. Acceleration runs
//   interpolate_linear -> moving_average -> fill_missing (absent streams) -> normalize
// and skeletons run resample_frames -> normalize. Statistics for filling and
// normalization come from the training split only.

#include "mmt/dataio/sample.hpp"
#include "mmt/numerics/rng.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>

namespace mmt::data {

struct PreprocessConfig {
  Index target_frames = 120;
  Index accel_tokens = 120;
  Index moving_average_window = 40;
  bool normalize = true;
  Index root_joint = 0;
  /// Fill noise standard deviation as a fraction of the per-axis std.
  double fill_noise = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Evaluates `values` (rows aligned with `times`) on `n_out` evenly spaced
/// points spanning [times.front(), times.back()]. NaN entries are skipped
/// per column; a column needs at least two finite points.
template <typename DerivedT, typename DerivedV>
MatrixX<typename DerivedV::Scalar> interpolate_linear(const Eigen::MatrixBase<DerivedT>& times,
                                                      const Eigen::MatrixBase<DerivedV>& values, Index n_out) {
  using Scalar = typename DerivedV::Scalar;
  if (n_out < 2) throw std::invalid_argument("interpolate_linear: n_out must be at least 2");
  if (times.size() != values.rows()) throw std::invalid_argument("interpolate_linear: times/values length differ");
  if (times.size() < 2) throw DataError("interpolate_linear: need at least 2 samples, use the fill path");
  const Scalar t0 = times(0);
  const Scalar t1 = times(times.size() - 1);
  MatrixX<Scalar> out(n_out, values.cols());
  for (Index c = 0; c < values.cols(); ++c) {
    std::vector<Index> valid;
    for (Index i = 0; i < values.rows(); ++i)
      if (std::isfinite(values(i, c))) valid.push_back(i);
    if (valid.size() < 2) throw DataError("interpolate_linear: column has fewer than 2 finite values");
    std::size_t seg = 0;
    for (Index k = 0; k < n_out; ++k) {
      // Pin the endpoints so the grid spans exactly [t0, t1].
      const Scalar t = k == n_out - 1 ? t1 : t0 + (t1 - t0) * static_cast<Scalar>(k) / static_cast<Scalar>(n_out - 1);
      while (seg + 2 < valid.size() && times(valid[seg + 1]) <= t) ++seg;
      const Index a = valid[seg], b = valid[seg + 1];
      const Scalar ta = times(a), tb = times(b);
      if (t <= ta) {
        out(k, c) = values(a, c);
      } else if (t >= tb) {
        out(k, c) = values(b, c);
      } else {
        const Scalar w = (t - ta) / (tb - ta);
        out(k, c) = values(a, c) + w * (values(b, c) - values(a, c));
      }
    }
  }
  return out;
}

MatrixX<double> interpolate_linear(const AccelerationSequence& seq, Index n_out);

/// Centered moving average over rows. The window covers (window-1)/2 rows
/// before and window/2 rows after; at the edges it is truncated to the rows
/// that exist.
template <typename Derived>
MatrixX<typename Derived::Scalar> moving_average(const Eigen::MatrixBase<Derived>& x, Index window) {
  using Scalar = typename Derived::Scalar;
  if (window < 1) throw std::invalid_argument("moving_average: window must be at least 1");
  const Index T = x.rows();
  MatrixX<Scalar> prefix = MatrixX<Scalar>::Zero(T + 1, x.cols());
  for (Index t = 0; t < T; ++t) prefix.row(t + 1) = prefix.row(t) + x.row(t);
  const Index before = (window - 1) / 2;
  const Index after = window / 2;
  MatrixX<Scalar> out(T, x.cols());
  for (Index t = 0; t < T; ++t) {
    const Index lo = std::max<Index>(0, t - before);
    const Index hi = std::min<Index>(T - 1, t + after);
    if (lo == hi) {
      out.row(t) = x.row(t);
    } else {
      out.row(t) = (prefix.row(hi + 1) - prefix.row(lo)) / static_cast<Scalar>(hi - lo + 1);
    }
  }
  return out;
}

/// Linear-interpolation resampling of frame rows onto `frames` evenly spaced
/// positions covering the whole sequence.
template <typename Derived>
MatrixX<typename Derived::Scalar> resample_rows(const Eigen::MatrixBase<Derived>& x, Index frames) {
  using Scalar = typename Derived::Scalar;
  if (frames < 1) throw std::invalid_argument("resample_frames: frame count must be positive");
  const Index T = x.rows();
  if (T < 1) throw DataError("resample_frames: empty sequence");
  MatrixX<Scalar> out(frames, x.cols());
  if (T == 1 || frames == 1) {
    for (Index f = 0; f < frames; ++f) out.row(f) = x.row(0);
    return out;
  }
  for (Index f = 0; f < frames; ++f) {
    if (f == frames - 1) {
      out.row(f) = x.row(T - 1);
      continue;
    }
    const Scalar pos = static_cast<Scalar>(f) * static_cast<Scalar>(T - 1) / static_cast<Scalar>(frames - 1);
    const Index i = std::min<Index>(static_cast<Index>(pos), T - 2);
    const Scalar w = pos - static_cast<Scalar>(i);
    out.row(f) = x.row(i) + w * (x.row(i + 1) - x.row(i));
  }
  return out;
}

/// Skeleton frames resampled to exactly `frames`, returned as [F x J x 3].
Tensor resample_frames(const SkeletonSequence& skel, Index frames);

/// True when at least two rows have all three axes finite.
bool has_usable_acceleration(const AccelerationSequence& seq);

/// Acceleration statistics used to synthesize absent streams.
struct FillStats {
  std::map<int, Matrix> class_mean;  // label -> N_a x 3 mean track
  Matrix global_mean;                // N_a x 3
  Eigen::RowVector3d axis_std = Eigen::RowVector3d::Zero();
  std::set<std::string> provenance;  // subjects the statistics came from
};

enum class FillMode { class_conditional, global };

/// Mean tracks over smoothed [N_a x 3] tracks of samples that have data.
FillStats compute_fill_stats(std::span<const Matrix> tracks, std::span<const int> labels,
                             std::span<const std::string> subjects);

/// Replaces an entirely missing acceleration stream with a mean track plus
/// N(0, (fill_noise * axis_std)^2) noise. The result is flagged
/// `synthesized` and laid out on an even grid of `stats.global_mean.rows()`
/// points. Samples that have data are returned unchanged.
ActionSample fill_missing(const ActionSample& sample, const FillStats& stats, Rng& rng, FillMode mode,
                          double fill_noise = 0.01);

struct NormStats {
  double skeleton_std = 1.0;
  Eigen::RowVector3d accel_mean = Eigen::RowVector3d::Zero();
  Eigen::RowVector3d accel_std = Eigen::RowVector3d::Ones();
  Index root_joint = 0;
  std::set<std::string> provenance;
};

inline constexpr double kStdFloor = 1e-8;

/// Global std of root-centered coordinates over present non-root joints,
/// and per-axis acceleration mean/std, from training samples only.
NormStats compute_norm_stats(std::span<const ProcessedSample> train, Index root_joint);

/// Skeleton: subtract the root joint per frame, divide by skeleton_std.
/// Acceleration: per-axis standardization. Absent joints stay zero.
ProcessedSample normalize(const ProcessedSample& sample, const NormStats& stats);

/// Resample and smooth a single sample without filling or normalizing.
/// An unusable acceleration stream yields an empty `accel` tensor and
/// `accel_filled == false`.
struct StagedSample {
  ProcessedSample sample;
  bool has_accel = false;
};
StagedSample stage_sample(const ActionSample& sample, const PreprocessConfig& config);

struct PreparedSplit {
  std::vector<ProcessedSample> train;
  std::vector<ProcessedSample> eval;
  FillStats fill;
  NormStats norm;
};

/// Full pipeline for a train/eval split. Fill and normalization statistics
/// are computed from `train` only; train samples fill from their class mean,
/// eval samples from the global mean.
PreparedSplit prepare_split(std::span<const ActionSample> train, std::span<const ActionSample> eval,
                            const PreprocessConfig& config);

/// Subjects present in a sample list.
std::set<std::string> subjects_of(std::span<const ActionSample> samples);
std::set<std::string> subjects_of(std::span<const ProcessedSample> samples);

}  // namespace mmt::data
