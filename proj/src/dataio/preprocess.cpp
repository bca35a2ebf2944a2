#include "mmt/dataio/preprocess.hpp"

namespace mmt::data {

void PreprocessConfig::validate() const {
  if (target_frames < 2) throw std::invalid_argument("preprocess.frames must be at least 2");
  if (accel_tokens < 2) throw std::invalid_argument("preprocess.accel_tokens must be at least 2");
  if (moving_average_window < 1) throw std::invalid_argument("preprocess.ma_window must be at least 1");
  if (root_joint < 0) throw std::invalid_argument("preprocess.root_joint must be non-negative");
  if (fill_noise < 0.0) throw std::invalid_argument("preprocess.fill_noise must be non-negative");
}

MatrixX<double> interpolate_linear(const AccelerationSequence& seq, Index n_out) {
  return interpolate_linear(seq.timestamps, seq.values, n_out);
}

Tensor resample_frames(const SkeletonSequence& skel, Index frames) {
  const Index J = skel.num_joints();
  Matrix rows = resample_rows(skel.frames, frames);
  return Tensor(Shape{frames, J, 3}, std::move(rows));
}

bool has_usable_acceleration(const AccelerationSequence& seq) {
  Index complete = 0;
  for (Index i = 0; i < seq.size(); ++i)
    if (seq.values.row(i).allFinite()) ++complete;
  return complete >= 2;
}

FillStats compute_fill_stats(std::span<const Matrix> tracks, std::span<const int> labels,
                             std::span<const std::string> subjects) {
  if (tracks.size() != labels.size()) throw std::invalid_argument("compute_fill_stats: tracks/labels length differ");
  FillStats stats;
  stats.provenance.insert(subjects.begin(), subjects.end());
  if (tracks.empty()) return stats;
  const Index n = tracks.front().rows();
  stats.global_mean = Matrix::Zero(n, 3);
  std::map<int, Index> counts;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    auto [it, inserted] = stats.class_mean.try_emplace(labels[i], Matrix::Zero(n, 3));
    it->second += tracks[i];
    ++counts[labels[i]];
    stats.global_mean += tracks[i];
  }
  for (auto& [label, mean] : stats.class_mean) mean /= static_cast<double>(counts[label]);
  stats.global_mean /= static_cast<double>(tracks.size());

  Eigen::RowVector3d sum = Eigen::RowVector3d::Zero(), sq = Eigen::RowVector3d::Zero();
  for (const Matrix& t : tracks) {
    sum += t.colwise().sum();
    sq += t.array().square().matrix().colwise().sum();
  }
  const double count = static_cast<double>(tracks.size() * static_cast<std::size_t>(n));
  const Eigen::RowVector3d mean = sum / count;
  stats.axis_std = (sq / count - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  return stats;
}

ActionSample fill_missing(const ActionSample& sample, const FillStats& stats, Rng& rng, FillMode mode,
                          double fill_noise) {
  if (has_usable_acceleration(sample.acceleration)) return sample;
  const Matrix* mean = &stats.global_mean;
  if (mode == FillMode::class_conditional) {
    if (auto it = stats.class_mean.find(sample.label); it != stats.class_mean.end()) mean = &it->second;
  }
  ActionSample out = sample;
  AccelerationSequence& acc = out.acceleration;
  if (mean->size() == 0) {
    // No training sample carried acceleration; fall back to a flat zero track.
    acc.values = Matrix::Zero(2, 3);
  } else {
    acc.values = *mean;
  }
  const Index n = acc.values.rows();
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < 3; ++a) acc.values(i, a) += rng.normal() * fill_noise * stats.axis_std(a);

  double duration = static_cast<double>(n - 1) / acc.rate_hz;
  const auto& skel = sample.skeleton;
  if (skel.num_frames() > 1 && skel.frame_rate_hz > 0.0) duration = static_cast<double>(skel.num_frames() - 1) / skel.frame_rate_hz;
  acc.timestamps = Eigen::VectorXd::LinSpaced(n, 0.0, duration);
  acc.gaps = 0;
  acc.synthesized = true;
  return out;
}

NormStats compute_norm_stats(std::span<const ProcessedSample> train, Index root_joint) {
  NormStats stats;
  stats.root_joint = root_joint;
  double s = 0.0, sq = 0.0;
  double n = 0.0;
  Eigen::RowVector3d asum = Eigen::RowVector3d::Zero(), asq = Eigen::RowVector3d::Zero();
  double an = 0.0;
  for (const ProcessedSample& p : train) {
    stats.provenance.insert(p.subject);
    const Index J = p.joints();
    if (root_joint >= J) throw std::invalid_argument("root joint " + std::to_string(root_joint) + " outside skeleton");
    const bool root_present = p.joint_mask.size() != J || p.joint_mask(root_joint);
    const Matrix& sk = p.skeleton.data();  // (F*J) x 3
    for (Index f = 0; f < p.frames(); ++f) {
      const Eigen::RowVector3d root = root_present ? Eigen::RowVector3d(sk.row(f * J + root_joint)) : Eigen::RowVector3d::Zero();
      for (Index j = 0; j < J; ++j) {
        if (j == root_joint) continue;
        if (p.joint_mask.size() == J && !p.joint_mask(j)) continue;
        const Eigen::RowVector3d c = sk.row(f * J + j) - root;
        s += c.sum();
        sq += c.squaredNorm();
        n += 3.0;
      }
    }
    const Matrix& ac = p.accel.data();
    asum += ac.colwise().sum();
    asq += ac.array().square().matrix().colwise().sum();
    an += static_cast<double>(ac.rows());
  }
  if (n > 0.0) {
    const double mean = s / n;
    stats.skeleton_std = std::sqrt(std::max(0.0, sq / n - mean * mean));
  }
  if (an > 0.0) {
    stats.accel_mean = asum / an;
    stats.accel_std = (asq / an - stats.accel_mean.cwiseProduct(stats.accel_mean)).cwiseMax(0.0).cwiseSqrt();
  }
  return stats;
}

ProcessedSample normalize(const ProcessedSample& sample, const NormStats& stats) {
  ProcessedSample out = sample;
  const Index J = sample.joints();
  const bool masked = sample.joint_mask.size() == J;
  const bool root_present = !masked || sample.joint_mask(stats.root_joint);
  Matrix& sk = out.skeleton.data();
  const double inv = 1.0 / std::max(stats.skeleton_std, kStdFloor);
  for (Index f = 0; f < sample.frames(); ++f) {
    const Eigen::RowVector3d root =
        root_present ? Eigen::RowVector3d(sk.row(f * J + stats.root_joint)) : Eigen::RowVector3d::Zero();
    for (Index j = 0; j < J; ++j) {
      if (masked && !sample.joint_mask(j)) {
        sk.row(f * J + j).setZero();
      } else {
        sk.row(f * J + j) = (sk.row(f * J + j) - root) * inv;
      }
    }
  }
  Matrix& ac = out.accel.data();
  const Eigen::RowVector3d inv_std = stats.accel_std.cwiseMax(kStdFloor).cwiseInverse();
  ac = ((ac.rowwise() - stats.accel_mean).array().rowwise() * inv_std.array()).matrix();
  return out;
}

StagedSample stage_sample(const ActionSample& sample, const PreprocessConfig& config) {
  StagedSample staged;
  ProcessedSample& p = staged.sample;
  p.id = sample.id;
  p.subject = sample.subject;
  p.label = sample.label;
  p.skeleton = resample_frames(sample.skeleton, config.target_frames);
  p.joint_mask = sample.skeleton.joint_mask;
  if (p.joint_mask.size() != sample.skeleton.num_joints()) p.joint_mask = JointMask::Constant(sample.skeleton.num_joints(), true);
  const AccelerationSequence& acc = sample.acceleration;
  if (acc.synthesized) {
    Matrix track = acc.size() == config.accel_tokens ? acc.values : interpolate_linear(acc, config.accel_tokens);
    p.accel = Tensor(Shape{config.accel_tokens, 3}, std::move(track));
    p.accel_filled = true;
    staged.has_accel = true;
  } else if (has_usable_acceleration(acc)) {
    Matrix track = moving_average(interpolate_linear(acc, config.accel_tokens), config.moving_average_window);
    p.accel = Tensor(Shape{config.accel_tokens, 3}, std::move(track));
    staged.has_accel = true;
  }
  return staged;
}

std::set<std::string> subjects_of(std::span<const ActionSample> samples) {
  std::set<std::string> out;
  for (const auto& s : samples) out.insert(s.subject);
  return out;
}

std::set<std::string> subjects_of(std::span<const ProcessedSample> samples) {
  std::set<std::string> out;
  for (const auto& s : samples) out.insert(s.subject);
  return out;
}

PreparedSplit prepare_split(std::span<const ActionSample> train, std::span<const ActionSample> eval,
                            const PreprocessConfig& config) {
  config.validate();
  std::vector<StagedSample> staged_train, staged_eval;
  staged_train.reserve(train.size());
  staged_eval.reserve(eval.size());
  for (const auto& s : train) staged_train.push_back(stage_sample(s, config));
  for (const auto& s : eval) staged_eval.push_back(stage_sample(s, config));

  std::vector<Matrix> tracks;
  std::vector<int> labels;
  std::vector<std::string> subjects;
  for (const auto& st : staged_train) {
    subjects.push_back(st.sample.subject);
    if (!st.has_accel || st.sample.accel_filled) continue;
    tracks.push_back(st.sample.accel.data());
    labels.push_back(st.sample.label);
  }
  PreparedSplit split;
  split.fill = compute_fill_stats(tracks, labels, subjects);

  const Rng fill_root = Rng(config.seed).fork("fill");
  auto complete = [&](std::span<const ActionSample> raw, std::vector<StagedSample>& staged, FillMode mode) {
    std::vector<ProcessedSample> out;
    out.reserve(staged.size());
    for (std::size_t i = 0; i < staged.size(); ++i) {
      if (!staged[i].has_accel) {
        Rng rng = fill_root.fork(raw[i].id);
        staged[i] = stage_sample(fill_missing(raw[i], split.fill, rng, mode, config.fill_noise), config);
      }
      out.push_back(std::move(staged[i].sample));
    }
    return out;
  };
  split.train = complete(train, staged_train, FillMode::class_conditional);
  split.eval = complete(eval, staged_eval, FillMode::global);

  split.norm = compute_norm_stats(split.train, config.root_joint);
  if (split.norm.provenance != subjects_of(train)) {
    throw std::logic_error("normalization statistics were not computed from the training subjects");
  }
  if (config.normalize) {
    for (auto& p : split.train) p = normalize(p, split.norm);
    for (auto& p : split.eval) p = normalize(p, split.norm);
  }
  return split;
}

}  // namespace mmt::data
