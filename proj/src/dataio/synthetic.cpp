#include "mmt/dataio/synthetic.hpp"

#include "mmt/numerics/rng.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace mmt::data {

void SyntheticConfig::validate() const {
  if (mode == SyntheticMode::separable && classes < 2) throw std::invalid_argument("synth.classes must be at least 2");
  if (subjects < 1) throw std::invalid_argument("synth.subjects must be positive");
  if (val_subjects < 0 || val_subjects >= subjects) throw std::invalid_argument("synth.val_subjects must be in [0, subjects)");
  if (samples_per_class < 1) throw std::invalid_argument("synth.samples_per_class must be positive");
  if (mode == SyntheticMode::xor_task && samples_per_class % 2 != 0) {
    throw std::invalid_argument("synth.samples_per_class must be even in xor mode");
  }
  if (joints < 1) throw std::invalid_argument("synth.joints must be positive");
  if (!(duration_s > 0.0) || !(skeleton_rate_hz > 0.0) || !(accel_rate_hz > 0.0)) {
    throw std::invalid_argument("synth duration and rates must be positive");
  }
  if (duration_s * accel_rate_hz < 2.0) throw std::invalid_argument("synth: fewer than 2 acceleration samples per sequence");
  if (noise < 0.0 || subject_jitter < 0.0) throw std::invalid_argument("synth noise levels must be non-negative");
  if (accel_gap_fraction < 0.0 || accel_gap_fraction >= 1.0) throw std::invalid_argument("synth.accel_gap_fraction must be in [0, 1)");
}

SyntheticMode parse_synthetic_mode(const std::string& name) {
  if (name == "separable") return SyntheticMode::separable;
  if (name == "xor") return SyntheticMode::xor_task;
  throw std::invalid_argument("unknown synthetic mode '" + name + "' (allowed: separable, xor)");
}

std::string to_string(SyntheticMode mode) { return mode == SyntheticMode::xor_task ? "xor" : "separable"; }

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SkeletonPattern {
  Eigen::MatrixX3d direction;  // J x 3 unit motion directions
  Eigen::MatrixX3d posture;    // J x 3 static offset from the base pose
  Eigen::VectorXd amplitude, phase;
  double cycles;
};

struct AccelPattern {
  Eigen::Vector3d amplitude, phase, cycles;
};

struct Blueprint {
  Eigen::MatrixX3d base_pose;
  std::vector<SkeletonPattern> skeleton;
  std::vector<AccelPattern> accel;
  Index frames;
  Index accel_samples;
};

Blueprint make_blueprint(const SyntheticConfig& c) {
  Rng rng = Rng(c.seed).fork("templates");
  Blueprint bp;
  bp.frames = std::max<Index>(1, static_cast<Index>(std::llround(c.duration_s * c.skeleton_rate_hz)));
  bp.accel_samples = static_cast<Index>(std::floor(c.duration_s * c.accel_rate_hz));
  bp.base_pose.resize(c.joints, 3);
  for (Index j = 0; j < c.joints; ++j)
    for (int a = 0; a < 3; ++a) bp.base_pose(j, a) = rng.uniform() * 2.0 - 1.0;
  for (int p = 0; p < c.patterns(); ++p) {
    SkeletonPattern sp;
    sp.direction.resize(c.joints, 3);
    sp.amplitude.resize(c.joints);
    sp.phase.resize(c.joints);
    for (Index j = 0; j < c.joints; ++j) {
      Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
      sp.direction.row(j) = d.normalized().transpose();
      sp.amplitude(j) = 0.3 + 0.4 * rng.uniform();
      sp.phase(j) = kTwoPi * rng.uniform();
    }
    sp.cycles = 1.0 + p % 3;
    sp.posture.resize(c.joints, 3);
    for (Index j = 0; j < c.joints; ++j)
      for (int a = 0; a < 3; ++a) sp.posture(j, a) = rng.normal();
    bp.skeleton.push_back(sp);

    AccelPattern ap;
    for (int a = 0; a < 3; ++a) {
      ap.amplitude(a) = 0.5 + rng.uniform();
      ap.phase(a) = kTwoPi * rng.uniform();
      ap.cycles(a) = 0.5 + (p + a) % 3 * 0.5;
    }
    bp.accel.push_back(ap);
  }
  return bp;
}

Matrix skeleton_track(const Blueprint& bp, int pattern, double amp_scale) {
  const SkeletonPattern& sp = bp.skeleton[static_cast<std::size_t>(pattern)];
  const Index J = bp.base_pose.rows();
  Matrix frames(bp.frames, J * 3);
  for (Index t = 0; t < bp.frames; ++t) {
    const double u = bp.frames > 1 ? static_cast<double>(t) / static_cast<double>(bp.frames - 1) : 0.0;
    for (Index j = 0; j < J; ++j) {
      const double s = amp_scale * sp.amplitude(j) * std::sin(kTwoPi * sp.cycles * u + sp.phase(j));
      for (int a = 0; a < 3; ++a) frames(t, 3 * j + a) = bp.base_pose(j, a) + sp.posture(j, a) + s * sp.direction(j, a);
    }
  }
  return frames;
}

Eigen::VectorXd accel_times(const SyntheticConfig& c, const Blueprint& bp) {
  return Eigen::VectorXd::LinSpaced(bp.accel_samples, 0.0, static_cast<double>(bp.accel_samples - 1) / c.accel_rate_hz);
}

Matrix accel_track(const SyntheticConfig& c, const Blueprint& bp, int pattern, double amp_scale) {
  const AccelPattern& ap = bp.accel[static_cast<std::size_t>(pattern)];
  const Eigen::VectorXd times = accel_times(c, bp);
  Matrix values(bp.accel_samples, 3);
  for (Index i = 0; i < bp.accel_samples; ++i) {
    const double u = times(i) / c.duration_s;
    for (int a = 0; a < 3; ++a) {
      values(i, a) = amp_scale * ap.amplitude(a) * std::sin(kTwoPi * ap.cycles(a) * u + ap.phase(a));
    }
    values(i, 2) += 9.81;
  }
  return values;
}

std::string sample_name(int subject, int label, int index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "s%02d_c%d_n%03d", subject, label, index);
  return buf;
}

}  // namespace

SyntheticTemplates synthetic_templates(const SyntheticConfig& config) {
  config.validate();
  const Blueprint bp = make_blueprint(config);
  SyntheticTemplates t;
  for (int p = 0; p < config.patterns(); ++p) {
    t.skeleton.push_back(skeleton_track(bp, p, 1.0));
    t.accel.push_back(accel_track(config, bp, p, 1.0));
  }
  t.accel_times = accel_times(config, bp);
  return t;
}

SyntheticSplit generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const Blueprint bp = make_blueprint(config);
  const Rng root(config.seed);
  SyntheticSplit split;
  const int classes = config.effective_classes();
  const int train_subjects = config.subjects - config.val_subjects;
  int missing_left = config.missing_accel_samples;

  for (int subject = 0; subject < config.subjects; ++subject) {
    Rng subject_rng = root.fork("subject").fork(static_cast<std::uint64_t>(subject));
    const double skel_scale = 1.0 + config.subject_jitter * subject_rng.normal();
    const double acc_scale = 1.0 + config.subject_jitter * subject_rng.normal();
    const bool is_val = subject >= train_subjects;
    for (int label = 0; label < classes; ++label) {
      for (int n = 0; n < config.samples_per_class; ++n) {
        int skel_pattern = label, acc_pattern = label;
        if (config.mode == SyntheticMode::xor_task) {
          // Alternate the two combinations that produce this label.
          skel_pattern = n % 2;
          acc_pattern = skel_pattern ^ label;
        }
        ActionSample s;
        s.id = sample_name(subject, label, n);
        s.subject = "S" + std::to_string(subject);
        s.label = label;
        Rng rng = root.fork("sample").fork(s.id);

        s.skeleton.frame_rate_hz = config.skeleton_rate_hz;
        s.skeleton.frames = skeleton_track(bp, skel_pattern, skel_scale);
        for (Index i = 0; i < s.skeleton.frames.size(); ++i) s.skeleton.frames.data()[i] += config.noise * rng.normal();
        s.skeleton.joint_mask = JointMask::Constant(config.joints, true);

        s.acceleration.rate_hz = config.accel_rate_hz;
        s.acceleration.timestamps = accel_times(config, bp);
        s.acceleration.values = accel_track(config, bp, acc_pattern, acc_scale);
        for (Index i = 0; i < s.acceleration.values.size(); ++i) {
          s.acceleration.values.data()[i] += config.noise * rng.normal();
        }
        if (config.accel_gap_fraction > 0.0) {
          for (Index i = 0; i < s.acceleration.values.size(); ++i) {
            if (rng.uniform() < config.accel_gap_fraction) {
              s.acceleration.values.data()[i] = std::numeric_limits<double>::quiet_NaN();
              ++s.acceleration.gaps;
            }
          }
        }
        if (!is_val && missing_left > 0 && n == 0) {
          s.acceleration.timestamps.resize(0);
          s.acceleration.values.resize(0, 3);
          --missing_left;
        }

        const std::array<int, 2> patterns{skel_pattern, acc_pattern};
        if (is_val) {
          split.val.push_back(std::move(s));
          split.val_patterns.push_back(patterns);
        } else {
          split.train.push_back(std::move(s));
          split.train_patterns.push_back(patterns);
        }
      }
    }
  }
  return split;
}

}  // namespace mmt::data
