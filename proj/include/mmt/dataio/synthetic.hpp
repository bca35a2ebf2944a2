#pragma once

#include "mmt/dataio/sample.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace mmt::data {

enum class SyntheticMode {
  /// Each class has its own skeleton motion and acceleration template.
  separable,
  /// Two classes; label = skeleton pattern bit XOR acceleration pattern bit,
  /// balanced so that neither modality alone carries label information.
  xor_task,
};

struct SyntheticConfig {
  SyntheticMode mode = SyntheticMode::separable;
  int classes = 6;                 // forced to 2 in xor mode
  int subjects = 8;
  int val_subjects = 2;            // the last subjects form the validation split
  int samples_per_class = 6;       // per subject
  Index joints = 29;
  double duration_s = 10.0;
  double skeleton_rate_hz = 25.0;
  double accel_rate_hz = 4.0;
  double noise = 0.05;             // additive sensor noise, in template units
  double subject_jitter = 0.05;    // per-subject amplitude scale spread
  double accel_gap_fraction = 0.0; // fraction of acceleration fields left blank
  int missing_accel_samples = 0;   // training samples with no acceleration at all
  std::uint64_t seed = 0;

  void validate() const;
  int effective_classes() const { return mode == SyntheticMode::xor_task ? 2 : classes; }
  int patterns() const { return mode == SyntheticMode::xor_task ? 2 : classes; }
};

SyntheticMode parse_synthetic_mode(const std::string& name);
std::string to_string(SyntheticMode mode);

/// Noise-free pattern signals on the generator's native sampling grids.
struct SyntheticTemplates {
  std::vector<Matrix> skeleton;  // per pattern: T_s x (J*3)
  std::vector<Matrix> accel;     // per pattern: T_a x 3
  Eigen::VectorXd accel_times;
};

SyntheticTemplates synthetic_templates(const SyntheticConfig& config);

struct SyntheticSplit {
  std::vector<ActionSample> train;
  std::vector<ActionSample> val;
  /// (skeleton pattern, acceleration pattern) per sample, aligned with train/val.
  std::vector<std::array<int, 2>> train_patterns;
  std::vector<std::array<int, 2>> val_patterns;
};

SyntheticSplit generate_synthetic(const SyntheticConfig& config);

}  // namespace mmt::data
