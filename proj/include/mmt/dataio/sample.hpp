#pragma once

#include "mmt/numerics/tensor.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace mmt::data {

/// Malformed or inconsistent input data; the message names the file.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using JointMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Motion-capture stream: one row per frame, joint j in columns 3j..3j+2.
struct SkeletonSequence {
  Matrix frames;  // T_s x (J*3)
  double frame_rate_hz = 100.0;
  JointMask joint_mask;  // false = joint absent for the whole sequence

  Index num_frames() const { return frames.rows(); }
  Index num_joints() const { return frames.cols() / 3; }
};

/// Triaxial acceleration. Missing fields are stored as NaN.
struct AccelerationSequence {
  Eigen::VectorXd timestamps;  // seconds, strictly increasing
  Matrix values;               // T_a x 3
  double rate_hz = 4.0;
  Index gaps = 0;              // number of blank fields seen by the loader
  bool synthesized = false;    // produced by fill_missing, already smoothed

  Index size() const { return timestamps.size(); }
  bool empty() const { return timestamps.size() == 0; }
};

struct ActionSample {
  std::string id;
  std::string subject;
  int label = 0;
  SkeletonSequence skeleton;
  AccelerationSequence acceleration;
};

/// Model-ready sample with fixed token counts.
struct ProcessedSample {
  std::string id;
  std::string subject;
  int label = 0;
  Tensor skeleton;  // [F x J x 3]
  Tensor accel;     // [N_a x 3]
  JointMask joint_mask;
  bool accel_filled = false;

  Index frames() const { return skeleton.shape()[0]; }
  Index joints() const { return skeleton.shape()[1]; }
  Index accel_tokens() const { return accel.shape()[0]; }
};

}  // namespace mmt::data
