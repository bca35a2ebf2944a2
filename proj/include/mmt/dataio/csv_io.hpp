#pragma once

// Manifest, skeleton and acceleration CSV files.
//
//   manifest:      sample_id,subject,label,skeleton_csv,accel_csv
//   skeleton CSV:  frame,joint,x,y,z   (absent row = missing joint)
//   accel CSV:     t,ax,ay,az          (blank numeric field = missing value)
//
// CSV paths inside a manifest are resolved relative to the manifest.

#include "mmt/dataio/sample.hpp"

#include <filesystem>
#include <span>

namespace mmt::data {

struct LoadOptions {
  /// Expected joints per frame; 0 infers from the first sample and then
  /// requires every other sample to agree.
  Index joints = 0;
  double skeleton_rate_hz = 100.0;
  double accel_rate_hz = 4.0;
};

std::vector<ActionSample> load_samples(const std::filesystem::path& manifest, const LoadOptions& options = {});

SkeletonSequence read_skeleton_csv(const std::filesystem::path& path, Index joints, double rate_hz);
AccelerationSequence read_accel_csv(const std::filesystem::path& path, double rate_hz);

/// Writes `<dir>/<manifest_name>` plus skeleton/<id>.csv and accel/<id>.csv.
/// Values are printed with 17 significant digits, so a reload is exact.
void write_samples(std::span<const ActionSample> samples, const std::filesystem::path& dir,
                   const std::string& manifest_name = "manifest.csv");

/// Write `content` to a temporary sibling and rename it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mmt::data
