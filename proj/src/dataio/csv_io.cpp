#include "mmt/dataio/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace mmt::data {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct CsvReader {
  fs::path path;
  std::ifstream in;
  std::size_t line_no = 0;

  explicit CsvReader(fs::path p) : path(std::move(p)), in(path) {
    if (!in) throw DataError(path.string() + ": cannot open file");
  }

  void expect_header(const std::vector<std::string>& header) {
    std::vector<std::string> got;
    if (!next(got)) throw DataError(path.string() + ": empty file, expected header");
    if (got != header) {
      std::string want;
      for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
      throw DataError(path.string() + ": line 1: expected header '" + want + "'");
    }
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      fields = split_csv(line);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + what);
  }

  double number(const std::string& field, const char* name) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
      fail(std::string("field '") + name + "' is not a finite number: '" + field + "'");
    }
    return v;
  }

  long integer(const std::string& field, const char* name) const {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      fail(std::string("field '") + name + "' is not an integer: '" + field + "'");
    }
    return v;
  }
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SkeletonSequence read_skeleton_csv(const fs::path& path, Index joints, double rate_hz) {
  CsvReader r(path);
  r.expect_header({"frame", "joint", "x", "y", "z"});
  struct Row {
    long frame, joint;
    double x, y, z;
  };
  std::vector<Row> rows;
  long max_frame = -1;
  long max_joint = -1;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 5) r.fail("expected 5 fields, got " + std::to_string(f.size()));
    Row row{r.integer(f[0], "frame"), r.integer(f[1], "joint"), r.number(f[2], "x"), r.number(f[3], "y"),
            r.number(f[4], "z")};
    if (row.frame < 0) r.fail("negative frame index");
    if (row.joint < 0) r.fail("negative joint index");
    if (joints > 0 && row.joint >= joints) {
      r.fail("joint " + std::to_string(row.joint) + " outside 0.." + std::to_string(joints - 1) +
             " (joint count mismatch)");
    }
    max_frame = std::max(max_frame, row.frame);
    max_joint = std::max(max_joint, row.joint);
    rows.push_back(row);
  }
  if (rows.empty()) throw DataError(path.string() + ": no skeleton frames");
  const Index J = joints > 0 ? joints : max_joint + 1;
  const Index T = max_frame + 1;

  Matrix frames = Matrix::Zero(T, J * 3);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> seen = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(T, J, false);
  for (const Row& row : rows) {
    if (seen(row.frame, row.joint)) {
      throw DataError(path.string() + ": duplicate row for frame " + std::to_string(row.frame) + ", joint " +
                      std::to_string(row.joint));
    }
    seen(row.frame, row.joint) = true;
    frames(row.frame, 3 * row.joint + 0) = row.x;
    frames(row.frame, 3 * row.joint + 1) = row.y;
    frames(row.frame, 3 * row.joint + 2) = row.z;
  }
  for (Index t = 0; t < T; ++t) {
    if (!seen.row(t).any()) throw DataError(path.string() + ": frame " + std::to_string(t) + " has no rows (frames must be contiguous)");
  }

  SkeletonSequence seq;
  seq.frame_rate_hz = rate_hz;
  seq.joint_mask = seen.colwise().any().transpose();
  // Joints missing in some frames only: hold the nearest observed position.
  for (Index j = 0; j < J; ++j) {
    if (!seq.joint_mask(j) || seen.col(j).all()) continue;
    std::vector<Index> observed;
    for (Index t = 0; t < T; ++t)
      if (seen(t, j)) observed.push_back(t);
    std::size_t next = 0;
    for (Index t = 0; t < T; ++t) {
      while (next + 1 < observed.size() && observed[next + 1] <= t) ++next;
      if (seen(t, j)) continue;
      Index src = observed[next];
      if (next + 1 < observed.size() && std::abs(observed[next + 1] - t) < std::abs(src - t)) src = observed[next + 1];
      frames.block(t, 3 * j, 1, 3) = frames.block(src, 3 * j, 1, 3);
    }
  }
  seq.frames = std::move(frames);
  return seq;
}

AccelerationSequence read_accel_csv(const fs::path& path, double rate_hz) {
  CsvReader r(path);
  r.expect_header({"t", "ax", "ay", "az"});
  std::vector<double> ts;
  std::vector<std::array<double, 3>> vals;
  Index gaps = 0;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 4) r.fail("expected 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) r.fail("timestamp is blank");
    const double t = r.number(f[0], "t");
    if (!ts.empty() && !(t > ts.back())) r.fail("timestamps must be strictly increasing");
    std::array<double, 3> v{};
    for (int a = 0; a < 3; ++a) {
      if (f[a + 1].empty()) {
        v[a] = std::numeric_limits<double>::quiet_NaN();
        ++gaps;
      } else {
        v[a] = r.number(f[a + 1], a == 0 ? "ax" : a == 1 ? "ay" : "az");
      }
    }
    ts.push_back(t);
    vals.push_back(v);
  }
  AccelerationSequence seq;
  seq.rate_hz = rate_hz;
  seq.gaps = gaps;
  seq.timestamps = Eigen::Map<const Eigen::VectorXd>(ts.data(), static_cast<Index>(ts.size()));
  seq.values.resize(static_cast<Index>(vals.size()), 3);
  for (std::size_t i = 0; i < vals.size(); ++i)
    for (int a = 0; a < 3; ++a) seq.values(static_cast<Index>(i), a) = vals[i][a];
  return seq;
}

std::vector<ActionSample> load_samples(const fs::path& manifest, const LoadOptions& options) {
  CsvReader r(manifest);
  r.expect_header({"sample_id", "subject", "label", "skeleton_csv", "accel_csv"});
  const fs::path base = manifest.parent_path();
  std::vector<ActionSample> samples;
  std::vector<std::string> errors;
  Index joints = options.joints;
  std::vector<std::string> f;
  while (r.next(f)) {
    if (f.size() != 5) r.fail("expected 5 fields, got " + std::to_string(f.size()));
    if (f[0].empty() || f[1].empty()) r.fail("sample_id and subject are required");
    const long label = r.integer(f[2], "label");
    if (label < 0) r.fail("label must be non-negative");
    ActionSample s;
    s.id = f[0];
    s.subject = f[1];
    s.label = static_cast<int>(label);
    try {
      s.skeleton = read_skeleton_csv(base / f[3], joints, options.skeleton_rate_hz);
      if (joints == 0) joints = s.skeleton.num_joints();
      s.acceleration = read_accel_csv(base / f[4], options.accel_rate_hz);
      samples.push_back(std::move(s));
    } catch (const DataError& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " sample(s) failed to load:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  return samples;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp.string() + ": cannot open for writing");
    out << content;
    if (!out.flush()) throw DataError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

void write_samples(std::span<const ActionSample> samples, const fs::path& dir, const std::string& manifest_name) {
  std::ostringstream manifest;
  manifest << "sample_id,subject,label,skeleton_csv,accel_csv\n";
  for (const ActionSample& s : samples) {
    const std::string skel_rel = "skeleton/" + s.id + ".csv";
    const std::string acc_rel = "accel/" + s.id + ".csv";
    manifest << s.id << ',' << s.subject << ',' << s.label << ',' << skel_rel << ',' << acc_rel << '\n';

    std::ostringstream skel;
    skel << "frame,joint,x,y,z\n";
    const Index J = s.skeleton.num_joints();
    for (Index t = 0; t < s.skeleton.num_frames(); ++t) {
      for (Index j = 0; j < J; ++j) {
        if (s.skeleton.joint_mask.size() == J && !s.skeleton.joint_mask(j)) continue;
        skel << t << ',' << j;
        for (int a = 0; a < 3; ++a) skel << ',' << format_double(s.skeleton.frames(t, 3 * j + a));
        skel << '\n';
      }
    }
    write_file_atomic(dir / skel_rel, skel.str());

    std::ostringstream acc;
    acc << "t,ax,ay,az\n";
    for (Index i = 0; i < s.acceleration.size(); ++i) {
      acc << format_double(s.acceleration.timestamps(i));
      for (int a = 0; a < 3; ++a) {
        acc << ',';
        const double v = s.acceleration.values(i, a);
        if (std::isfinite(v)) acc << format_double(v);
      }
      acc << '\n';
    }
    write_file_atomic(dir / acc_rel, acc.str());
  }
  write_file_atomic(dir / manifest_name, manifest.str());
}

}  // namespace mmt::data
