#pragma once

#include "trajlabel/camera_label.hpp"
#include "trajlabel/geometry.hpp"
#include "trajlabel/image.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scans: u32 count, then per point f32 x, y, z, u16 ring, f32 azimuth.

namespace bin {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace bin

inline void write_scan(const fs::path& path, const RingScan& scan) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(scan.point_count()));
  for (const auto& ring : scan.rings) {
    for (const auto& p : ring) {
      bin::put<float>(os, static_cast<float>(p.xyz.x()));
      bin::put<float>(os, static_cast<float>(p.xyz.y()));
      bin::put<float>(os, static_cast<float>(p.xyz.z()));
      bin::put<std::uint16_t>(os, p.ring);
      bin::put<float>(os, static_cast<float>(p.azimuth));
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline RingScan read_scan(const fs::path& path, double timestamp = 0.0) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open scan: " + path.string());
  std::uint32_t count = 0;
  if (!bin::get(is, count)) throw std::runtime_error("truncated scan header: " + path.string());
  std::vector<LidarPoint> pts(count);
  for (auto& p : pts) {
    float x, y, z, az;
    std::uint16_t ring;
    if (!(bin::get(is, x) && bin::get(is, y) && bin::get(is, z) && bin::get(is, ring) && bin::get(is, az))) {
      throw std::runtime_error("truncated scan payload: " + path.string());
    }
    p.xyz = Vec3(x, y, z);
    p.ring = ring;
    p.azimuth = az;
  }
  return make_ring_scan(std::move(pts), timestamp);
}

// ---------------------------------------------------------------------------
// Feature maps: "PFMAP1", u32 Hp, u32 Wp, u32 D, Hp*Wp*D f32 row-major.

inline constexpr char kFeatureMagic[6] = {'P', 'F', 'M', 'A', 'P', '1'};

inline void write_feature_map(const fs::path& path, const PatchFeatureMap& fm) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kFeatureMagic, sizeof(kFeatureMagic));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(fm.rows));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(fm.cols));
  bin::put<std::uint32_t>(os, static_cast<std::uint32_t>(fm.dim));
  os.write(reinterpret_cast<const char*>(fm.data.data()), static_cast<std::streamsize>(fm.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

struct FeatureGridDims {
  int rows = 0;
  int cols = 0;
};

// Throws naming the file on a bad magic, truncated payload, or a grid that
// does not match `expected`.
inline PatchFeatureMap load_feature_map(const fs::path& path, std::optional<FeatureGridDims> expected = std::nullopt,
                                        int patch_size = 14) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open feature map: " + path.string());
  char magic[6];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("malformed feature map header (bad magic): " + path.string());
  }
  std::uint32_t rows = 0, cols = 0, dim = 0;
  if (!(bin::get(is, rows) && bin::get(is, cols) && bin::get(is, dim))) {
    throw std::runtime_error("malformed feature map header (truncated): " + path.string());
  }
  if (rows == 0 || cols == 0 || dim == 0 || rows > 65535 || cols > 65535 || dim > 65535) {
    throw std::runtime_error("malformed feature map header (dims): " + path.string());
  }
  if (expected && (static_cast<int>(rows) != expected->rows || static_cast<int>(cols) != expected->cols)) {
    throw std::runtime_error("feature map grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                             " does not match expected " + std::to_string(expected->rows) + "x" +
                             std::to_string(expected->cols) + ": " + path.string());
  }
  PatchFeatureMap fm(static_cast<int>(rows), static_cast<int>(cols), static_cast<int>(dim), patch_size);
  fm.frame_id = path.stem().string();
  const auto bytes = static_cast<std::streamsize>(fm.data.size() * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(fm.data.data()), bytes)) {
    throw std::runtime_error("truncated feature map payload: " + path.string());
  }
  for (float v : fm.data) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite feature value: " + path.string());
  }
  return fm;
}

// ---------------------------------------------------------------------------
// CSV: poses and timestamp indices.

namespace csv {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

inline double to_double(const std::string& s, const fs::path& path, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

}  // namespace csv

inline double yaw_from_quaternion(double qw, double qx, double qy, double qz) {
  return std::atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz));
}

// Header row required: timestamp,x,y,z followed by either qw,qx,qy,qz or yaw.
inline std::vector<Pose> read_poses(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open poses: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty pose file: " + path.string());
  const auto header = csv::split(line);
  const auto col = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int ct = col("timestamp"), cx = col("x"), cy = col("y"), cz = col("z");
  const int cyaw = col("yaw"), cqw = col("qw"), cqx = col("qx"), cqy = col("qy"), cqz = col("qz");
  if (ct < 0 || cx < 0 || cy < 0 || cz < 0) throw std::runtime_error("pose header needs timestamp,x,y,z: " + path.string());
  const bool quat = cqw >= 0 && cqx >= 0 && cqy >= 0 && cqz >= 0;
  if (!quat && cyaw < 0) throw std::runtime_error("pose header needs qw,qx,qy,qz or yaw: " + path.string());
  std::vector<Pose> poses;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = csv::split(line);
    if (cells.size() < header.size()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": short row");
    const auto num = [&](int c) { return csv::to_double(cells[c], path, lineno); };
    Pose p;
    p.timestamp = num(ct);
    p.position = Vec3(num(cx), num(cy), num(cz));
    p.heading = normalize_angle(quat ? yaw_from_quaternion(num(cqw), num(cqx), num(cqy), num(cqz)) : num(cyaw));
    if (!poses.empty() && !(p.timestamp > poses.back().timestamp)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": timestamps must increase");
    }
    poses.push_back(p);
  }
  return poses;
}

inline void write_poses(const fs::path& path, const std::vector<Pose>& poses) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "timestamp,x,y,z,yaw\n" << std::setprecision(17);
  for (const auto& p : poses) {
    os << p.timestamp << ',' << p.position.x() << ',' << p.position.y() << ',' << p.position.z() << ',' << p.heading
       << '\n';
  }
}

struct TimedEntry {
  double timestamp = 0.0;
  std::string id;
};

inline std::vector<TimedEntry> read_index(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open index: " + path.string());
  std::string line;
  std::getline(is, line);  // header
  std::vector<TimedEntry> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = csv::split(line);
    if (cells.size() < 2) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": short row");
    out.push_back({csv::to_double(cells[0], path, lineno), cells[1]});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
  return out;
}

inline void write_index(const fs::path& path, const std::string& id_column, const std::vector<TimedEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << "timestamp," << id_column << '\n' << std::setprecision(17);
  for (const auto& e : entries) os << e.timestamp << ',' << e.id << '\n';
}

// ---------------------------------------------------------------------------
// Calibration (YAML).

namespace yaml_detail {

inline Mat4 read_mat4(const YAML::Node& node, const std::string& key, const fs::path& path) {
  if (!node.IsSequence() || node.size() != 16) {
    throw std::runtime_error(path.string() + ": '" + key + "' must be 16 numbers (4x4 row-major)");
  }
  Mat4 m;
  for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = node[i].as<double>();
  return m;
}

}  // namespace yaml_detail

inline Calibration load_calibration(const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("cannot parse calibration " + path.string() + ": " + e.what());
  }
  const auto req = [&](const char* key) {
    if (!root[key]) throw std::runtime_error(path.string() + ": missing calibration key '" + key + "'");
    return root[key];
  };
  Calibration c;
  try {
    c.fx = req("fx").as<double>();
    c.fy = req("fy").as<double>();
    c.cx = req("cx").as<double>();
    c.cy = req("cy").as<double>();
    c.k1 = root["k1"] ? root["k1"].as<double>() : 0.0;
    c.k2 = root["k2"] ? root["k2"].as<double>() : 0.0;
    c.lidar_to_camera = RigidTransform::from_matrix(yaml_detail::read_mat4(req("lidar_to_camera"), "lidar_to_camera", path));
    if (root["lidar_mount"]) {
      c.lidar_mount = RigidTransform::from_matrix(yaml_detail::read_mat4(root["lidar_mount"], "lidar_mount", path));
    }
    c.track_width = req("track_width").as<double>();
    c.image_size = {req("image_width").as<int>(), req("image_height").as<int>()};
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(path.string() + ": bad calibration value: " + e.what());
  }
  c.validate();
  return c;
}

inline void save_calibration(const fs::path& path, const Calibration& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  const auto mat = [&](const Mat4& m) {
    out << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 16; ++i) out << m(i / 4, i % 4);
    out << YAML::EndSeq;
  };
  out << YAML::BeginMap;
  out << YAML::Key << "fx" << YAML::Value << c.fx << YAML::Key << "fy" << YAML::Value << c.fy;
  out << YAML::Key << "cx" << YAML::Value << c.cx << YAML::Key << "cy" << YAML::Value << c.cy;
  out << YAML::Key << "k1" << YAML::Value << c.k1 << YAML::Key << "k2" << YAML::Value << c.k2;
  out << YAML::Key << "lidar_to_camera" << YAML::Value;
  mat(c.lidar_to_camera.matrix());
  out << YAML::Key << "lidar_mount" << YAML::Value;
  mat(c.lidar_mount.matrix());
  out << YAML::Key << "track_width" << YAML::Value << c.track_width;
  out << YAML::Key << "image_width" << YAML::Value << c.image_size.width;
  out << YAML::Key << "image_height" << YAML::Value << c.image_size.height;
  out << YAML::EndMap;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << out.c_str() << '\n';
}

// ---------------------------------------------------------------------------
// Synchronisation and sampling.

// Linear interpolation of position and (shortest-arc) heading; nullopt
// outside the pose time range.
inline std::optional<Pose> pose_at(const std::vector<Pose>& poses, double t) {
  if (poses.empty() || t < poses.front().timestamp || t > poses.back().timestamp) return std::nullopt;
  const auto it = std::lower_bound(poses.begin(), poses.end(), t,
                                   [](const Pose& p, double v) { return p.timestamp < v; });
  if (it->timestamp == t) return *it;
  const Pose& b = *it;
  const Pose& a = *(it - 1);
  const double s = (t - a.timestamp) / (b.timestamp - a.timestamp);
  Pose p;
  p.timestamp = t;
  p.position = a.position + s * (b.position - a.position);
  p.heading = normalize_angle(a.heading + s * normalize_angle(b.heading - a.heading));
  return p;
}

// Poses at or after `t`, up to `travel_m` of path length.
inline std::vector<Pose> future_poses(const std::vector<Pose>& poses, double t, double travel_m) {
  std::vector<Pose> out;
  auto it = std::lower_bound(poses.begin(), poses.end(), t, [](const Pose& p, double v) { return p.timestamp < v; });
  double travelled = 0.0;
  for (; it != poses.end(); ++it) {
    if (!out.empty()) travelled += (it->position - out.back().position).norm();
    if (travelled > travel_m) break;
    out.push_back(*it);
  }
  return out;
}

struct SyncedFrame {
  std::string frame_id;
  double image_time = 0.0;
  std::string scan_id;
  double scan_time = 0.0;
  Pose pose;  // vehicle pose at scan time
  std::vector<Pose> future;
};

// Pairs every image with its nearest scan within `tol`. A scan claimed by
// several images keeps only the closest (earliest on ties). Images without a
// pose at scan time are dropped.
inline std::vector<SyncedFrame> synchronize(const std::vector<TimedEntry>& images, const std::vector<TimedEntry>& scans,
                                            const std::vector<Pose>& poses, double tol, double future_travel_m = 60.0) {
  struct Match {
    std::size_t image;
    double dt;
  };
  std::vector<std::optional<Match>> best(scans.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double t = images[i].timestamp;
    const auto it = std::lower_bound(scans.begin(), scans.end(), t,
                                     [](const TimedEntry& e, double v) { return e.timestamp < v; });
    std::optional<std::size_t> nearest;
    double dt = std::numeric_limits<double>::infinity();
    if (it != scans.end()) {
      nearest = static_cast<std::size_t>(it - scans.begin());
      dt = std::abs(it->timestamp - t);
    }
    if (it != scans.begin()) {
      const auto prev = it - 1;
      if (std::abs(prev->timestamp - t) <= dt) {
        nearest = static_cast<std::size_t>(prev - scans.begin());
        dt = std::abs(prev->timestamp - t);
      }
    }
    if (!nearest || !(dt <= tol)) continue;
    auto& b = best[*nearest];
    if (!b || dt < b->dt) b = Match{i, dt};
  }
  std::vector<SyncedFrame> out;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    if (!best[s]) continue;
    const auto& img = images[best[s]->image];
    const auto pose = pose_at(poses, scans[s].timestamp);
    if (!pose) continue;
    SyncedFrame f;
    f.frame_id = img.id;
    f.image_time = img.timestamp;
    f.scan_id = scans[s].id;
    f.scan_time = scans[s].timestamp;
    f.pose = *pose;
    f.future = future_poses(poses, img.timestamp, future_travel_m);
    out.push_back(std::move(f));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_time < b.image_time; });
  return out;
}

// Greedy: keep the first frame, then every frame at least spacing_m of
// straight-line distance from the last kept one (to within 1e-9 m, so frames
// laid out exactly spacing_m apart survive interpolation round-off).
template <typename Frame, typename PositionOf>
std::vector<Frame> sample_by_distance(const std::vector<Frame>& frames, double spacing_m, PositionOf position_of) {
  if (!(spacing_m > 0.0)) throw std::invalid_argument("sample_by_distance: spacing must be positive");
  std::vector<Frame> out;
  for (const auto& f : frames) {
    if (out.empty() || (position_of(f) - position_of(out.back())).norm() >= spacing_m - 1e-9) out.push_back(f);
  }
  return out;
}

inline std::vector<SyncedFrame> sample_by_distance(const std::vector<SyncedFrame>& frames, double spacing_m) {
  return sample_by_distance(frames, spacing_m, [](const SyncedFrame& f) -> const Vec3& { return f.pose.position; });
}

inline std::vector<SyncedFrame> exclude_frames(std::vector<SyncedFrame> frames, const std::vector<std::string>& excluded) {
  std::erase_if(frames, [&](const SyncedFrame& f) {
    return std::find(excluded.begin(), excluded.end(), f.frame_id) != excluded.end();
  });
  return frames;
}

// ---------------------------------------------------------------------------
// Sequence directory:
//   calib.yaml, poses.csv, images.csv (timestamp,frame_id),
//   scans.csv (timestamp,scan_id), images/<frame_id>.png,
//   scans/<scan_id>.bin, features/<frame_id>.pfmap, gt/<frame_id>.png

struct SequencePaths {
  fs::path root;

  fs::path calibration() const { return root / "calib.yaml"; }
  fs::path poses() const { return root / "poses.csv"; }
  fs::path image_index() const { return root / "images.csv"; }
  fs::path scan_index() const { return root / "scans.csv"; }
  fs::path image(const std::string& id) const { return root / "images" / (id + ".png"); }
  fs::path scan(const std::string& id) const { return root / "scans" / (id + ".bin"); }
  fs::path features(const std::string& id) const { return root / "features" / (id + ".pfmap"); }
  fs::path ground_truth(const std::string& id) const { return root / "gt" / (id + ".png"); }
};

struct FrameSample {
  std::string frame_id;
  RgbImage image;
  RingScan scan;
  Pose pose;
  std::vector<Pose> future_poses;  // world frame
  Calibration calib;
};

inline FrameSample load_frame(const SequencePaths& seq, const SyncedFrame& f, const Calibration& calib) {
  FrameSample s;
  s.frame_id = f.frame_id;
  s.image = read_png(seq.image(f.frame_id));
  s.scan = read_scan(seq.scan(f.scan_id), f.scan_time);
  s.pose = f.pose;
  s.future_poses = f.future;
  s.calib = calib;
  return s;
}

}  // namespace trajlabel
