#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Mat4& m) {
    RigidTransform t;
    t.rotation = m.topLeftCorner<3, 3>();
    t.translation = m.topRightCorner<3, 1>();
    return t;
  }

  // Rotation about +z by `yaw`, then translation.
  static RigidTransform from_yaw(double yaw, const Vec3& translation) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    t.translation = translation;
    return t;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation = rotation.transpose();
    t.translation = -(t.rotation * translation);
    return t;
  }

  // (*this) after `rhs`: x -> this(rhs(x)).
  RigidTransform operator*(const RigidTransform& rhs) const {
    RigidTransform t;
    t.rotation = rotation * rhs.rotation;
    t.translation = rotation * rhs.translation + translation;
    return t;
  }
};

inline Vec3 transform(const Vec3& p, const RigidTransform& T) {
  return T.rotation * p + T.translation;
}

struct Pose {
  double timestamp = 0.0;  // seconds
  Vec3 position = Vec3::Zero();  // world frame, meters
  double heading = 0.0;  // yaw, radians, (-pi, pi]
};

struct LidarPoint {
  Vec3 xyz = Vec3::Zero();  // sensor frame
  std::uint16_t ring = 0;
  double azimuth = 0.0;  // atan2(y, x), (-pi, pi]

  double horizontal_range() const { return std::hypot(xyz.x(), xyz.y()); }
};

// Lidar sweep grouped by laser channel. rings[r] is sorted by azimuth and
// every point in it has ring == r.
struct RingScan {
  std::vector<std::vector<LidarPoint>> rings;
  double timestamp = 0.0;

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const auto& r : rings) n += r.size();
    return n;
  }
};

// Groups loose points by ring and sorts each ring by azimuth.
inline RingScan make_ring_scan(std::vector<LidarPoint> points, double timestamp,
                               std::size_t ring_count = 0) {
  RingScan scan;
  scan.timestamp = timestamp;
  std::size_t rings = ring_count;
  for (const auto& p : points) rings = std::max<std::size_t>(rings, p.ring + 1u);
  scan.rings.resize(rings);
  for (auto& p : points) scan.rings[p.ring].push_back(p);
  for (auto& r : scan.rings) {
    std::stable_sort(r.begin(), r.end(), [](const LidarPoint& a, const LidarPoint& b) {
      return a.azimuth < b.azimuth;
    });
  }
  return scan;
}

struct Pixel {
  double u = 0.0;
  double v = 0.0;  // increases downward
};

struct ImageSize {
  int width = 0;
  int height = 0;

  bool operator==(const ImageSize&) const = default;
  std::size_t area() const { return static_cast<std::size_t>(width) * height; }
};

struct Calibration {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0;
  RigidTransform lidar_to_camera;
  // Lidar pose in the vehicle (pose) frame; the vehicle frame origin is the
  // pose reference point on the road surface, x forward, z up.
  RigidTransform lidar_mount = RigidTransform::from_yaw(0.0, Vec3(0.0, 0.0, 1.9));
  double track_width = 1.6;  // meters
  ImageSize image_size{1224, 400};

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("calibration: fx, fy must be positive");
    if (!(cx >= 0.0 && cx < image_size.width && cy >= 0.0 && cy < image_size.height))
      throw std::invalid_argument("calibration: principal point outside image");
    if (!(track_width > 0.0)) throw std::invalid_argument("calibration: track_width must be positive");
  }

  // world -> lidar for a vehicle at `pose`.
  RigidTransform world_to_lidar(const Pose& pose) const {
    const RigidTransform world_to_vehicle =
        RigidTransform::from_yaw(pose.heading, pose.position).inverse();
    return lidar_mount.inverse() * world_to_vehicle;
  }

  // Intrinsics for the image resampled to `target`.
  Calibration scaled_to(ImageSize target) const {
    Calibration c = *this;
    const double sx = static_cast<double>(target.width) / image_size.width;
    const double sy = static_cast<double>(target.height) / image_size.height;
    c.fx *= sx;
    c.cx *= sx;
    c.fy *= sy;
    c.cy *= sy;
    c.image_size = target;
    return c;
  }
};

inline constexpr double kMinProjectionDepth = 1e-6;

// Pinhole projection with two-term radial distortion. `p` is in the camera
// frame (+z optical axis). Returns nullopt for points on or behind the image
// plane; out-of-image pixels are returned unclipped.
inline std::optional<Pixel> project_point(const Vec3& p, const Calibration& calib) {
  if (p.z() <= kMinProjectionDepth) return std::nullopt;
  const double x = p.x() / p.z();
  const double y = p.y() / p.z();
  const double r2 = x * x + y * y;
  const double d = 1.0 + calib.k1 * r2 + calib.k2 * r2 * r2;
  return Pixel{calib.cx + calib.fx * x * d, calib.cy + calib.fy * y * d};
}

// Inverse of project_point for k1 = k2 = 0.
inline Vec3 unproject(const Pixel& px, double depth, const Calibration& calib) {
  return Vec3((px.u - calib.cx) / calib.fx * depth, (px.v - calib.cy) / calib.fy * depth, depth);
}

inline std::optional<Pixel> project_lidar_point(const Vec3& p_lidar, const Calibration& calib) {
  return project_point(transform(p_lidar, calib.lidar_to_camera), calib);
}

// Keeps points within +-fov_deg/2 of the lidar +x axis.
inline RingScan limit_fov(const RingScan& scan, double fov_deg) {
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) throw std::invalid_argument("limit_fov: fov must be in (0, 360]");
  if (fov_deg >= 360.0) return scan;
  const double half = deg2rad(fov_deg) / 2.0;
  RingScan out;
  out.timestamp = scan.timestamp;
  out.rings.resize(scan.rings.size());
  for (std::size_t r = 0; r < scan.rings.size(); ++r) {
    for (const auto& p : scan.rings[r]) {
      if (std::abs(p.azimuth) <= half) out.rings[r].push_back(p);
    }
  }
  return out;
}

// Standard camera mounting: camera +z = lidar +x, camera +x = lidar -y,
// camera +y = lidar -z. `camera_in_lidar` is the camera centre in lidar
// coordinates.
inline RigidTransform forward_camera_extrinsic(const Vec3& camera_in_lidar) {
  Mat3 r;
  r << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  RigidTransform t;
  t.rotation = r;
  t.translation = -(r * camera_in_lidar);
  return t;
}

}  // namespace trajlabel
