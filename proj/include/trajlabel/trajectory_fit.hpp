#pragma once

#include "trajlabel/geometry.hpp"
#include "trajlabel/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace trajlabel {

struct TrajectoryParams {
  double fov_deg = 90.0;
  double max_pose_distance = 1.0;      // pose to center point, strict <
  bool pose_distance_horizontal = false;
  double min_center_spacing = 1.0;     // horizontal, strict >
  double max_center_elevation_step = 1.0;  // strict <
  double max_wheel_distance = 2.0;     // wheel to center, strict <
  double occlusion_du_px = 10.0;
};

enum class RingRule {
  none,
  no_candidate,
  pose_distance,
  center_spacing,
  center_elevation,
  wheel_distance,
  occlusion,
};

inline std::string_view rule_name(RingRule r) {
  switch (r) {
    case RingRule::none: return "none";
    case RingRule::no_candidate: return "no_candidate";
    case RingRule::pose_distance: return "pose_distance";
    case RingRule::center_spacing: return "center_spacing";
    case RingRule::center_elevation: return "center_elevation";
    case RingRule::wheel_distance: return "wheel_distance";
    case RingRule::occlusion: return "occlusion";
  }
  return "unknown";
}

// Future poses expressed in the lidar frame of the current scan.
inline std::vector<Pose> poses_to_lidar(std::span<const Pose> world_poses, const RigidTransform& world_to_lidar) {
  const double yaw = std::atan2(world_to_lidar.rotation(1, 0), world_to_lidar.rotation(0, 0));
  std::vector<Pose> out;
  out.reserve(world_poses.size());
  for (const auto& p : world_poses) {
    out.push_back({p.timestamp, transform(p.position, world_to_lidar), normalize_angle(p.heading + yaw)});
  }
  return out;
}

struct CenterCandidate {
  int ring = -1;
  int point_idx = -1;
  int pose_idx = -1;
  double pose_distance = std::numeric_limits<double>::infinity();
};

// Per ring, the scan point nearest (3D) to any pose. Ties go to the lower
// azimuth, then the earlier pose.
inline std::vector<std::optional<CenterCandidate>> fit_centers(const RingScan& scan,
                                                               std::span<const Pose> poses) {
  std::vector<std::optional<CenterCandidate>> out(scan.rings.size());
  if (poses.empty()) return out;
  for (std::size_t r = 0; r < scan.rings.size(); ++r) {
    const auto& ring = scan.rings[r];
    double best = std::numeric_limits<double>::infinity();
    CenterCandidate c;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      for (std::size_t k = 0; k < poses.size(); ++k) {
        const double d2 = (ring[i].xyz - poses[k].position).squaredNorm();
        if (d2 < best) {
          best = d2;
          c.point_idx = static_cast<int>(i);
          c.pose_idx = static_cast<int>(k);
        }
      }
    }
    if (c.point_idx >= 0) {
      c.ring = static_cast<int>(r);
      c.pose_distance = std::sqrt(best);
      out[r] = c;
    }
  }
  return out;
}

struct WheelCandidates {
  Vec3 left_estimate = Vec3::Zero();
  Vec3 right_estimate = Vec3::Zero();
  int left_idx = -1;
  int right_idx = -1;
};

inline int nearest_point(std::span<const LidarPoint> ring, const Vec3& target) {
  int best_idx = -1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const double d2 = (ring[i].xyz - target).squaredNorm();
    if (d2 < best) {
      best = d2;
      best_idx = static_cast<int>(i);
    }
  }
  return best_idx;
}

// Wheel positions sit track_width/2 either side of the center, perpendicular
// to the heading in the horizontal plane (left = +90 deg from heading).
inline WheelCandidates extend_wheels(const LidarPoint& center, double heading, double track_width,
                                     std::span<const LidarPoint> ring) {
  const Vec3 left_dir(-std::sin(heading), std::cos(heading), 0.0);
  WheelCandidates w;
  w.left_estimate = center.xyz + 0.5 * track_width * left_dir;
  w.right_estimate = center.xyz - 0.5 * track_width * left_dir;
  w.left_idx = nearest_point(ring, w.left_estimate);
  w.right_idx = nearest_point(ring, w.right_estimate);
  return w;
}

// Line of sight to `wheel` is blocked by `p` when |u_p - u_wheel| < du and
// p lies above the wheel in the image (v_p < v_wheel).
inline bool occludes(const Pixel& wheel, const Pixel& p, double du = 10.0) {
  return std::abs(p.u - wheel.u) < du && p.v < wheel.v;
}

inline bool occluded(const Pixel& wheel, std::span<const Pixel> scan_pixels, double du = 10.0) {
  return std::any_of(scan_pixels.begin(), scan_pixels.end(),
                     [&](const Pixel& p) { return occludes(wheel, p, du); });
}

struct RingCandidate {
  int ring = -1;
  CenterCandidate center;
  double heading = 0.0;  // heading of the matched pose, lidar frame
  WheelCandidates wheels;
};

struct RingTrajectory {
  int ring = -1;
  int center_idx = -1;
  int left_idx = -1;
  int right_idx = -1;
  bool valid = false;
  RingRule failed = RingRule::none;
};

struct TrajectoryFit {
  // Rings with a center candidate, ordered by increasing center range.
  std::vector<RingCandidate> candidates;
  // One entry per candidate, same order.
  std::vector<RingTrajectory> rings;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(rings.begin(), rings.end(), [](const auto& r) { return r.valid; }));
  }
};

// Candidate occluders of a wheel point: points on other rings that are
// nearer to the sensor (horizontal range) than the wheel point.
inline std::vector<Pixel> occluder_pixels(const RingScan& scan, int wheel_ring, const LidarPoint& wheel,
                                          const Calibration& calib) {
  const double wheel_range = wheel.horizontal_range();
  std::vector<Pixel> out;
  for (std::size_t r = 0; r < scan.rings.size(); ++r) {
    if (static_cast<int>(r) == wheel_ring) continue;
    for (const auto& p : scan.rings[r]) {
      if (p.horizontal_range() >= wheel_range) continue;
      if (auto px = project_lidar_point(p.xyz, calib)) out.push_back(*px);
    }
  }
  return out;
}

inline bool wheel_occluded(const RingScan& scan, int ring, const LidarPoint& wheel, const Calibration& calib,
                           double du) {
  const auto wheel_px = project_lidar_point(wheel.xyz, calib);
  if (!wheel_px) return true;  // not visible to the camera at all
  const auto others = occluder_pixels(scan, ring, wheel, calib);
  return occluded(*wheel_px, others, du);
}

// Applies the per-ring acceptance rules in order; rings failing any rule are
// marked invalid and the remaining rings are kept. Consecutive-center rules
// compare against the last valid ring; the first valid ring is exempt.
inline std::vector<RingTrajectory> filter_rings(std::span<const RingCandidate> candidates, const RingScan& scan,
                                                std::span<const Pose> poses, const Calibration& calib,
                                                const TrajectoryParams& params) {
  std::vector<RingTrajectory> out;
  out.reserve(candidates.size());
  const LidarPoint* last_center = nullptr;
  for (const auto& c : candidates) {
    RingTrajectory t;
    t.ring = c.ring;
    const auto& ring = scan.rings[c.ring];
    const LidarPoint& center = ring[c.center.point_idx];
    const auto fail = [&](RingRule rule) {
      t.failed = rule;
      out.push_back(t);
    };
    double pose_dist = c.center.pose_distance;
    if (params.pose_distance_horizontal) {
      pose_dist = (center.xyz - poses[c.center.pose_idx].position).head<2>().norm();
    }
    if (!(pose_dist < params.max_pose_distance)) { fail(RingRule::pose_distance); continue; }
    if (last_center) {
      const double spacing = (center.xyz - last_center->xyz).head<2>().norm();
      if (!(spacing > params.min_center_spacing)) { fail(RingRule::center_spacing); continue; }
      const double dz = std::abs(center.xyz.z() - last_center->xyz.z());
      if (!(dz < params.max_center_elevation_step)) { fail(RingRule::center_elevation); continue; }
    }
    const int li = c.wheels.left_idx;
    const int ri = c.wheels.right_idx;
    if (li < 0 || ri < 0 || li == ri || li == c.center.point_idx || ri == c.center.point_idx) {
      fail(RingRule::wheel_distance);
      continue;
    }
    const double dl = (ring[li].xyz - center.xyz).norm();
    const double dr = (ring[ri].xyz - center.xyz).norm();
    if (!(dl < params.max_wheel_distance && dr < params.max_wheel_distance)) { fail(RingRule::wheel_distance); continue; }
    if (wheel_occluded(scan, c.ring, ring[li], calib, params.occlusion_du_px) ||
        wheel_occluded(scan, c.ring, ring[ri], calib, params.occlusion_du_px)) {
      fail(RingRule::occlusion);
      continue;
    }
    t.center_idx = c.center.point_idx;
    t.left_idx = li;
    t.right_idx = ri;
    t.valid = true;
    out.push_back(t);
    last_center = &center;
  }
  return out;
}

// Full per-frame fit: FOV-limited scan and future poses already in the lidar
// frame.
inline TrajectoryFit fit_trajectory(const RingScan& scan, std::span<const Pose> poses, const Calibration& calib,
                                    const TrajectoryParams& params) {
  TrajectoryFit fit;
  const auto centers = fit_centers(scan, poses);
  for (std::size_t r = 0; r < centers.size(); ++r) {
    if (!centers[r]) continue;
    RingCandidate c;
    c.ring = static_cast<int>(r);
    c.center = *centers[r];
    c.heading = poses[c.center.pose_idx].heading;
    c.wheels = extend_wheels(scan.rings[r][c.center.point_idx], c.heading, calib.track_width, scan.rings[r]);
    fit.candidates.push_back(c);
  }
  std::stable_sort(fit.candidates.begin(), fit.candidates.end(), [&](const RingCandidate& a, const RingCandidate& b) {
    return scan.rings[a.ring][a.center.point_idx].horizontal_range() <
           scan.rings[b.ring][b.center.point_idx].horizontal_range();
  });
  fit.rings = filter_rings(fit.candidates, scan, poses, calib, params);
  return fit;
}

// Even-odd scanline fill sampled at pixel centres (integer coordinates).
inline Mask fill_polygon(std::span<const Pixel> polygon, ImageSize size) {
  Mask mask(size.height, size.width, 0);
  const std::size_t n = polygon.size();
  if (n < 3) return mask;
  std::vector<double> xs;
  for (int row = 0; row < size.height; ++row) {
    const double y = row;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Pixel& a = polygon[i];
      const Pixel& b = polygon[(i + 1) % n];
      if ((a.v <= y && y < b.v) || (b.v <= y && y < a.v)) {
        xs.push_back(a.u + (y - a.v) / (b.v - a.v) * (b.u - a.u));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int c0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int c1 = std::min(size.width, static_cast<int>(std::ceil(xs[k + 1])));
      for (int c = c0; c < c1; ++c) mask(row, c) = 1;
    }
  }
  return mask;
}

// Polygon through the projected wheel points: left chain near->far, then
// right chain far->near. Empty mask when fewer than two rings are valid.
inline Mask trajectory_mask(const TrajectoryFit& fit, const RingScan& scan, const Calibration& calib,
                            ImageSize size) {
  std::vector<Pixel> left, right;
  for (const auto& t : fit.rings) {
    if (!t.valid) continue;
    const auto& ring = scan.rings[t.ring];
    const auto l = project_lidar_point(ring[t.left_idx].xyz, calib);
    const auto r = project_lidar_point(ring[t.right_idx].xyz, calib);
    if (!l || !r) continue;
    left.push_back(*l);
    right.push_back(*r);
  }
  if (left.size() < 2) return Mask(size.height, size.width, 0);
  std::vector<Pixel> polygon(left.begin(), left.end());
  polygon.insert(polygon.end(), right.rbegin(), right.rend());
  return fill_polygon(polygon, size);
}

}  // namespace trajlabel
