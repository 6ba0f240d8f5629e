#pragma once

#include "trajlabel/camera_label.hpp"
#include "trajlabel/geometry.hpp"
#include "trajlabel/image.hpp"
#include "trajlabel/ingest.hpp"
#include "trajlabel/trajectory_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trajlabel::synth {

// Velodyne VLP-32C channel elevations, degrees, ascending.
inline std::vector<double> vlp32c_elevations_deg() {
  return {-25.0,  -15.639, -11.31, -8.843, -7.254, -6.148, -5.333, -4.667, -4.0,   -3.667, -3.333,
          -3.0,   -2.667,  -2.333, -2.0,   -1.667, -1.333, -1.0,   -0.667, -0.333, 0.0,    0.333,
          0.667,  1.0,     1.333,  1.667,  2.333,  3.333,  4.667,  7.0,    10.333, 15.0};
}

struct Box {
  Vec3 min = Vec3::Zero();  // road frame
  Vec3 max = Vec3::Zero();
};

// Road frame: the centreline starts at the origin heading +x and curves with
// constant `curvature` (1/m, positive = left). z = 0 is the road surface.
// Cross-section: flat road of road_width, banks rising at bank_slope up to
// bank_height, then flat.
struct SceneParams {
  double road_width = 6.0;
  double bank_height = 0.5;
  double bank_slope = 1.0;
  double road_roughness_std = 0.02;
  // Correlation length of the terrain height field; 0 gives independent
  // per-point jitter instead.
  double roughness_correlation_m = 0.8;
  std::uint64_t terrain_seed = 0;
  double lane_offset = -1.0;  // vehicle path offset from centreline, + = left
  double curvature = 0.0;
  double sensor_height = 1.9;
  std::vector<double> ring_elevations_deg = vlp32c_elevations_deg();
  double azimuth_step_deg = 0.2;
  double max_range = 100.0;

  // Camera rigidly mounted relative to the lidar, looking along lidar +x.
  Vec3 camera_in_lidar = Vec3(0.3, 0.0, -0.5);
  double fx = 900.0, fy = 900.0, cx = 612.0, cy = 60.0;
  ImageSize image_size{1224, 400};
  double track_width = 1.6;
  double pixel_noise_std = 4.0;

  int feature_dim = 8;
  double feature_noise_std = 0.1;
  int patch_size = 14;

  double station = 10.0;       // vehicle position along the path, meters
  double pose_spacing = 0.5;   // meters
  double path_ahead = 80.0;    // poses generated this far ahead
  double speed = 10.0;         // m/s, maps stations to timestamps
  std::vector<std::pair<double, double>> pose_gaps;  // station ranges without poses
  std::vector<Box> obstacles;

  std::uint64_t noise_seed = 0;

  void validate() const {
    if (!(road_width > track_width)) throw std::invalid_argument("synth: road_width must exceed track_width");
    if (!(bank_height >= 0.0)) throw std::invalid_argument("synth: bank_height must be >= 0");
    if (!(bank_slope >= 0.0)) throw std::invalid_argument("synth: bank_slope must be >= 0");
    if (!(sensor_height > 0.0)) throw std::invalid_argument("synth: sensor_height must be positive");
  }
};

enum class SurfaceClass : std::uint8_t { none, road, bank, obstacle };

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  SurfaceClass cls = SurfaceClass::none;
  double lateral = 0.0;
};

// Analytic road geometry shared by lidar, camera and ground truth.
class Scene {
 public:
  explicit Scene(const SceneParams& p) : p_(p) {
    p_.validate();
    bank_run_ = (p_.bank_height > 0.0 && p_.bank_slope > 0.0) ? p_.bank_height / p_.bank_slope : 0.0;
    if (p_.roughness_correlation_m > 0.0 && p_.road_roughness_std > 0.0) {
      std::mt19937_64 rng(p_.terrain_seed ^ 0x9e3779b97f4a7c15ull);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      constexpr int kWaves = 32;
      const double amplitude = p_.road_roughness_std * std::sqrt(2.0 / kWaves);
      for (int i = 0; i < kWaves; ++i) {
        const double dir = 2.0 * kPi * unit(rng);
        const double wavelength = p_.roughness_correlation_m * 1.25 * std::pow(6.4, unit(rng));
        const double k = 2.0 * kPi / wavelength;
        waves_.push_back({Eigen::Vector2d(k * std::cos(dir), k * std::sin(dir)), 2.0 * kPi * unit(rng), amplitude});
      }
    }
    if (p_.curvature != 0.0) {
      radius_ = 1.0 / std::abs(p_.curvature);
      side_ = p_.curvature > 0 ? 1.0 : -1.0;
      center_ = Eigen::Vector2d(0.0, side_ * radius_);
    }
  }

  const SceneParams& params() const { return p_; }

  // Zero-mean Gaussian-like micro relief: a sum of random-phase plane waves
  // with wavelengths between 1.25 and 8 correlation lengths, scaled so the
  // field's standard deviation is road_roughness_std.
  double relief(const Eigen::Vector2d& xy) const {
    double z = 0.0;
    for (const auto& w : waves_) z += w.amplitude * std::cos(w.k.dot(xy) + w.phase);
    return z;
  }

  // Centreline point and heading at station s.
  std::pair<Eigen::Vector2d, double> centerline(double s) const {
    if (p_.curvature == 0.0) return {Eigen::Vector2d(s, 0.0), 0.0};
    const double k = p_.curvature;
    return {Eigen::Vector2d(std::sin(k * s) / k, (1.0 - std::cos(k * s)) / k), normalize_angle(k * s)};
  }

  // Vehicle pose (ground contact point) at station s.
  Pose vehicle_pose(double s) const {
    const auto [c, h] = centerline(s);
    const Eigen::Vector2d left(-std::sin(h), std::cos(h));
    const Eigen::Vector2d xy = c + p_.lane_offset * left;
    return {s / p_.speed, Vec3(xy.x(), xy.y(), 0.0), h};
  }

  // Signed lateral offset from the centreline, + = left.
  double lateral(const Eigen::Vector2d& xy) const {
    if (p_.curvature == 0.0) return xy.y();
    return side_ * (radius_ - (xy - center_).norm());
  }

  double surface_height(double lateral_offset) const {
    const double e = std::abs(lateral_offset) - p_.road_width / 2.0;
    if (e <= 0.0 || bank_run_ == 0.0) return 0.0;
    return std::min(p_.bank_slope * e, p_.bank_height);
  }

  bool is_road(double lateral_offset) const { return std::abs(lateral_offset) <= p_.road_width / 2.0; }

  // First intersection of origin + t * dir (t > 0) with the scene.
  Hit intersect(const Vec3& origin, const Vec3& dir) const {
    Hit best;
    const double w2 = p_.road_width / 2.0;
    struct Piece {
      double lo, hi, a, b;  // z = a + b * d on d in [lo, hi]
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<Piece> pieces;
    if (bank_run_ > 0.0) {
      const double H = p_.bank_height, k = p_.bank_slope;
      pieces = {{-inf, -(w2 + bank_run_), H, 0.0},
                {-(w2 + bank_run_), -w2, -k * w2, -k},
                {-w2, w2, 0.0, 0.0},
                {w2, w2 + bank_run_, -k * w2, k},
                {w2 + bank_run_, inf, H, 0.0}};
    } else {
      pieces = {{-inf, inf, 0.0, 0.0}};
    }
    constexpr double tol = 1e-9;
    const auto consider = [&](double t) {
      if (!(t > 1e-9) || t >= best.t) return;
      const Vec3 q = origin + t * dir;
      const double d = lateral(q.head<2>());
      const double z = surface_height(d);
      if (std::abs(q.z() - z) > 1e-6) return;
      best.t = t;
      best.cls = is_road(d) ? SurfaceClass::road : SurfaceClass::bank;
      best.lateral = d;
    };
    for (const auto& pc : pieces) {
      if (p_.curvature == 0.0 || pc.b == 0.0) {
        if (p_.curvature == 0.0) {
          // z: o_z + t v_z = a + b (o_y + t v_y)
          const double den = dir.z() - pc.b * dir.y();
          if (std::abs(den) < 1e-15) continue;
          const double t = (pc.a + pc.b * origin.y() - origin.z()) / den;
          const double d = origin.y() + t * dir.y();
          if (d >= pc.lo - tol && d <= pc.hi + tol) consider(t);
        } else {
          if (std::abs(dir.z()) < 1e-15) continue;
          const double t = (pc.a - origin.z()) / dir.z();
          const Vec3 q = origin + t * dir;
          const double d = lateral(q.head<2>());
          if (d >= pc.lo - tol && d <= pc.hi + tol) consider(t);
        }
      } else {
        // rho(t) = alpha + beta t, with d = side (R - rho) and z = a + b d.
        const double sb = side_ * pc.b;
        const double alpha = radius_ - (origin.z() - pc.a) / sb;
        const double beta = -dir.z() / sb;
        const Eigen::Vector2d q = origin.head<2>() - center_;
        const Eigen::Vector2d v = dir.head<2>();
        const double A = v.squaredNorm() - beta * beta;
        const double B = 2.0 * (q.dot(v) - alpha * beta);
        const double C = q.squaredNorm() - alpha * alpha;
        std::array<double, 2> roots{};
        int nroots = 0;
        if (std::abs(A) < 1e-15) {
          if (std::abs(B) > 1e-15) roots[nroots++] = -C / B;
        } else {
          const double disc = B * B - 4.0 * A * C;
          if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            roots[nroots++] = (-B - sq) / (2.0 * A);
            roots[nroots++] = (-B + sq) / (2.0 * A);
          }
        }
        for (int i = 0; i < nroots; ++i) {
          const double t = roots[i];
          if (alpha + beta * t < 0.0) continue;
          const Vec3 pt = origin + t * dir;
          const double d = lateral(pt.head<2>());
          if (d >= pc.lo - tol && d <= pc.hi + tol) consider(t);
        }
      }
    }
    for (const auto& box : p_.obstacles) {
      double t0 = 0.0, t1 = inf;
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
          if (origin[a] < box.min[a] || origin[a] > box.max[a]) miss = true;
          continue;
        }
        double ta = (box.min[a] - origin[a]) / dir[a];
        double tb = (box.max[a] - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) miss = true;
      }
      if (!miss && t0 > 1e-9 && t0 < best.t) {
        best.t = t0;
        best.cls = SurfaceClass::obstacle;
        best.lateral = lateral((origin + t0 * dir).head<2>());
      }
    }
    return best;
  }

  // Lidar pose in the road frame for a vehicle at `pose`.
  RigidTransform lidar_to_world(const Pose& pose) const {
    return RigidTransform::from_yaw(pose.heading, pose.position) * lidar_mount();
  }

  RigidTransform lidar_mount() const { return RigidTransform::from_yaw(0.0, Vec3(0.0, 0.0, p_.sensor_height)); }

  Calibration calibration() const {
    Calibration c;
    c.fx = p_.fx;
    c.fy = p_.fy;
    c.cx = p_.cx;
    c.cy = p_.cy;
    c.k1 = c.k2 = 0.0;
    c.lidar_to_camera = forward_camera_extrinsic(p_.camera_in_lidar);
    c.lidar_mount = lidar_mount();
    c.track_width = p_.track_width;
    c.image_size = p_.image_size;
    return c;
  }

 private:
  struct Wave {
    Eigen::Vector2d k;
    double phase;
    double amplitude;
  };

  SceneParams p_;
  std::vector<Wave> waves_;
  double bank_run_ = 0.0;
  double radius_ = 0.0;
  double side_ = 1.0;
  Eigen::Vector2d center_ = Eigen::Vector2d::Zero();
};

struct SyntheticFrame {
  FrameSample sample;
  Mask ground_truth;
  Grid<std::uint8_t> surface;  // SurfaceClass per pixel
  PatchFeatureMap features;
  SceneParams params;
  // Analytic road boundary: lateral offsets of the road edges in the road
  // frame (|d| <= road_width / 2 is road).
  double left_edge = 0.0;
  double right_edge = 0.0;
};

inline std::vector<Pose> path_poses(const Scene& scene, double from, double to) {
  const auto& p = scene.params();
  std::vector<Pose> poses;
  const int n = static_cast<int>(std::floor((to - from) / p.pose_spacing + 1e-9));
  for (int k = 0; k <= n; ++k) {
    const double s = from + k * p.pose_spacing;
    const bool gap = std::any_of(p.pose_gaps.begin(), p.pose_gaps.end(),
                                 [&](const auto& g) { return s >= g.first && s <= g.second; });
    if (!gap) poses.push_back(scene.vehicle_pose(s));
  }
  return poses;
}

// Lidar sweep at the vehicle pose; terrain points carry the scene's height
// relief (or independent Gaussian jitter when the correlation length is 0).
inline RingScan simulate_scan(const Scene& scene, const Pose& pose, std::mt19937_64& rng) {
  const auto& p = scene.params();
  const RigidTransform l2w = scene.lidar_to_world(pose);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<LidarPoint> points;
  const int steps = static_cast<int>(std::lround(360.0 / p.azimuth_step_deg));
  for (std::size_t r = 0; r < p.ring_elevations_deg.size(); ++r) {
    const double phi = deg2rad(p.ring_elevations_deg[r]);
    for (int k = 0; k < steps; ++k) {
      const double theta = normalize_angle(deg2rad(-180.0 + (k + 0.5) * p.azimuth_step_deg));
      const Vec3 dir_l(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi));
      const Vec3 dir_w = l2w.rotation * dir_l;
      const Hit hit = scene.intersect(l2w.translation, dir_w);
      // Draw regardless of hit so the noise stream does not depend on geometry.
      const double n = jitter(rng);
      if (hit.cls == SurfaceClass::none || hit.t > p.max_range) continue;
      LidarPoint lp;
      lp.xyz = hit.t * dir_l;
      if (hit.cls != SurfaceClass::obstacle) {
        lp.xyz.z() += p.roughness_correlation_m > 0.0
                          ? scene.relief((l2w.translation + hit.t * dir_w).head<2>())
                          : p.road_roughness_std * n;
      }
      lp.ring = static_cast<std::uint16_t>(r);
      lp.azimuth = std::atan2(lp.xyz.y(), lp.xyz.x());
      points.push_back(lp);
    }
  }
  return make_ring_scan(std::move(points), pose.timestamp, p.ring_elevations_deg.size());
}

// Per-pixel surface class from camera rays.
inline Grid<std::uint8_t> render_surface(const Scene& scene, const Pose& pose) {
  const auto& p = scene.params();
  const Calibration calib = scene.calibration();
  const RigidTransform cam_to_world = scene.lidar_to_world(pose) * calib.lidar_to_camera.inverse();
  Grid<std::uint8_t> cls(p.image_size.height, p.image_size.width, 0);
  for (int r = 0; r < p.image_size.height; ++r) {
    for (int c = 0; c < p.image_size.width; ++c) {
      const Vec3 dir_c((c - p.cx) / p.fx, (r - p.cy) / p.fy, 1.0);
      const Vec3 dir_w = cam_to_world.rotation * dir_c.normalized();
      const Hit hit = scene.intersect(cam_to_world.translation, dir_w);
      cls(r, c) = static_cast<std::uint8_t>(hit.cls);
    }
  }
  return cls;
}

inline RgbImage shade(const Grid<std::uint8_t>& surface, double noise_std, std::mt19937_64& rng) {
  static constexpr std::array<Rgb, 4> palette = {{
      {170, 190, 220},  // sky
      {105, 102, 100},  // packed road
      {232, 234, 240},  // snow bank
      {150, 45, 40},    // obstacle
  }};
  std::normal_distribution<double> noise(0.0, noise_std);
  RgbImage img(surface.height(), surface.width());
  for (std::size_t i = 0; i < surface.count(); ++i) {
    const Rgb& base = palette[surface.data()[i]];
    for (int k = 0; k < 3; ++k) {
      img.data()[i][k] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(base[k] + noise(rng)), 0, 255));
    }
  }
  return img;
}

// Road patches get e0 + noise, everything else e1 + noise.
inline PatchFeatureMap toy_features(const Mask& ground_truth, int patch_size, int dim, double noise_std,
                                    std::mt19937_64& rng) {
  const int rows = ground_truth.height() / patch_size;
  const int cols = ground_truth.width() / patch_size;
  PatchFeatureMap fm(rows, cols, dim, patch_size);
  const Mask road = trajectory_patches(ground_truth, patch_size, rows, cols, 0.5);
  std::normal_distribution<double> noise(0.0, noise_std);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      float* f = fm.at(r, c);
      for (int k = 0; k < dim; ++k) f[k] = static_cast<float>(noise(rng));
      f[road(r, c) ? 0 : 1] += 1.0f;
    }
  }
  return fm;
}

inline std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d", index);
  return buf;
}

// One synthetic frame with the vehicle at params.station.
inline SyntheticFrame generate(const SceneParams& params, const std::string& frame_id = "frame_000000") {
  const Scene scene(params);
  std::mt19937_64 rng(params.noise_seed);
  SyntheticFrame f;
  f.params = params;
  f.left_edge = params.road_width / 2.0;
  f.right_edge = -params.road_width / 2.0;

  const Pose pose = scene.vehicle_pose(params.station);
  f.sample.frame_id = frame_id;
  f.sample.pose = pose;
  f.sample.calib = scene.calibration();
  f.sample.scan = simulate_scan(scene, pose, rng);
  f.sample.future_poses = path_poses(scene, params.station, params.station + params.path_ahead);
  f.surface = render_surface(scene, pose);
  f.ground_truth = Mask(f.surface.height(), f.surface.width(), 0);
  for (std::size_t i = 0; i < f.surface.count(); ++i) {
    f.ground_truth.data()[i] = f.surface.data()[i] == static_cast<std::uint8_t>(SurfaceClass::road) ? 1 : 0;
  }
  f.sample.image = shade(f.surface, params.pixel_noise_std, rng);
  f.features = toy_features(f.ground_truth, params.patch_size, params.feature_dim, params.feature_noise_std, rng);
  f.features.frame_id = frame_id;
  return f;
}

struct SequenceSpec {
  int frames = 20;
  double frame_spacing = 2.0;   // meters between frames
  double scan_time_offset = 0.004;  // scan stamps lag image stamps
  std::uint64_t seed = 0;
};

// Writes a sequence directory (see SequencePaths) of frames along one road.
inline void write_sequence(const fs::path& dir, SceneParams base, const SequenceSpec& spec) {
  const SequencePaths seq{dir};
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "scans");
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "gt");
  const double first = base.station;
  const double last = first + (spec.frames - 1) * spec.frame_spacing;
  const Scene scene(base);
  save_calibration(seq.calibration(), scene.calibration());
  write_poses(seq.poses(), path_poses(scene, std::max(0.0, first - 10.0), last + base.path_ahead));
  std::vector<TimedEntry> images, scans;
  for (int k = 0; k < spec.frames; ++k) {
    SceneParams p = base;
    p.station = first + k * spec.frame_spacing;
    p.noise_seed = spec.seed * 1000003ull + static_cast<std::uint64_t>(k);
    p.terrain_seed = spec.seed;
    const std::string id = frame_name(k);
    SyntheticFrame f = generate(p, id);
    const double t = f.sample.pose.timestamp;
    write_png(seq.image(id), f.sample.image);
    const std::string scan_id = "scan_" + id.substr(6);
    write_scan(seq.scan(scan_id), f.sample.scan);
    write_feature_map(seq.features(id), f.features);
    write_mask_png(seq.ground_truth(id), f.ground_truth);
    images.push_back({t, id});
    scans.push_back({t + spec.scan_time_offset, scan_id});
  }
  write_index(seq.image_index(), "frame_id", images);
  write_index(seq.scan_index(), "scan_id", scans);
}

// ---------------------------------------------------------------------------
// Brute-force label oracle. Straight re-evaluation of the height and
// thresholded-gradient labels over explicit point lists, written without the
// running sums used by the pipeline. Test use only.

struct OracleLabel {
  std::optional<double> height;
  double gradient = 1.0;
  double lidar = 1.0;
};

struct OracleConfig {
  double sigma_h = 0.1;
  double sigma_g = 0.02;
  double radial_reject_m = 5.0;
  bool threshold = true;
  bool strict_single_cue = false;
};

// Keyed by (ring, point index).
inline std::map<std::pair<int, int>, OracleLabel> oracle_labels(const RingScan& scan,
                                                                std::span<const RingTrajectory> rings,
                                                                const OracleConfig& cfg) {
  std::map<std::pair<int, int>, OracleLabel> out;
  for (const auto& t : rings) {
    if (!t.valid) continue;
    const auto& pts = scan.rings[t.ring];
    const int n = static_cast<int>(pts.size());
    const int c = t.center_idx;
    const double z0 = pts[c].xyz.z();
    const double r0 = std::sqrt(pts[c].xyz.x() * pts[c].xyz.x() + pts[c].xyz.y() * pts[c].xyz.y());

    // Outward step into point j from its neighbour on the center side.
    const auto step = [&](int j) {
      if (j == c) return 0.0;
      const int prev = j > c ? j - 1 : j + 1;
      return pts[j].xyz.z() - pts[prev].xyz.z();
    };
    double eps = 0.0;
    if (cfg.threshold) {
      std::vector<double> span_steps;
      for (int j = std::min(t.left_idx, t.right_idx); j <= std::max(t.left_idx, t.right_idx); ++j) {
        if (j != c) span_steps.push_back(step(j));
      }
      if (!span_steps.empty()) {
        eps = span_steps[0];
        for (double s : span_steps) eps = s > eps ? s : eps;
      }
    }
    for (int i = 0; i < n; ++i) {
      OracleLabel lab;
      const double ri = std::sqrt(pts[i].xyz.x() * pts[i].xyz.x() + pts[i].xyz.y() * pts[i].xyz.y());
      if (!(std::abs(ri - r0) > cfg.radial_reject_m)) {
        const double h = pts[i].xyz.z() > z0 ? pts[i].xyz.z() - z0 : 0.0;
        lab.height = std::exp(-(h * h) / (cfg.sigma_h * cfg.sigma_h));
      }
      double g_sum = 0.0;
      if (i > c) {
        for (int j = c + 1; j <= i; ++j) g_sum += step(j) >= eps ? step(j) : 0.0;
      } else if (i < c) {
        for (int j = c - 1; j >= i; --j) g_sum += step(j) >= eps ? step(j) : 0.0;
      }
      lab.gradient = std::exp(-(g_sum * g_sum) / (cfg.sigma_g * cfg.sigma_g));
      if (lab.height) {
        lab.lidar = 0.5 * (*lab.height + lab.gradient);
      } else {
        lab.lidar = cfg.strict_single_cue ? std::numeric_limits<double>::quiet_NaN() : lab.gradient;
      }
      out[{t.ring, i}] = lab;
    }
  }
  return out;
}

}  // namespace trajlabel::synth
