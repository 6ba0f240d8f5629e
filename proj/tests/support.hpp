// Random generators and brute-force reference evaluators shared by the unit
// and acceptance tests. The references recompute every quantity from its
// definition over explicit index lists and never call the library code they
// are compared against.
#pragma once

#include "trajlabel/trajlabel.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace testing_support {

using namespace trajlabel;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  double normal(double mean, double std) { return std::normal_distribution<double>(mean, std)(gen_); }
  bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

// One ring of n points on a circle of radius ~range ahead of the sensor,
// azimuth ascending, heights a random walk with occasional steps.
inline std::vector<LidarPoint> random_ring(Rng& rng, int n, int ring_id = 0) {
  std::vector<LidarPoint> ring;
  const double range = rng.uniform(4.0, 40.0);
  const double az0 = rng.uniform(-0.8, -0.2);
  const double daz = rng.uniform(0.5, 1.6) / std::max(n, 1);
  double z = rng.uniform(-2.2, -1.6);
  for (int i = 0; i < n; ++i) {
    const double az = az0 + i * daz;
    const double r = range + rng.normal(0.0, rng.coin(0.05) ? 3.0 : 0.2);
    z += rng.coin(0.05) ? rng.uniform(-0.3, 0.3) : rng.normal(0.0, 0.01);
    LidarPoint p;
    p.xyz = Vec3(r * std::cos(az), r * std::sin(az), z);
    p.ring = static_cast<std::uint16_t>(ring_id);
    p.azimuth = std::atan2(p.xyz.y(), p.xyz.x());
    ring.push_back(p);
  }
  return ring;
}

inline Mask random_mask(Rng& rng, int h, int w, double p = 0.5) {
  Mask m(h, w);
  for (auto& v : m.data()) v = rng.coin(p) ? 1 : 0;
  return m;
}

inline PatchFeatureMap random_features(Rng& rng, int rows, int cols, int dim) {
  PatchFeatureMap fm(rows, cols, dim);
  for (auto& v : fm.data) v = static_cast<float>(rng.normal(0.0, 1.0));
  return fm;
}

inline Calibration forward_calibration(double fx = 900.0, ImageSize size = {1224, 400}) {
  Calibration c;
  c.fx = c.fy = fx;
  c.cx = size.width / 2.0;
  c.cy = 60.0;
  c.image_size = size;
  c.lidar_to_camera = forward_camera_extrinsic(Vec3(0.3, 0.0, -0.5));
  return c;
}

// ---------------------------------------------------------------------------
// Label references, written from the definitions.

inline double ref_height_label(double z, double z0, double sigma_h) {
  const double h = z > z0 ? z - z0 : 0.0;
  return std::exp(-(h * h) / (sigma_h * sigma_h));
}

// Outward height step into point j of a ring with center c.
inline double ref_step(const std::vector<LidarPoint>& ring, int c, int j) {
  if (j == c) return 0.0;
  return j > c ? ring[j].xyz.z() - ring[j - 1].xyz.z() : ring[j].xyz.z() - ring[j + 1].xyz.z();
}

inline double ref_epsilon(const std::vector<LidarPoint>& ring, int c, int left, int right) {
  std::vector<double> steps;
  for (int j = std::min(left, right); j <= std::max(left, right); ++j) {
    if (j != c) steps.push_back(ref_step(ring, c, j));
  }
  if (steps.empty()) return 0.0;
  double m = steps.front();
  for (double s : steps) m = std::max(m, s);
  return m;
}

// Sum of thresholded steps on the path from the center to point i.
inline double ref_gradient_sum(const std::vector<LidarPoint>& ring, int c, int i, double eps) {
  std::vector<int> path;
  if (i > c) {
    for (int j = c + 1; j <= i; ++j) path.push_back(j);
  } else {
    for (int j = c - 1; j >= i; --j) path.push_back(j);
  }
  double g = 0.0;
  for (int j : path) {
    const double s = ref_step(ring, c, j);
    if (s >= eps) g += s;
  }
  return g;
}

inline double ref_gradient_label(double g, double sigma_g) { return std::exp(-(g / sigma_g) * (g / sigma_g)); }

inline double ref_cosine(const float* a, const std::vector<double>& b, int dim) {
  long double dot = 0, na = 0, nb = 0;
  for (int k = 0; k < dim; ++k) {
    dot += static_cast<long double>(a[k]) * b[k];
    na += static_cast<long double>(a[k]) * a[k];
    nb += static_cast<long double>(b[k]) * b[k];
  }
  if (na == 0) return 0.0;
  return static_cast<double>(dot / std::sqrt(na * nb));
}

inline double ref_camera_label(double c, double frame_max, double sigma_c) {
  double n = c / frame_max;
  if (n < 0) n = 0;
  if (n > 1) n = 1;
  return std::exp(-((1 - n) / sigma_c) * ((1 - n) / sigma_c));
}

// ---------------------------------------------------------------------------
// Trajectory filter re-check. Re-evaluates the five ring rules for a fitted
// frame from raw geometry and returns, per ring entry, the first failing rule.

inline bool ref_occludes(double wu, double wv, double pu, double pv, double du) {
  return std::fabs(pu - wu) < du && pv < wv;
}

inline std::vector<RingRule> recheck_rules(const TrajectoryFit& fit, const RingScan& scan,
                                           const std::vector<Pose>& poses, const Calibration& calib,
                                           const TrajectoryParams& params) {
  std::vector<RingRule> out;
  std::optional<Vec3> last;
  const auto wheel_hidden = [&](int ring, int idx) {
    const Vec3& w = scan.rings[ring][idx].xyz;
    const Vec3 wc = calib.lidar_to_camera.rotation * w + calib.lidar_to_camera.translation;
    if (wc.z() <= 1e-6) return true;
    const double wu = calib.cx + calib.fx * wc.x() / wc.z();
    const double wv = calib.cy + calib.fy * wc.y() / wc.z();
    const double wr = std::sqrt(w.x() * w.x() + w.y() * w.y());
    for (std::size_t r = 0; r < scan.rings.size(); ++r) {
      if (static_cast<int>(r) == ring) continue;
      for (const auto& p : scan.rings[r]) {
        if (std::sqrt(p.xyz.x() * p.xyz.x() + p.xyz.y() * p.xyz.y()) >= wr) continue;
        const Vec3 pc = calib.lidar_to_camera.rotation * p.xyz + calib.lidar_to_camera.translation;
        if (pc.z() <= 1e-6) continue;
        if (ref_occludes(wu, wv, calib.cx + calib.fx * pc.x() / pc.z(), calib.cy + calib.fy * pc.y() / pc.z(),
                         params.occlusion_du_px)) {
          return true;
        }
      }
    }
    return false;
  };
  for (std::size_t k = 0; k < fit.rings.size(); ++k) {
    const auto& cand = fit.candidates[k];
    const auto& ring = scan.rings[cand.ring];
    const Vec3& c = ring[cand.center.point_idx].xyz;
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& p : poses) dmin = std::min(dmin, (c - p.position).norm());
    RingRule rule = RingRule::none;
    const int li = cand.wheels.left_idx, ri = cand.wheels.right_idx;
    if (!(dmin < params.max_pose_distance)) {
      rule = RingRule::pose_distance;
    } else if (last && !(std::hypot(c.x() - last->x(), c.y() - last->y()) > params.min_center_spacing)) {
      rule = RingRule::center_spacing;
    } else if (last && !(std::fabs(c.z() - last->z()) < params.max_center_elevation_step)) {
      rule = RingRule::center_elevation;
    } else if (li < 0 || ri < 0 || li == ri || li == cand.center.point_idx || ri == cand.center.point_idx ||
               !((ring[li].xyz - c).norm() < params.max_wheel_distance) ||
               !((ring[ri].xyz - c).norm() < params.max_wheel_distance)) {
      rule = RingRule::wheel_distance;
    } else if (wheel_hidden(cand.ring, li) || wheel_hidden(cand.ring, ri)) {
      rule = RingRule::occlusion;
    }
    if (rule == RingRule::none) last = c;
    out.push_back(rule);
  }
  return out;
}

// Mean-field with every kernel value computed directly, O(N^2) per
// iteration. Small images only.
inline std::vector<double> ref_mean_field(const RgbImage& img, const Grid<double>& prob, const CrfParams& p) {
  const int h = img.height(), w = img.width();
  const int n = h * w;
  std::vector<double> ur(n), ub(n), q(n);
  for (int i = 0; i < n; ++i) {
    double v = prob.data()[i];
    v = v < p.unary_clip ? p.unary_clip : (v > 1 - p.unary_clip ? 1 - p.unary_clip : v);
    ur[i] = -std::log(v);
    ub[i] = -std::log(1 - v);
    q[i] = std::exp(-ur[i]) / (std::exp(-ur[i]) + std::exp(-ub[i]));
  }
  for (int it = 0; it < p.iterations; ++it) {
    std::vector<double> next(n);
    for (int i = 0; i < n; ++i) {
      const int yi = i / w, xi = i % w;
      double s_num = 0, s_den = 0, b_num = 0, b_den = 0;
      for (int j = 0; j < n; ++j) {
        const int yj = j / w, xj = j % w;
        const double d2 = double(xi - xj) * (xi - xj) + double(yi - yj) * (yi - yj);
        const double ks = std::exp(-d2 / (2 * p.spatial_sigma * p.spatial_sigma));
        double c2 = 0;
        for (int k = 0; k < 3; ++k) {
          const double dc = double(img.data()[i][k]) - img.data()[j][k];
          c2 += dc * dc;
        }
        const double kb = std::exp(-d2 / (2 * p.bilateral_sigma_xy * p.bilateral_sigma_xy) -
                                   c2 / (2 * p.bilateral_sigma_rgb * p.bilateral_sigma_rgb));
        s_num += ks * q[j];
        s_den += ks;
        b_num += kb * q[j];
        b_den += kb;
      }
      const double road_mass = p.spatial_weight * s_num / s_den + p.bilateral_weight * b_num / b_den;
      const double bg_mass = p.spatial_weight * (1 - s_num / s_den) + p.bilateral_weight * (1 - b_num / b_den);
      const double er = ur[i] + bg_mass;
      const double eb = ub[i] + road_mass;
      next[i] = 1.0 / (1.0 + std::exp(er - eb));
    }
    q = next;
  }
  return q;
}

// Two-region test image with a strong colour boundary along a diagonal.
inline RgbImage bipartite_image(int h, int w, Rng& rng, double noise = 3.0) {
  RgbImage img(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const bool a = c + r / 2 < w / 2 + 5;
      const double base[3] = {a ? 100.0 : 220.0, a ? 100.0 : 225.0, a ? 105.0 : 235.0};
      for (int k = 0; k < 3; ++k) {
        img(r, c)[k] = static_cast<std::uint8_t>(std::clamp(base[k] + rng.normal(0, noise), 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace testing_support
