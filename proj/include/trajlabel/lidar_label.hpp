#pragma once

#include "trajlabel/geometry.hpp"
#include "trajlabel/image.hpp"
#include "trajlabel/trajectory_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace trajlabel {

struct LidarParams {
  double sigma_h = 0.1;
  double sigma_g = 0.02;
  double radial_reject_m = 5.0;
  bool radial_3d = false;          // false: horizontal range
  bool strict_single_cue = false;  // true: a point needs every enabled cue
  bool gradient_strict = false;    // true: g_j counts only for dz > eps
  double max_triangle_edge_px = 200.0;
};

struct LidarCues {
  bool height = true;
  bool gradient = true;
  bool threshold = true;  // false: eps = 0 ("no thresholding")
};

// Height above the ring's trajectory center (zero below it), mapped to
// exp(-H^2 / sigma_h^2). Points whose radial distance differs from the
// center's by more than radial_reject_m get no label.
inline std::vector<std::optional<double>> height_label(std::span<const LidarPoint> ring, const LidarPoint& center,
                                                       double sigma_h, double radial_reject_m = 5.0,
                                                       bool radial_3d = false) {
  const auto radial = [&](const LidarPoint& p) { return radial_3d ? p.xyz.norm() : p.horizontal_range(); };
  const double z0 = center.xyz.z();
  const double r0 = radial(center);
  std::vector<std::optional<double>> out(ring.size());
  for (std::size_t i = 0; i < ring.size(); ++i) {
    if (std::abs(radial(ring[i]) - r0) > radial_reject_m) continue;
    const double h = std::max(ring[i].xyz.z() - z0, 0.0);
    out[i] = std::exp(-(h * h) / (sigma_h * sigma_h));
  }
  return out;
}

// Height steps along a ring walked outward from the center in both azimuth
// directions. dz[center] = 0; for i > center dz[i] = z[i] - z[i-1], for
// i < center dz[i] = z[i] - z[i+1].
struct RingProfile {
  int center = 0;
  std::vector<double> dz;
};

inline RingProfile make_profile(std::span<const LidarPoint> ring, int center_idx) {
  RingProfile p;
  p.center = center_idx;
  p.dz.assign(ring.size(), 0.0);
  for (int i = center_idx + 1; i < static_cast<int>(ring.size()); ++i) p.dz[i] = ring[i].xyz.z() - ring[i - 1].xyz.z();
  for (int i = center_idx - 1; i >= 0; --i) p.dz[i] = ring[i].xyz.z() - ring[i + 1].xyz.z();
  return p;
}

// Largest outward step between the two wheel points; 0 for an empty span.
inline double adaptive_threshold(const RingProfile& profile, int left_idx, int right_idx) {
  const int lo = std::min(left_idx, right_idx);
  const int hi = std::max(left_idx, right_idx);
  double eps = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (int j = lo; j <= hi; ++j) {
    if (j == profile.center) continue;
    eps = std::max(eps, profile.dz[j]);
    any = true;
  }
  return any ? eps : 0.0;
}

struct GradientResult {
  std::vector<double> sum;    // G_i
  std::vector<double> label;  // exp(-G_i^2 / sigma_g^2)
};

// Cumulative sum of thresholded steps from the center outward, one branch per
// azimuth direction.
inline GradientResult gradient_label(const RingProfile& profile, double eps, double sigma_g, bool strict = false) {
  const int n = static_cast<int>(profile.dz.size());
  GradientResult r;
  r.sum.assign(n, 0.0);
  r.label.assign(n, 1.0);
  const auto g = [&](double dz) { return (strict ? dz > eps : dz >= eps) ? dz : 0.0; };
  double acc = 0.0;
  for (int i = profile.center + 1; i < n; ++i) r.sum[i] = acc += g(profile.dz[i]);
  acc = 0.0;
  for (int i = profile.center - 1; i >= 0; --i) r.sum[i] = acc += g(profile.dz[i]);
  for (int i = 0; i < n; ++i) r.label[i] = std::exp(-(r.sum[i] * r.sum[i]) / (sigma_g * sigma_g));
  return r;
}

// Mean of the available cues; single-cue points keep that cue unless strict.
inline std::optional<double> combine_lidar(std::optional<double> height, std::optional<double> gradient,
                                           bool strict = false) {
  if (height && gradient) return (*height + *gradient) / 2.0;
  if (strict) return std::nullopt;
  if (height) return height;
  return gradient;
}

struct PointLabel {
  int ring = -1;
  int index = -1;
  Vec3 xyz = Vec3::Zero();
  std::optional<double> height;
  std::optional<double> gradient;
  std::optional<double> value;  // l_lid
};

struct FrameLidarLabels {
  std::vector<PointLabel> points;
  int negative_eps_rings = 0;
};

// Labels every point on valid rings of a fitted frame.
inline FrameLidarLabels label_frame(const RingScan& scan, const TrajectoryFit& fit, const LidarParams& params,
                                    const LidarCues& cues = {}) {
  FrameLidarLabels out;
  for (const auto& t : fit.rings) {
    if (!t.valid) continue;
    const auto& ring = scan.rings[t.ring];
    std::vector<std::optional<double>> h(ring.size());
    if (cues.height) h = height_label(ring, ring[t.center_idx], params.sigma_h, params.radial_reject_m, params.radial_3d);
    GradientResult g;
    if (cues.gradient) {
      const RingProfile profile = make_profile(ring, t.center_idx);
      const double eps = cues.threshold ? adaptive_threshold(profile, t.left_idx, t.right_idx) : 0.0;
      if (eps < 0.0) ++out.negative_eps_rings;
      g = gradient_label(profile, eps, params.sigma_g, params.gradient_strict);
    }
    for (std::size_t i = 0; i < ring.size(); ++i) {
      PointLabel p;
      p.ring = t.ring;
      p.index = static_cast<int>(i);
      p.xyz = ring[i].xyz;
      p.height = h[i];
      if (cues.gradient) p.gradient = g.label[i];
      if (cues.height && cues.gradient) {
        p.value = combine_lidar(p.height, p.gradient, params.strict_single_cue);
      } else {
        p.value = cues.height ? p.height : p.gradient;
      }
      if (p.value) out.points.push_back(p);
    }
  }
  return out;
}

namespace detail {

struct LabeledPixel {
  Pixel px;
  double value = 0.0;
};

inline double pixel_distance(const Pixel& a, const Pixel& b) { return std::hypot(a.u - b.u, a.v - b.v); }

// Barycentric fill over pixel centres; edges inclusive.
inline void raster_triangle(const LabeledPixel& a, const LabeledPixel& b, const LabeledPixel& c, LabelImage& img) {
  const double area = (b.px.u - a.px.u) * (c.px.v - a.px.v) - (c.px.u - a.px.u) * (b.px.v - a.px.v);
  if (std::abs(area) < 1e-12) return;
  const double umin = std::min({a.px.u, b.px.u, c.px.u});
  const double umax = std::max({a.px.u, b.px.u, c.px.u});
  const double vmin = std::min({a.px.v, b.px.v, c.px.v});
  const double vmax = std::max({a.px.v, b.px.v, c.px.v});
  const int c0 = std::max(0, static_cast<int>(std::ceil(umin)));
  const int c1 = std::min(img.width() - 1, static_cast<int>(std::floor(umax)));
  const int r0 = std::max(0, static_cast<int>(std::ceil(vmin)));
  const int r1 = std::min(img.height() - 1, static_cast<int>(std::floor(vmax)));
  constexpr double tol = 1e-9;
  for (int r = r0; r <= r1; ++r) {
    for (int col = c0; col <= c1; ++col) {
      const double u = col, v = r;
      const double wa = ((b.px.u - u) * (c.px.v - v) - (c.px.u - u) * (b.px.v - v)) / area;
      const double wb = ((c.px.u - u) * (a.px.v - v) - (a.px.u - u) * (c.px.v - v)) / area;
      const double wc = 1.0 - wa - wb;
      if (wa < -tol || wb < -tol || wc < -tol) continue;
      img.values(r, col) = std::clamp(wa * a.value + wb * b.value + wc * c.value, 0.0, 1.0);
      img.coverage(r, col) = 1;
    }
  }
}

inline void raster_if_short(const LabeledPixel& a, const LabeledPixel& b, const LabeledPixel& c, double max_edge,
                            LabelImage& img) {
  if (pixel_distance(a.px, b.px) > max_edge || pixel_distance(b.px, c.px) > max_edge ||
      pixel_distance(c.px, a.px) > max_edge) {
    return;
  }
  raster_triangle(a, b, c, img);
}

// Zips two azimuth-ordered rings into a triangle strip, advancing along
// whichever ring gives the shorter diagonal.
inline void raster_strip(std::span<const LabeledPixel> near, std::span<const LabeledPixel> far, double max_edge,
                         LabelImage& img) {
  if (near.empty() || far.empty() || near.size() + far.size() < 3) return;
  std::size_t i = 0, j = 0;
  while (i + 1 < near.size() || j + 1 < far.size()) {
    const bool advance_near =
        j + 1 >= far.size() ||
        (i + 1 < near.size() &&
         pixel_distance(near[i + 1].px, far[j].px) <= pixel_distance(near[i].px, far[j + 1].px));
    if (advance_near) {
      raster_if_short(near[i], near[i + 1], far[j], max_edge, img);
      ++i;
    } else {
      raster_if_short(near[i], far[j], far[j + 1], max_edge, img);
      ++j;
    }
  }
}

}  // namespace detail

// Projects labelled points into the image and interpolates between
// consecutive rings (ordered by median range) with a triangle strip.
// Triangles with an edge longer than max_edge_px are skipped.
inline LabelImage rasterize(std::span<const PointLabel> labels, const Calibration& calib, ImageSize size,
                            double max_edge_px = 200.0) {
  LabelImage img(size.height, size.width);
  std::map<int, std::vector<std::pair<double, detail::LabeledPixel>>> by_ring;  // azimuth-ordered
  std::map<int, std::vector<double>> ranges;
  std::size_t in_image = 0;
  for (const auto& p : labels) {
    if (!p.value) continue;
    const auto px = project_lidar_point(p.xyz, calib);
    if (!px) continue;
    if (px->u >= -0.5 && px->u < size.width - 0.5 && px->v >= -0.5 && px->v < size.height - 0.5) ++in_image;
    by_ring[p.ring].push_back({std::atan2(p.xyz.y(), p.xyz.x()), {*px, *p.value}});
    ranges[p.ring].push_back(std::hypot(p.xyz.x(), p.xyz.y()));
  }
  if (in_image < 3) return img;

  struct RingRow {
    double range;
    std::vector<detail::LabeledPixel> pixels;
  };
  std::vector<RingRow> rows;
  for (auto& [ring, pts] : by_ring) {
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& rs = ranges[ring];
    std::nth_element(rs.begin(), rs.begin() + rs.size() / 2, rs.end());
    RingRow row{rs[rs.size() / 2], {}};
    for (const auto& [az, lp] : pts) row.pixels.push_back(lp);
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const RingRow& a, const RingRow& b) { return a.range < b.range; });
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    detail::raster_strip(rows[k].pixels, rows[k + 1].pixels, max_edge_px, img);
  }
  return img;
}

}  // namespace trajlabel
