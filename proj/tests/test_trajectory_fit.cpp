#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace trajlabel;
using testing_support::Rng;

namespace {

// Points across the road at forward distance x, lateral -3..3 m.
std::vector<LidarPoint> cross_line(double x, double z, int ring, double step = 0.1) {
  std::vector<LidarPoint> pts;
  for (double y = -3.0; y <= 3.0 + 1e-9; y += step) {
    LidarPoint p;
    p.xyz = Vec3(x, y, z);
    p.ring = static_cast<std::uint16_t>(ring);
    p.azimuth = std::atan2(y, x);
    pts.push_back(p);
  }
  return pts;
}

RingScan two_ring_scan(double z_far, double x_far = 15.0) {
  auto pts = cross_line(10.0, -1.9, 0);
  auto far = cross_line(x_far, z_far, 1);
  pts.insert(pts.end(), far.begin(), far.end());
  return make_ring_scan(pts, 0.0);
}

std::vector<Pose> poses_along_x(double from, double to, double z = -1.9, double step = 0.5) {
  std::vector<Pose> out;
  for (double x = from; x <= to + 1e-9; x += step) out.push_back({0.0, Vec3(x, 0, z), 0.0});
  return out;
}

// Identity camera: lidar point (u, v, 1) lands on pixel (u, v).
Calibration pixel_calibration(ImageSize size) {
  Calibration c;
  c.fx = c.fy = 1.0;
  c.cx = c.cy = 0.0;
  c.image_size = size;
  return c;
}

double shoelace(const std::vector<Pixel>& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Pixel& p = poly[i];
    const Pixel& q = poly[(i + 1) % poly.size()];
    a += p.u * q.v - q.u * p.v;
  }
  return std::abs(a) / 2;
}

}  // namespace

TEST(FitCenters, CoincidentPoseGivesZeroDistance) {
  const RingScan scan = make_ring_scan(cross_line(10.0, -1.9, 0), 0.0);
  const std::vector<Pose> poses = {{0.0, scan.rings[0][17].xyz, 0.0}};
  const auto c = fit_centers(scan, poses);
  ASSERT_TRUE(c[0]);
  EXPECT_EQ(c[0]->point_idx, 17);
  EXPECT_EQ(c[0]->pose_distance, 0.0);
}

TEST(FitCenters, PicksNearerOfTwo) {
  std::vector<LidarPoint> pts(2);
  pts[0].xyz = Vec3(10, 0.7, 0);
  pts[0].azimuth = std::atan2(0.7, 10);
  pts[1].xyz = Vec3(10, -0.3, 0);
  pts[1].azimuth = std::atan2(-0.3, 10);
  const RingScan scan = make_ring_scan(pts, 0.0);
  const auto c = fit_centers(scan, std::vector<Pose>{{0.0, Vec3(10, 0, 0), 0.0}});
  ASSERT_TRUE(c[0]);
  EXPECT_NEAR(c[0]->pose_distance, 0.3, 1e-12);
  EXPECT_NEAR(scan.rings[0][c[0]->point_idx].xyz.y(), -0.3, 1e-15);
}

TEST(FitCenters, EmptyRingHasNoCandidate) {
  RingScan scan;
  scan.rings.resize(2);
  scan.rings[1] = cross_line(10, -1.9, 1);
  const auto c = fit_centers(scan, poses_along_x(5, 20));
  EXPECT_FALSE(c[0]);
  EXPECT_TRUE(c[1]);
  EXPECT_FALSE(fit_centers(scan, {})[1]);
}

TEST(FitCenters, TieGoesToLowerAzimuth) {
  const RingScan scan = make_ring_scan(cross_line(10.0, 0.0, 0, 0.5), 0.0);
  // Pose midway between y = -0.5 and y = 0.
  const auto c = fit_centers(scan, std::vector<Pose>{{0.0, Vec3(10, -0.25, 0), 0.0}});
  ASSERT_TRUE(c[0]);
  EXPECT_NEAR(scan.rings[0][c[0]->point_idx].xyz.y(), -0.5, 1e-12);
}

TEST(FitCenters, MatchesBruteForceProperty) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<LidarPoint> pts;
    const int rings = rng.integer(1, 16);
    for (int r = 0; r < rings; ++r) {
      auto ring = testing_support::random_ring(rng, rng.integer(0, 10000 / rings), r);
      pts.insert(pts.end(), ring.begin(), ring.end());
    }
    const RingScan scan = make_ring_scan(pts, 0.0, rings);
    std::vector<Pose> poses;
    for (int k = 0; k < rng.integer(1, 40); ++k) {
      poses.push_back({0.0, Vec3(rng.uniform(0, 40), rng.uniform(-3, 3), rng.uniform(-2.5, -1.5)), 0.0});
    }
    const auto got = fit_centers(scan, poses);
    for (int r = 0; r < rings; ++r) {
      const auto& ring = scan.rings[r];
      if (ring.empty()) {
        ASSERT_FALSE(got[r]);
        continue;
      }
      // All (point, pose) distances, then the lowest-azimuth point at the minimum.
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : ring) {
        for (const auto& q : poses) best = std::min(best, (p.xyz - q.position).squaredNorm());
      }
      int expect = -1;
      for (std::size_t i = 0; i < ring.size() && expect < 0; ++i) {
        for (const auto& q : poses) {
          if ((ring[i].xyz - q.position).squaredNorm() == best) expect = static_cast<int>(i);
        }
      }
      ASSERT_TRUE(got[r]);
      ASSERT_EQ(got[r]->point_idx, expect);
      ASSERT_EQ(got[r]->pose_distance, std::sqrt(best));
    }
  }
}

TEST(Wheels, PerpendicularOffsetHeadingZero) {
  LidarPoint c;
  c.xyz = Vec3(10, 0, -1.9);
  const auto ring = cross_line(10, -1.9, 0, 0.5);
  const WheelCandidates w = extend_wheels(c, 0.0, 2.0, ring);
  EXPECT_LT((w.left_estimate - Vec3(10, 1, -1.9)).norm(), 1e-12);
  EXPECT_LT((w.right_estimate - Vec3(10, -1, -1.9)).norm(), 1e-12);
  EXPECT_NEAR(ring[w.left_idx].xyz.y(), 1.0, 1e-9);
  EXPECT_NEAR(ring[w.right_idx].xyz.y(), -1.0, 1e-9);
}

TEST(Wheels, HeadingQuarterTurnOffsetsAlongX) {
  LidarPoint c;
  c.xyz = Vec3(0, 10, 0);
  const WheelCandidates w = extend_wheels(c, kPi / 2, 2.0, std::vector<LidarPoint>{});
  EXPECT_LT((w.left_estimate - Vec3(-1, 10, 0)).norm(), 1e-12);
  EXPECT_LT((w.right_estimate - Vec3(1, 10, 0)).norm(), 1e-12);
  EXPECT_EQ(w.left_idx, -1);
}

TEST(Occlusion, Examples) {
  const Pixel wheel{500, 300};
  EXPECT_TRUE(occludes(wheel, Pixel{505, 200}));
  EXPECT_FALSE(occludes(wheel, Pixel{520, 200}));
  EXPECT_FALSE(occludes(wheel, Pixel{503, 350}));
  // Boundaries are strict on both axes.
  EXPECT_FALSE(occludes(wheel, Pixel{510, 200}));
  EXPECT_FALSE(occludes(wheel, Pixel{500, 300}));
}

TEST(Occlusion, OrderInvariantProperty) {
  Rng rng(22);
  for (int trial = 0; trial < 500; ++trial) {
    const Pixel wheel{rng.uniform(0, 1224), rng.uniform(0, 400)};
    std::vector<Pixel> pts;
    for (int i = 0; i < rng.integer(0, 30); ++i) pts.push_back({wheel.u + rng.uniform(-40, 40), wheel.v + rng.uniform(-40, 40)});
    const bool a = occluded(wheel, pts);
    std::shuffle(pts.begin(), pts.end(), rng.engine());
    ASSERT_EQ(a, occluded(wheel, pts));
    std::reverse(pts.begin(), pts.end());
    ASSERT_EQ(a, occluded(wheel, pts));
  }
}

TEST(FilterRules, PoseTooFar) {
  const RingScan scan = two_ring_scan(-1.9);
  // Poses float 1.2 m above the ground line.
  const auto fit = fit_trajectory(scan, poses_along_x(5, 20, -0.7), testing_support::forward_calibration(), {});
  ASSERT_EQ(fit.rings.size(), 2u);
  for (const auto& r : fit.rings) {
    EXPECT_FALSE(r.valid);
    EXPECT_EQ(r.failed, RingRule::pose_distance);
  }
}

TEST(FilterRules, ElevationJumpRejectsSecondRing) {
  const RingScan scan = two_ring_scan(-0.4);
  auto poses = poses_along_x(5, 12);
  poses.push_back({0.0, Vec3(15, 0, -0.4), 0.0});
  const auto fit = fit_trajectory(scan, poses, testing_support::forward_calibration(), {});
  ASSERT_EQ(fit.rings.size(), 2u);
  EXPECT_TRUE(fit.rings[0].valid);
  EXPECT_FALSE(fit.rings[1].valid);
  EXPECT_EQ(fit.rings[1].failed, RingRule::center_elevation);
}

TEST(FilterRules, AllSatisfiedIsValid) {
  const RingScan scan = two_ring_scan(-1.9);
  const auto fit = fit_trajectory(scan, poses_along_x(5, 20), testing_support::forward_calibration(), {});
  ASSERT_EQ(fit.valid_count(), 2u);
  EXPECT_EQ(fit.rings[0].ring, 0);  // nearest first
  const auto& ring = scan.rings[fit.rings[0].ring];
  EXPECT_NEAR(ring[fit.rings[0].left_idx].xyz.y(), 0.8, 1e-9);
  EXPECT_NEAR(ring[fit.rings[0].right_idx].xyz.y(), -0.8, 1e-9);
}

TEST(FilterRules, CloseCentersRejectedAgainstLastValid) {
  const RingScan scan = two_ring_scan(-1.9, 10.5);
  const auto fit = fit_trajectory(scan, poses_along_x(5, 20), testing_support::forward_calibration(), {});
  ASSERT_EQ(fit.rings.size(), 2u);
  EXPECT_TRUE(fit.rings[0].valid);
  EXPECT_EQ(fit.rings[1].failed, RingRule::center_spacing);
}

TEST(FilterRules, SparseRingFailsWheelDistance) {
  auto pts = cross_line(10.0, -1.9, 0);
  LidarPoint a, b;  // ring 1: center plus points 3 m to each side
  for (auto [p, y] : {std::pair{&a, 3.0}, std::pair{&b, -3.0}}) {
    p->xyz = Vec3(15, y, -1.9);
    p->ring = 1;
    p->azimuth = std::atan2(y, 15.0);
  }
  LidarPoint c;
  c.xyz = Vec3(15, 0, -1.9);
  c.ring = 1;
  pts.insert(pts.end(), {a, b, c});
  const RingScan scan = make_ring_scan(pts, 0.0);
  const auto fit = fit_trajectory(scan, poses_along_x(5, 20), testing_support::forward_calibration(), {});
  ASSERT_EQ(fit.rings.size(), 2u);
  EXPECT_EQ(fit.rings[1].failed, RingRule::wheel_distance);
}

TEST(FilterRules, ElevatedNearPointOccludesWheel) {
  auto pts = cross_line(10.0, -1.9, 0);
  auto far = cross_line(20.0, -1.9, 1);
  pts.insert(pts.end(), far.begin(), far.end());
  // A post on ring 2, nearer than the far ring, right in front of its left wheel.
  LidarPoint post;
  post.xyz = Vec3(14.0, 0.8 * 14.0 / 20.0, -1.0);
  post.ring = 2;
  post.azimuth = std::atan2(post.xyz.y(), post.xyz.x());
  pts.push_back(post);
  const RingScan scan = make_ring_scan(pts, 0.0);
  auto poses = poses_along_x(5, 25);
  const auto fit = fit_trajectory(scan, poses, testing_support::forward_calibration(), {});
  const auto it = std::find_if(fit.rings.begin(), fit.rings.end(), [](const auto& r) { return r.ring == 1; });
  ASSERT_NE(it, fit.rings.end());
  EXPECT_EQ(it->failed, RingRule::occlusion);
}

TEST(FilterRules, SyntheticFrameSurvivesRecheck) {
  synth::SceneParams p;
  p.noise_seed = 5;
  const auto f = synth::generate(p);
  const RingScan scan = limit_fov(f.sample.scan, 90);
  const auto poses = poses_to_lidar(f.sample.future_poses, f.sample.calib.world_to_lidar(f.sample.pose));
  const auto fit = fit_trajectory(scan, poses, f.sample.calib, {});
  EXPECT_GE(fit.valid_count(), 8u);
  const auto expect = testing_support::recheck_rules(fit, scan, poses, f.sample.calib, {});
  for (std::size_t k = 0; k < fit.rings.size(); ++k) EXPECT_EQ(fit.rings[k].failed, expect[k]) << "ring " << k;
}

TEST(PolygonFill, AxisAlignedRectangle) {
  const std::vector<Pixel> poly = {{10, 10}, {20, 10}, {20, 15}, {10, 15}};
  const Mask m = fill_polygon(poly, {40, 30});
  for (int r = 11; r < 15; ++r) {
    for (int c = 11; c < 20; ++c) EXPECT_TRUE(m(r, c)) << r << "," << c;
  }
  EXPECT_EQ(count_set(m), 50);
  EXPECT_FALSE(m(9, 12));
  EXPECT_FALSE(m(16, 12));
}

TEST(PolygonFill, DegenerateInputsEmpty) {
  EXPECT_EQ(count_set(fill_polygon(std::vector<Pixel>{{1, 1}, {5, 5}}, {10, 10})), 0);
  EXPECT_EQ(count_set(fill_polygon(std::vector<Pixel>{}, {10, 10})), 0);
}

TEST(PolygonFill, StarShapedQuadMatchesShoelaceProperty) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const double cu = rng.uniform(150, 250), cv = rng.uniform(150, 250);
    std::vector<double> ang;
    for (int i = 0; i < 4; ++i) ang.push_back(rng.uniform(0, 2 * kPi));
    std::sort(ang.begin(), ang.end());
    // Gaps below pi keep the centre inside, so the quad is simple.
    bool simple = ang.front() + 2 * kPi - ang.back() < kPi;
    for (int i = 0; i + 1 < 4; ++i) simple = simple && ang[i + 1] - ang[i] < kPi;
    if (!simple) continue;
    std::vector<Pixel> poly;
    for (double a : ang) {
      const double rad = rng.uniform(60, 140);
      poly.push_back({cu + rad * std::cos(a), cv + rad * std::sin(a)});
    }
    const double area = shoelace(poly);
    if (area < 3000) continue;
    const double filled = count_set(fill_polygon(poly, {400, 400}));
    ASSERT_NEAR(filled, area, 0.02 * area);
  }
}

TEST(TrajectoryMask, TwoRingRectangle) {
  // Two rings whose wheel points project to (10,10),(20,10) and (10,15),(20,15).
  std::vector<LidarPoint> pts;
  for (auto [u, v, ring] : {std::tuple{10.0, 10.0, 0}, std::tuple{20.0, 10.0, 0}, std::tuple{10.0, 15.0, 1},
                            std::tuple{20.0, 15.0, 1}}) {
    LidarPoint p;
    p.xyz = Vec3(u, v, 1.0);
    p.ring = static_cast<std::uint16_t>(ring);
    p.azimuth = -u;  // left wheel first
    pts.push_back(p);
  }
  const RingScan scan = make_ring_scan(pts, 0.0);
  TrajectoryFit fit;
  for (int r = 0; r < 2; ++r) {
    RingTrajectory t;
    t.ring = r;
    t.valid = true;
    t.left_idx = 1;   // u = 10 (azimuth -10 sorts after -20)
    t.right_idx = 0;  // u = 20
    t.center_idx = 0;
    fit.rings.push_back(t);
  }
  const Mask m = trajectory_mask(fit, scan, pixel_calibration({40, 30}), {40, 30});
  EXPECT_EQ(count_set(m), 50);
  EXPECT_TRUE(m(12, 15));
  fit.rings[1].valid = false;
  EXPECT_EQ(count_set(trajectory_mask(fit, scan, pixel_calibration({40, 30}), {40, 30})), 0);
}

TEST(TrajectoryMask, NoValidRingsIsEmpty) {
  const Mask m = trajectory_mask(TrajectoryFit{}, RingScan{}, testing_support::forward_calibration(), {1224, 400});
  EXPECT_EQ(count_set(m), 0);
  EXPECT_EQ(m.size(), (ImageSize{1224, 400}));
}

TEST(TrajectoryMask, FlatSceneStaysBetweenWheelTracksProperty) {
  for (std::uint64_t seed : {31u, 32u, 33u}) {
    synth::SceneParams p;
    p.noise_seed = seed;
    p.road_roughness_std = 0.0;
    p.bank_height = 0.0;
    p.lane_offset = -0.5 * static_cast<double>(seed % 3);
    const auto f = synth::generate(p);
    const Calibration& calib = f.sample.calib;
    const RingScan scan = limit_fov(f.sample.scan, 90);
    const auto poses = poses_to_lidar(f.sample.future_poses, calib.world_to_lidar(f.sample.pose));
    const auto fit = fit_trajectory(scan, poses, calib, {});
    const Mask m = trajectory_mask(fit, scan, calib, calib.image_size);
    ASSERT_GT(count_set(m), 1000);

    // Wheel chains on the ground, ordered by forward distance.
    std::vector<Vec3> left, right;
    for (const auto& t : fit.rings) {
      if (!t.valid) continue;
      left.push_back(scan.rings[t.ring][t.left_idx].xyz);
      right.push_back(scan.rings[t.ring][t.right_idx].xyz);
    }
    const auto lateral_at = [](const std::vector<Vec3>& chain, double x) {
      for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
        const Vec3& a = chain[k];
        const Vec3& b = chain[k + 1];
        if ((x - a.x()) * (x - b.x()) <= 0) return a.y() + (x - a.x()) / (b.x() - a.x()) * (b.y() - a.y());
      }
      return std::numeric_limits<double>::quiet_NaN();
    };
    const RigidTransform cam_to_lidar = calib.lidar_to_camera.inverse();
    int checked = 0;
    for (int r = 0; r < m.height(); ++r) {
      for (int c = 0; c < m.width(); ++c) {
        if (!m(r, c)) continue;
        // Ray through the pixel centre meets the ground plane z = -sensor height.
        const Vec3 o = cam_to_lidar.translation;
        const Vec3 d = cam_to_lidar.rotation * Vec3((c - calib.cx) / calib.fx, (r - calib.cy) / calib.fy, 1.0);
        const double t = (-p.sensor_height - o.z()) / d.z();
        const Vec3 g = o + t * d;
        const double yl = lateral_at(left, g.x()), yr = lateral_at(right, g.x());
        // One pixel's ground footprint: across, plus along the road (where
        // the chains may drift sideways by at most as much).
        const double across = t * d.norm() / calib.fx;
        const double foot = across * (1.0 + g.x() / (p.sensor_height + p.camera_in_lidar.z()));
        if (std::isnan(yl) || std::isnan(yr)) {
          const double lo = std::min(left.front().x(), right.front().x()) - foot;
          const double hi = std::max(left.back().x(), right.back().x()) + foot;
          ASSERT_TRUE(g.x() >= lo && g.x() <= hi) << "pixel " << r << "," << c << " at x=" << g.x();
          continue;
        }
        ASSERT_LE(g.y(), yl + foot) << "pixel " << r << "," << c;
        ASSERT_GE(g.y(), yr - foot) << "pixel " << r << "," << c;
        ++checked;
      }
    }
    EXPECT_GT(checked, 1000);
  }
}
