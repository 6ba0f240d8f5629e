#include "support.hpp"

#include <gtest/gtest.h>

using namespace trajlabel;
using testing_support::Rng;

namespace {

Calibration intrinsics(double f, double cx, double cy) {
  Calibration c;
  c.fx = c.fy = f;
  c.cx = cx;
  c.cy = cy;
  return c;
}

LidarPoint at_azimuth_deg(double deg, int ring = 0) {
  LidarPoint p;
  p.azimuth = deg2rad(deg);
  p.xyz = Vec3(10 * std::cos(p.azimuth), 10 * std::sin(p.azimuth), -1.9);
  p.ring = static_cast<std::uint16_t>(ring);
  return p;
}

}  // namespace

TEST(Projection, PrincipalPoint) {
  const auto px = project_point(Vec3(0, 0, 5), intrinsics(1000, 612, 200));
  ASSERT_TRUE(px);
  EXPECT_DOUBLE_EQ(px->u, 612);
  EXPECT_DOUBLE_EQ(px->v, 200);
}

TEST(Projection, PinholeOffset) {
  const auto px = project_point(Vec3(1, 0, 5), intrinsics(1000, 612, 200));
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, 812, 1e-12);
  EXPECT_NEAR(px->v, 200, 1e-12);
}

TEST(Projection, BehindCameraHasNoPixel) {
  EXPECT_FALSE(project_point(Vec3(0, 0, -1), intrinsics(1000, 612, 200)));
  EXPECT_FALSE(project_point(Vec3(1, 1, 0), intrinsics(1000, 612, 200)));
}

TEST(Projection, OutOfImagePixelsAreNotClipped) {
  const auto px = project_point(Vec3(10, 0, 1), intrinsics(1000, 612, 200));
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, 10612, 1e-9);
}

TEST(Projection, RadialDistortionScalesNormalizedCoordinates) {
  Calibration c = intrinsics(500, 0, 0);
  c.k1 = 0.1;
  c.k2 = 0.01;
  // x = 0.5, r2 = 0.25: d = 1 + 0.025 + 0.000625
  const auto px = project_point(Vec3(1, 0, 2), c);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, 500 * 0.5 * 1.025625, 1e-12);
}

TEST(Projection, UnprojectIsInverseProperty) {
  Rng rng(1);
  const Calibration c = intrinsics(900, 612, 60);
  for (int i = 0; i < 2000; ++i) {
    const Pixel px{rng.uniform(-500, 1700), rng.uniform(-300, 700)};
    const double depth = rng.uniform(0.1, 200);
    const auto back = project_point(unproject(px, depth, c), c);
    ASSERT_TRUE(back);
    ASSERT_NEAR(back->u, px.u, 1e-6);
    ASSERT_NEAR(back->v, px.v, 1e-6);
  }
}

TEST(Transform, Identity) {
  const Vec3 p(1.5, -2, 3);
  EXPECT_EQ(transform(p, RigidTransform::identity()), p);
}

TEST(Transform, PureTranslation) {
  const Vec3 q = transform(Vec3(1, 2, 3), RigidTransform::from_yaw(0, Vec3(0, 0, 1)));
  EXPECT_EQ(q, Vec3(1, 2, 4));
}

TEST(Transform, QuarterTurnYaw) {
  const Vec3 q = transform(Vec3(1, 0, 0), RigidTransform::from_yaw(kPi / 2, Vec3::Zero()));
  EXPECT_NEAR(q.x(), 0, 1e-15);
  EXPECT_NEAR(q.y(), 1, 1e-15);
  EXPECT_NEAR(q.z(), 0, 1e-15);
}

TEST(Transform, ComposeAndInverse) {
  const RigidTransform a = RigidTransform::from_yaw(0.3, Vec3(1, 2, 3));
  const RigidTransform b = RigidTransform::from_yaw(-1.1, Vec3(-4, 0.5, 2));
  const Vec3 p(0.7, -0.2, 5);
  EXPECT_LT((transform(p, a * b) - transform(transform(p, b), a)).norm(), 1e-12);
  EXPECT_LT((transform(transform(p, a), a.inverse()) - p).norm(), 1e-12);
  EXPECT_LT((RigidTransform::from_matrix(a.matrix()).matrix() - a.matrix()).norm(), 1e-15);
}

TEST(Transform, PreservesDistancesProperty) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Quaterniond q(rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1));
    RigidTransform t;
    t.rotation = q.normalized().toRotationMatrix();
    t.translation = Vec3(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100));
    const Vec3 a(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
    const Vec3 b(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50));
    ASSERT_NEAR((transform(a, t) - transform(b, t)).norm(), (a - b).norm(), 1e-9);
  }
}

TEST(Angles, NormalizeIntoHalfOpenInterval) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
  EXPECT_NEAR(normalize_angle(3 * kPi / 2), -kPi / 2, 1e-12);
  EXPECT_NEAR(normalize_angle(-5 * kPi / 2), -kPi / 2, 1e-12);
}

TEST(LimitFov, FullCircleKeepsEverything) {
  const RingScan scan = make_ring_scan({at_azimuth_deg(0), at_azimuth_deg(170), at_azimuth_deg(-120, 1)}, 0.0);
  const RingScan out = limit_fov(scan, 360);
  EXPECT_EQ(out.point_count(), 3u);
}

TEST(LimitFov, ForwardKeptSideRemoved) {
  const RingScan scan = make_ring_scan({at_azimuth_deg(0), at_azimuth_deg(50), at_azimuth_deg(-44.9)}, 0.0);
  const RingScan out = limit_fov(scan, 90);
  ASSERT_EQ(out.rings[0].size(), 2u);
  EXPECT_DOUBLE_EQ(out.rings[0][0].azimuth, deg2rad(-44.9));
  EXPECT_DOUBLE_EQ(out.rings[0][1].azimuth, 0.0);
}

TEST(LimitFov, RejectsBadAngle) {
  EXPECT_THROW(limit_fov(RingScan{}, 0), std::invalid_argument);
  EXPECT_THROW(limit_fov(RingScan{}, 361), std::invalid_argument);
}

TEST(LimitFov, IdempotentProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LidarPoint> pts;
    for (int i = 0; i < 300; ++i) pts.push_back(at_azimuth_deg(rng.uniform(-180, 180), rng.integer(0, 3)));
    const RingScan scan = make_ring_scan(pts, 0.0);
    const double fov = rng.uniform(1, 360);
    const RingScan once = limit_fov(scan, fov);
    const RingScan twice = limit_fov(once, fov);
    ASSERT_EQ(once.rings.size(), twice.rings.size());
    for (std::size_t r = 0; r < once.rings.size(); ++r) {
      ASSERT_EQ(once.rings[r].size(), twice.rings[r].size());
      for (std::size_t i = 0; i < once.rings[r].size(); ++i) ASSERT_EQ(once.rings[r][i].xyz, twice.rings[r][i].xyz);
    }
  }
}

TEST(RingScan, GroupsByRingAndSortsByAzimuth) {
  const RingScan scan = make_ring_scan({at_azimuth_deg(10, 1), at_azimuth_deg(-10, 1), at_azimuth_deg(5, 0)}, 2.0, 4);
  ASSERT_EQ(scan.rings.size(), 4u);
  EXPECT_EQ(scan.rings[0].size(), 1u);
  ASSERT_EQ(scan.rings[1].size(), 2u);
  EXPECT_LT(scan.rings[1][0].azimuth, scan.rings[1][1].azimuth);
  EXPECT_DOUBLE_EQ(scan.timestamp, 2.0);
}

TEST(Calibration, ForwardCameraLooksAlongLidarX) {
  const Calibration c = testing_support::forward_calibration();
  // A point straight ahead at the camera's height projects to the principal point.
  const auto px = project_lidar_point(Vec3(20, 0, -0.5), c);
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, c.cx, 1e-9);
  EXPECT_NEAR(px->v, c.cy, 1e-9);
  // Left in lidar (+y) is left in the image (smaller u); below is larger v.
  EXPECT_LT(project_lidar_point(Vec3(20, 1, -0.5), c)->u, c.cx);
  EXPECT_GT(project_lidar_point(Vec3(20, 0, -2), c)->v, c.cy);
}

TEST(Calibration, WorldToLidarPutsGroundBelowSensor) {
  Calibration c;
  const Pose pose{0.0, Vec3(5, 3, 0), kPi / 2};
  const RigidTransform w2l = c.world_to_lidar(pose);
  const Vec3 ahead = transform(Vec3(5, 13, 0), w2l);
  EXPECT_NEAR(ahead.x(), 10, 1e-12);
  EXPECT_NEAR(ahead.y(), 0, 1e-12);
  EXPECT_NEAR(ahead.z(), -1.9, 1e-12);
}

TEST(Calibration, ScaledIntrinsics) {
  Calibration c = intrinsics(900, 612, 60);
  c.image_size = {1224, 400};
  const Calibration h = c.scaled_to({612, 200});
  EXPECT_DOUBLE_EQ(h.fx, 450);
  EXPECT_DOUBLE_EQ(h.cx, 306);
  EXPECT_DOUBLE_EQ(h.cy, 30);
  EXPECT_EQ(h.image_size, (ImageSize{612, 200}));
}

TEST(Calibration, ValidateRejectsNonPositiveFocal) {
  Calibration c = intrinsics(0, 612, 60);
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
