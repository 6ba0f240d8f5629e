#include "support.hpp"

#include <gtest/gtest.h>

using namespace trajlabel;
using testing_support::Rng;

namespace {

LabelImage label(int h, int w, double v, bool covered) {
  LabelImage l(h, w);
  for (auto& x : l.values.data()) x = v;
  for (auto& c : l.coverage.data()) c = covered ? 1 : 0;
  return l;
}

LabelImage random_label(Rng& rng, int h, int w) {
  LabelImage l(h, w);
  for (auto& x : l.values.data()) x = rng.uniform(0, 1);
  for (auto& c : l.coverage.data()) c = rng.coin(0.5) ? 1 : 0;
  return l;
}

FusedLabel from_values(const Grid<double>& v) {
  FusedLabel f{v, Grid<Provenance>(v.height(), v.width(), Provenance::camera_only)};
  return f;
}

std::size_t flips(const Mask& a, const Mask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.count(); ++i) n += a.data()[i] != b.data()[i];
  return n;
}

}  // namespace

TEST(Fuse, MeanInsideCoverageCameraOutside) {
  LabelImage cam = label(1, 3, 0.6, true);
  LabelImage lid(1, 3);
  lid.values(0, 0) = 0.8;
  lid.coverage(0, 0) = 1;
  lid.values(0, 1) = 0.0;
  lid.coverage(0, 1) = 1;
  lid.values(0, 2) = 0.3;  // not covered, ignored
  const FusedLabel f = fuse(cam, lid);
  EXPECT_DOUBLE_EQ(f.values(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(f.values(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(f.values(0, 2), 0.6);
  EXPECT_EQ(f.provenance(0, 0), Provenance::fused);
  EXPECT_EQ(f.provenance(0, 2), Provenance::camera_only);
}

TEST(Fuse, UncoveredLidarLeavesCamera) {
  const FusedLabel f = fuse(label(2, 2, 0.8, true), label(2, 2, 0.1, false));
  for (double v : f.values.data()) EXPECT_DOUBLE_EQ(v, 0.8);
  const FusedLabel g = fuse(label(2, 2, 1.0, true), label(2, 2, 1.0, true));
  for (double v : g.values.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Fuse, SizeMismatchThrows) {
  EXPECT_THROW(fuse(label(2, 3, 0, true), label(3, 2, 0, true)), std::invalid_argument);
}

TEST(Fuse, SymmetricWhereCoveredProperty) {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = rng.integer(1, 20), w = rng.integer(1, 20);
    LabelImage a = random_label(rng, h, w), b = random_label(rng, h, w);
    a.coverage = Mask(h, w, 1);
    b.coverage = Mask(h, w, 1);
    const FusedLabel ab = fuse(a, b), ba = fuse(b, a);
    for (std::size_t i = 0; i < ab.values.count(); ++i) ASSERT_EQ(ab.values.data()[i], ba.values.data()[i]);
  }
}

TEST(Fuse, IdempotentAndBoundedProperty) {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = rng.integer(1, 20), w = rng.integer(1, 20);
    LabelImage cam = random_label(rng, h, w);
    cam.coverage = Mask(h, w, 1);
    LabelImage same = cam;
    const FusedLabel self = fuse(cam, same);
    const LabelImage lid = random_label(rng, h, w);
    const FusedLabel f = fuse(cam, lid);
    for (std::size_t i = 0; i < cam.values.count(); ++i) {
      ASSERT_EQ(self.values.data()[i], cam.values.data()[i]);
      const double lo = std::min(cam.values.data()[i], lid.values.data()[i]);
      const double hi = std::max(cam.values.data()[i], lid.values.data()[i]);
      ASSERT_GE(f.values.data()[i], lo);
      ASSERT_LE(f.values.data()[i], hi);
    }
  }
}

TEST(Binarize, ThresholdIsInclusive) {
  Grid<double> v(1, 3);
  v(0, 0) = 0.5;
  v(0, 1) = std::nextafter(0.5, 0.0);
  v(0, 2) = 1.0;
  const Mask m = binarize(v);
  EXPECT_EQ(m(0, 0), 1);
  EXPECT_EQ(m(0, 1), 0);
  EXPECT_EQ(m(0, 2), 1);
}

TEST(Crf, ConfidentInputsAreKept) {
  Rng rng(63);
  const RgbImage img = testing_support::bipartite_image(24, 32, rng);
  const CrfParams p;
  const Mask ones = crf_refine(img, from_values(Grid<double>(24, 32, 1.0)), p);
  const Mask zeros = crf_refine(img, from_values(Grid<double>(24, 32, 0.0)), p);
  for (auto v : ones.data()) ASSERT_EQ(v, 1);
  for (auto v : zeros.data()) ASSERT_EQ(v, 0);
}

TEST(Crf, ZeroPairwiseEqualsBinarizeProperty) {
  Rng rng(64);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = rng.integer(1, 40), w = rng.integer(1, 40);
    const RgbImage img = testing_support::bipartite_image(h, w, rng);
    Grid<double> v(h, w);
    for (auto& x : v.data()) x = rng.coin(0.1) ? 0.5 : rng.uniform(0, 1);
    CrfParams p;
    p.spatial_weight = 0;
    p.bilateral_weight = 0;
    ASSERT_EQ(flips(crf_refine(img, from_values(v), p), binarize(v)), 0u);
    CrfParams q;
    q.iterations = 0;
    ASSERT_EQ(flips(crf_refine(img, from_values(v), q, MessagePassing::exact), binarize(v)), 0u);
  }
}

TEST(Crf, MarginalsStayNormalized) {
  Rng rng(65);
  const RgbImage img = testing_support::bipartite_image(32, 32, rng);
  Grid<double> v(32, 32);
  for (auto& x : v.data()) x = rng.uniform(0, 1);
  for (auto method : {MessagePassing::approximate, MessagePassing::exact}) {
    const auto mf = mean_field(img, v, CrfParams{}, method);
    EXPECT_LE(mf.max_normalization_error, 1e-6);
    for (double q : mf.q_road.data()) ASSERT_TRUE(q >= 0 && q <= 1);
  }
}

TEST(Crf, ExactMatchesDirectReference) {
  Rng rng(66);
  for (int trial = 0; trial < 3; ++trial) {
    const int h = rng.integer(6, 14), w = rng.integer(6, 14);
    const RgbImage img = testing_support::bipartite_image(h, w, rng, 8.0);
    Grid<double> v(h, w);
    for (auto& x : v.data()) x = rng.uniform(0, 1);
    CrfParams p;
    p.spatial_sigma = rng.uniform(1, 4);
    p.bilateral_sigma_xy = rng.uniform(3, 20);
    p.bilateral_sigma_rgb = rng.uniform(5, 30);
    const auto lib = mean_field(img, v, p, MessagePassing::exact);
    const auto ref = testing_support::ref_mean_field(img, v, p);
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(lib.q_road.data()[i], ref[i], 1e-9);
  }
}

TEST(Crf, LatticeAgreesWithExactOnBipartiteImage) {
  Rng rng(67);
  const RgbImage img = testing_support::bipartite_image(64, 64, rng);
  Grid<double> v(64, 64);
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const bool a = c + r / 2 < 64 / 2 + 5;
      v(r, c) = std::clamp((a ? 0.7 : 0.3) + rng.normal(0, 0.25), 0.0, 1.0);
    }
  }
  const CrfParams p;
  const Mask exact = crf_refine(img, from_values(v), p, MessagePassing::exact);
  const Mask fast = crf_refine(img, from_values(v), p, MessagePassing::approximate);
  EXPECT_LE(static_cast<double>(flips(exact, fast)) / exact.count(), 0.02);
}

TEST(Crf, CleansNoiseAlongColourBoundary) {
  Rng rng(68);
  const RgbImage img = testing_support::bipartite_image(48, 48, rng);
  Grid<double> v(48, 48);
  Mask truth(48, 48);
  for (int r = 0; r < 48; ++r) {
    for (int c = 0; c < 48; ++c) {
      truth(r, c) = c + r / 2 < 48 / 2 + 5;
      v(r, c) = truth(r, c) ? 0.55 : 0.45;
      if (rng.coin(0.15)) v(r, c) = 1.0 - v(r, c);
    }
  }
  const Mask raw = binarize(v);
  const Mask refined = crf_refine(img, from_values(v), CrfParams{});
  EXPECT_LT(flips(refined, truth), flips(raw, truth) / 4);
}

TEST(Crf, SizeMismatchThrows) {
  EXPECT_THROW(crf_refine(RgbImage(4, 4), from_values(Grid<double>(4, 5)), CrfParams{}), std::invalid_argument);
}
