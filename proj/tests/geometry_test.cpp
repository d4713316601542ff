#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "litfield/geometry.hpp"

using namespace litfield;

namespace {

constexpr double kTau = 6.283185307179586;

Intrinsics simple_camera() { return Intrinsics(100.0, 100.0, 50.0, 40.0, 100, 80); }

Mat3 rot_y(double deg) { return Eigen::AngleAxisd(deg * kTau / 360.0, Vec3::UnitY()).toRotationMatrix(); }

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return Pose(q.normalized().toRotationMatrix(), Vec3(n(rng), n(rng), n(rng)));
}

// Straight from the mapping definition, evaluated in long double.
PixelCoord equirect_oracle(const Vec3& d, int w, int h) {
  const long double pi = 3.14159265358979323846264338327950288L;
  const long double y = std::clamp<long double>(d.y(), -1.0L, 1.0L);
  const long double phi = std::acos(y);
  const int py = std::min(static_cast<int>(std::floor(phi / pi * h)), h - 1);
  if (d.x() == 0.0 && d.z() == 0.0) return {0, py};
  long double u = std::atan2(static_cast<long double>(d.x()), -static_cast<long double>(d.z())) / (2 * pi) + 0.5L;
  int px = static_cast<int>(std::floor(u * w)) % w;
  return {px, py};
}

}  // namespace

TEST(Unproject, PrincipalRayAtUnitDepth) {
  const Intrinsics k = simple_camera();
  const Vec3 p = unproject(k.cx, k.cy, 1.0, k, Pose::identity());
  EXPECT_NEAR((p - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(Unproject, TranslationAdds) {
  const Intrinsics k = simple_camera();
  const Vec3 p = unproject(k.cx, k.cy, 2.0, k, Pose::translation_only({1, 0, 0}));
  EXPECT_NEAR((p - Vec3(1, 0, -2)).norm(), 0.0, 1e-12);
}

TEST(Unproject, OneFocalLengthRight) {
  const Intrinsics k(100.0, 100.0, 50.0, 40.0, 200, 80);  // cx + fx must stay inside the image
  const Vec3 p = unproject(k.cx + k.fx, k.cy, 1.0, k, Pose::identity());
  EXPECT_NEAR((p - Vec3(1, 0, -1)).norm(), 0.0, 1e-12);
}

TEST(Unproject, ImageDownIsWorldDown) {
  const Intrinsics k = simple_camera();
  EXPECT_LT(unproject(k.cx, k.cy + 10, 1.0, k, Pose::identity()).y(), 0.0);
}

TEST(Unproject, RejectsBadDepthAndPixels) {
  const Intrinsics k = simple_camera();
  for (double d : {0.0, -1.0, std::numeric_limits<double>::quiet_NaN()}) {
    try {
      unproject(10, 10, d, k, Pose::identity());
      FAIL() << "depth " << d << " accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidDepth);
    }
  }
  try {
    unproject(-1, 10, 1.0, k, Pose::identity());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfBounds);
  }
  EXPECT_THROW(unproject(10, 80.5, 1.0, k, Pose::identity()), Error);
}

TEST(Unproject, ReprojectionRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uu(0.0, 100.0), vv(0.0, 80.0), dd(0.01, 50.0);
  const Intrinsics k = simple_camera();
  for (int i = 0; i < 2000; ++i) {
    const Pose pose = random_pose(rng);
    const double u = uu(rng), v = vv(rng), d = dd(rng);
    const auto p = project(unproject(u, v, d, k, pose), k, pose);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(p->u, u, 1e-6);
    EXPECT_NEAR(p->v, v, 1e-6);
    EXPECT_NEAR(p->depth, d, 1e-6 * d);
  }
}

TEST(Unproject, RangeToAxisDepthPutsPointAtRange) {
  const Intrinsics k = simple_camera();
  for (double u : {0.0, 13.5, 50.0, 99.5})
    for (double v : {0.0, 40.0, 79.5}) {
      const double z = range_to_axis_depth(u, v, 3.0, k);
      EXPECT_NEAR(unproject(u, v, z, k, Pose::identity()).norm(), 3.0, 1e-12);
    }
}

TEST(Intrinsics, Validation) {
  EXPECT_THROW(Intrinsics(0.0, 1.0, 0.5, 0.5, 1, 1), Error);
  EXPECT_THROW(Intrinsics(std::numeric_limits<double>::infinity(), 1.0, 0.5, 0.5, 1, 1), Error);
  EXPECT_THROW(Intrinsics(1.0, 1.0, 2.0, 0.5, 2, 2), Error);  // cx == width
  EXPECT_THROW(Intrinsics(1.0, 1.0, 0.5, -0.1, 2, 2), Error);
  EXPECT_NO_THROW(Intrinsics(1.0, 1.0, 0.0, 0.0, 2, 2));
}

TEST(Intrinsics, ScalingKeepsFieldOfView) {
  const Intrinsics k = Intrinsics::from_fov(90.0, 640, 480);
  EXPECT_NEAR(k.fx, 320.0, 1e-9);
  const Intrinsics s = k.scaled({32, 24});
  EXPECT_NEAR(s.fx, 16.0, 1e-12);
  EXPECT_NEAR(s.cx, 16.0, 1e-12);
  EXPECT_NEAR(s.cy, 12.0, 1e-12);
}

TEST(Pose, RejectsImproperRotations) {
  Mat3 reflect = Mat3::Identity();
  reflect(0, 0) = -1.0;
  EXPECT_THROW(Pose(reflect, Vec3::Zero()), Error);
  EXPECT_THROW(Pose(2.0 * Mat3::Identity(), Vec3::Zero()), Error);
  EXPECT_NO_THROW(Pose(rot_y(33.0), Vec3::Zero()));
}

TEST(Pose, LookAtAimsForwardAxisAtTarget) {
  const Pose p = Pose::look_at({1, 2, 3}, {-1, 0.5, 0.2});
  EXPECT_NEAR((p.forward() - Vec3(-2, -1.5, -2.8).normalized()).norm(), 0.0, 1e-12);
  EXPECT_GT(p.rotation().col(1).y(), 0.0);  // camera up stays up
}

TEST(Pose, InverseAndComposition) {
  std::mt19937_64 rng(3);
  const Pose a = random_pose(rng);
  const Pose b = random_pose(rng);
  const Vec3 x(0.3, -0.7, 1.9);
  EXPECT_NEAR((a.inverse().apply(a.apply(x)) - x).norm(), 0.0, 1e-12);
  EXPECT_NEAR(((a * b).apply(x) - a.apply(b.apply(x))).norm(), 0.0, 1e-12);
}

TEST(SphericalDir, RoundTrip) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 v = Vec3(n(rng), n(rng), n(rng)).normalized();
    const SphericalDir d = SphericalDir::from_vector(v);
    ASSERT_GE(d.theta, 0.0);
    ASSERT_LT(d.theta, kTau);
    ASSERT_GE(d.phi, 0.0);
    ASSERT_LE(d.phi, kTau / 2);
    EXPECT_NEAR((d.to_vector() - v).norm(), 0.0, 1e-9);
  }
}

TEST(Classify, PrincipalRayIsNear) {
  const Intrinsics k = simple_camera();
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0, 0, -1}), FieldClass::kNearField);
}

TEST(Classify, BehindIsFar) {
  const Intrinsics k = simple_camera();
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0, 0, 1}), FieldClass::kFarField);
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0, 0, 0}), FieldClass::kFarField);
}

TEST(Classify, ImageEdgeIsInclusive) {
  const Intrinsics k = simple_camera();
  // u = cx + fx * x / depth lands exactly on the right and bottom edges.
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0.5, 0.0, -1.0}), FieldClass::kNearField);
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0.0, -0.4, -1.0}), FieldClass::kNearField);
  EXPECT_EQ(classify_observation(Pose::identity(), k, {-0.5, 0.4, -1.0}), FieldClass::kNearField);
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0.5001, 0.0, -1.0}), FieldClass::kFarField);
  EXPECT_EQ(classify_observation(Pose::identity(), k, {0.0, 0.4001, -1.0}), FieldClass::kFarField);
}

TEST(Classify, NoDepthRangeLimit) {
  EXPECT_EQ(classify_observation(Pose::identity(), simple_camera(), {0, 0, -1e6}), FieldClass::kNearField);
}

TEST(Classify, InvariantUnderRigidMotion) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(-3.0, 3.0);
  const Intrinsics k = simple_camera();
  int near = 0;
  for (int i = 0; i < 5000; ++i) {
    const Pose pose = random_pose(rng);
    const Pose g = random_pose(rng);
    const Vec3 rec = pose.apply(Vec3(c(rng), c(rng), -std::abs(c(rng))));
    const FieldClass a = classify_observation(pose, k, rec);
    near += a == FieldClass::kNearField;
    EXPECT_EQ(a, classify_observation(g * pose, k, g.apply(rec)));
  }
  EXPECT_GT(near, 100);
  EXPECT_LT(near, 4900);
}

TEST(Equirect, ForwardMapsToCenter) {
  EXPECT_EQ(dir_to_equirect({0, 0, -1}, 1024, 512), (PixelCoord{512, 256}));
}

TEST(Equirect, UpAndDownMapToPoleRows) {
  EXPECT_EQ(dir_to_equirect({0, 1, 0}, 1024, 512), (PixelCoord{0, 0}));
  EXPECT_EQ(dir_to_equirect({0, -1, 0}, 1024, 512), (PixelCoord{0, 511}));
}

TEST(Equirect, RightMapsToThreeQuarters) {
  EXPECT_EQ(dir_to_equirect({1, 0, 0}, 1024, 512), (PixelCoord{768, 256}));
  EXPECT_EQ(dir_to_equirect({-1, 0, 0}, 1024, 512), (PixelCoord{256, 256}));
  EXPECT_EQ(dir_to_equirect({0, 0, 1}, 1024, 512), (PixelCoord{0, 256}));
}

TEST(Equirect, MatchesDefinitionOnRandomDirections) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  int mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const Vec3 v = Vec3(n(rng), n(rng), n(rng)).normalized();
    mismatches += !(dir_to_equirect(v, 256, 128) == equirect_oracle(v, 256, 128));
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Equirect, PixelCentersRoundTrip) {
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 128; ++x) EXPECT_EQ(dir_to_equirect(equirect_to_dir(x, y, 128, 64), 128, 64), (PixelCoord{x, y}));
}

TEST(Equirect, EveryRowHitByRandomDirections) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<int> rows(512, 0);
  for (int i = 0; i < 1000000; ++i) ++rows[static_cast<std::size_t>(dir_to_equirect(Vec3(n(rng), n(rng), n(rng)).normalized(), 1024, 512).y)];
  for (int r = 0; r < 512; ++r) EXPECT_GT(rows[static_cast<std::size_t>(r)], 0) << "row " << r;
}

TEST(Equirect, RejectsBadInput) {
  try {
    dir_to_equirect({0, 0, -2}, 1024, 512);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotNormalized);
  }
  EXPECT_THROW(dir_to_equirect({0, 0, -1}, 1000, 512), Error);
}

TEST(FastAtan2, CloseToLibm) {
  float worst = 0.0f;
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      const float y = i * 0.013f, x = j * 0.017f;
      if (x == 0.0f && y == 0.0f) continue;
      worst = std::max(worst, std::abs(fast_atan2(y, x) - std::atan2(y, x)));
    }
  EXPECT_LT(worst, 1e-6f);
  EXPECT_NEAR(fast_atan2(0.0f, -1.0f), 3.14159265f, 1e-6f);
  EXPECT_NEAR(fast_atan2(-0.0f, -1.0f), -3.14159265f, 1e-6f);
}
