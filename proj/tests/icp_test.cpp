#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "litfield/icp.hpp"

using namespace litfield;

namespace {

// Three walls and a curved bump: every rotation and translation axis is constrained.
std::vector<Vec3> corner_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    switch (i % 4) {
      case 0: pts.emplace_back(a, b, -1.0); break;
      case 1: pts.emplace_back(-1.0, a, b); break;
      case 2: pts.emplace_back(a, -1.0, b); break;
      default: pts.emplace_back(0.3 * a, 0.3 * b, -0.6 + 0.2 * std::cos(3 * a) * std::cos(3 * b));
    }
  }
  return pts;
}

std::vector<Vec3> moved(const std::vector<Vec3>& pts, const Pose& t) {
  std::vector<Vec3> out;
  for (const Vec3& p : pts) out.push_back(t.apply(p));
  return out;
}

double rotation_deg(const Mat3& r) { return rad_to_deg(Eigen::AngleAxisd(r).angle()); }

}  // namespace

TEST(Icp, IdenticalCloudsGiveIdentity) {
  const auto pts = corner_cloud(2000, 1);
  const IcpResult r = register_icp(pts, pts);
  EXPECT_NEAR(r.transform.translation().norm(), 0.0, 1e-9);
  EXPECT_NEAR((r.transform.rotation() - Mat3::Identity()).norm(), 0.0, 1e-9);
  EXPECT_NEAR(r.residuals.front(), 0.0, 1e-12);
}

TEST(Icp, RecoversKnownTransform) {
  const auto ref = corner_cloud(10000, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
    const Pose t(Eigen::AngleAxisd(deg_to_rad(5.0), axis).toRotationMatrix(),
                 Vec3(u(rng), u(rng), u(rng)).normalized() * 0.05);
    const IcpResult r = register_icp(moved(ref, t), ref, IcpConfig{50, 1e-9, 0.1});
    const Pose err = r.transform * t;  // should be the identity
    EXPECT_LE(err.translation().norm(), 1e-3);
    EXPECT_LE(rotation_deg(err.rotation()), 0.1);
    EXPECT_LE(r.iterations, 50);
    for (std::size_t i = 1; i < r.residuals.size(); ++i) EXPECT_LE(r.residuals[i], r.residuals[i - 1] + 1e-12);
  }
}

TEST(Icp, SourceSubsetOfReference) {
  const auto ref = corner_cloud(8000, 4);
  const std::vector<Vec3> part(ref.begin(), ref.begin() + 3000);
  const Pose t(Eigen::AngleAxisd(deg_to_rad(3.0), Vec3::UnitY()).toRotationMatrix(), Vec3(0.02, -0.01, 0.03));
  const IcpResult r = register_icp(moved(part, t), ref, IcpConfig{50, 1e-10, 0.1});
  const Pose err = r.transform * t;
  EXPECT_LE(err.translation().norm(), 1e-3);
  EXPECT_LE(rotation_deg(err.rotation()), 0.1);
}

TEST(Icp, DisjointCloudsHaveNoOverlap) {
  const auto a = corner_cloud(500, 5);
  try {
    register_icp(moved(a, Pose::translation_only({10, 0, 0})), a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoOverlap);
  }
}

TEST(Icp, CollinearCloudIsDegenerate) {
  std::vector<Vec3> line;
  for (int i = 0; i < 100; ++i) line.emplace_back(0.01 * i, 0.0, 0.0);
  try {
    register_icp(line, line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(register_icp(two, corner_cloud(100, 6)), Error);
}

TEST(Icp, RejectsBadConfig) {
  const auto a = corner_cloud(100, 7);
  EXPECT_THROW(register_icp(a, a, IcpConfig{0, 1e-6, 0.1}), Error);
  EXPECT_THROW(register_icp(a, a, IcpConfig{10, 1e-6, 0.0}), Error);
  EXPECT_THROW(register_icp(a, a, IcpConfig{10, 1e-6, 0.1, 0.5}), Error);
}

TEST(Icp, PartialOverlapIsNotDraggedByExtraSurface) {
  // The source also sees a wall the reference lacks, a few cm past the shared walls.
  const auto ref = corner_cloud(8000, 10);
  std::vector<Vec3> src = ref;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 3000; ++i) src.emplace_back(u(rng), 1.04, u(rng));
  const Pose t(Eigen::AngleAxisd(deg_to_rad(2.0), Vec3(1, 1, 0).normalized()).toRotationMatrix(), Vec3(0.01, 0.02, 0));
  const IcpResult trimmed = register_icp(moved(src, t), ref, IcpConfig{50, 1e-10, 0.1});
  const Pose err = trimmed.transform * t;
  EXPECT_LE(err.translation().norm(), 1e-3);
  EXPECT_LE(rotation_deg(err.rotation()), 0.1);
}

TEST(FitRigid, ExactForNoiselessCorrespondences) {
  const auto src = corner_cloud(50, 8);
  const Pose t(Eigen::AngleAxisd(1.0, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(0.4, -2, 1));
  const Pose f = fit_rigid(src, moved(src, t));
  EXPECT_NEAR((f.rotation() - t.rotation()).norm(), 0.0, 1e-9);
  EXPECT_NEAR((f.translation() - t.translation()).norm(), 0.0, 1e-9);
}

TEST(VoxelIndex, NearestMatchesBruteForce) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 3000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const VoxelIndex index(pts, 0.15);
  for (int q = 0; q < 500; ++q) {
    const Vec3 x(u(rng), u(rng), u(rng));
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const Vec3& p : pts) best_d2 = std::min(best_d2, (p - x).squaredNorm());
    const bool in_range = best_d2 <= 0.15 * 0.15;
    double d2 = -1.0;
    const long got = index.nearest(x, 0.15, &d2);
    ASSERT_EQ(got >= 0, in_range);
    if (in_range) {
      EXPECT_EQ(d2, best_d2);
    }
  }
}
