#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "litfield/farfield.hpp"

using namespace litfield;

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

UnitSphereAnchorSet random_colored(int n, std::uint64_t seed) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& c : a.colors) c = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return a;
}

Vec3 pixel_normal(int x, int y, int w, int h) {
  // Inverse mapping written out from the convention: azimuth 0 at -Z on the center column.
  const double theta = (x + 0.5) / w * 2.0 * 3.14159265358979323846 - 3.14159265358979323846;
  const double phi = (y + 0.5) / h * 3.14159265358979323846;
  return {std::sin(phi) * std::sin(theta), std::cos(phi), -std::sin(phi) * std::cos(theta)};
}

}  // namespace

TEST(Anchors, DefaultCountIsUnit) {
  const auto d = generate_anchors(1280);
  ASSERT_EQ(d.size(), 1280u);
  for (const Vec3& v : d) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
  EXPECT_EQ(generate_anchors(1280), d);  // deterministic
}

TEST(Anchors, FourDistinct) {
  const auto d = generate_anchors(4);
  ASSERT_EQ(d.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_GT((d[i] - d[j]).norm(), 0.1);
  EXPECT_THROW(generate_anchors(3), Error);
}

TEST(Anchors, NearestNeighborSpacing) {
  const auto d = generate_anchors(1280);
  double sum = 0.0;
  double min_angle = 1e9;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double best = -2.0;
    for (std::size_t j = 0; j < d.size(); ++j)
      if (i != j) best = std::max(best, d[i].dot(d[j]));
    const double angle = std::acos(std::min(1.0, best)) / kDegToRad;
    sum += angle;
    min_angle = std::min(min_angle, angle);
  }
  const double mean = sum / static_cast<double>(d.size());
  EXPECT_GE(mean, 4.0);
  EXPECT_LE(mean, 7.0);
  EXPECT_GT(min_angle, 0.0);
}

TEST(SparseDirections, CenterPixelLooksForward) {
  const Intrinsics k(3.0, 3.0, 1.5, 1.5, 3, 3);
  const auto s = sparse_directions(ColorImage(3, 3, Rgb(1, 0, 0)), k, Pose());
  ASSERT_EQ(s.size(), 9u);
  EXPECT_NEAR((s[4].direction - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
  EXPECT_EQ(s[4].color, Rgb(1, 0, 0));
}

TEST(SparseDirections, FarCaptureSize) {
  const Intrinsics k = Intrinsics::from_fov(65.0, 1024, 768);
  const auto s = sparse_directions(ColorImage(32, 24), k.scaled({32, 24}), Pose());
  EXPECT_EQ(s.size(), 768u);
  for (const auto& d : s) EXPECT_NEAR(d.direction.norm(), 1.0, 1e-12);
  EXPECT_THROW(sparse_directions(ColorImage(65, 48), k.scaled({65, 48}), Pose()), Error);
}

TEST(SparseDirections, RotatingThePoseRotatesDirections) {
  const Intrinsics k = Intrinsics::from_fov(65.0, 32, 24);
  const Mat3 r = Eigen::AngleAxisd(90 * kDegToRad, Vec3::UnitY()).toRotationMatrix();
  const auto a = sparse_directions(ColorImage(32, 24), k, Pose());
  const auto b = sparse_directions(ColorImage(32, 24), k, Pose(r, Vec3(3, 1, 2)));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR((r * a[i].direction - b[i].direction).norm(), 0.0, 1e-12);
}

TEST(Splat, SingleSampleOnAnchor) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  const std::vector<DirectionSample> s{{a.directions[0], Rgb::Ones()}};
  splat_to_anchors(a, s);
  EXPECT_EQ(a.colors[0], Eigen::Vector3d::Ones());
  EXPECT_EQ(a.weights[0], 1.0);
  EXPECT_EQ(a.observed_count(), 1u);
  for (std::size_t j = 1; j < a.size(); ++j) EXPECT_EQ(a.weights[j], 0.0);
}

TEST(Splat, RunningMean) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(100);
  const std::vector<DirectionSample> s{{a.directions[7], Rgb::Ones()}, {a.directions[7], Rgb::Zero()}};
  splat_to_anchors(a, s);
  EXPECT_NEAR((a.colors[7] - Eigen::Vector3d::Constant(0.5)).norm(), 0.0, 1e-15);
  EXPECT_EQ(a.weights[7], 2.0);
}

TEST(Splat, EmptyLeavesAnchorsAlone) {
  UnitSphereAnchorSet a = random_colored(64, 1);
  const auto before = a.colors;
  splat_to_anchors(a, {});
  EXPECT_EQ(a.colors, before);
  EXPECT_EQ(a.observed_count(), 0u);
}

TEST(Splat, OrderDoesNotMatter) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<float> c(0.0f, 1.0f);
  std::vector<DirectionSample> s;
  for (int i = 0; i < 5000; ++i) s.push_back({Vec3(n(rng), n(rng), n(rng)).normalized(), Rgb(c(rng), c(rng), c(rng))});
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(200);
  UnitSphereAnchorSet b = a;
  splat_to_anchors(a, s);
  std::shuffle(s.begin(), s.end(), rng);
  splat_to_anchors(b, s);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_NEAR((a.colors[j] - b.colors[j]).norm(), 0.0, 1e-6);
    EXPECT_EQ(a.weights[j], b.weights[j]);
  }
}

TEST(Splat, AssignsToMaximumCosine) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(300);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    std::size_t best = 0;
    for (std::size_t j = 1; j < a.size(); ++j)
      if (a.directions[j].dot(d) > a.directions[best].dot(d)) best = j;
    EXPECT_EQ(a.nearest(d), best);
  }
}

TEST(Fill, UnobservedOnly) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(100);
  fill_unobserved(a, Rgb::Constant(0.5f));
  for (const auto& c : a.colors) EXPECT_EQ(c, Eigen::Vector3d::Constant(0.5));

  for (std::size_t j = 0; j < a.size(); j += 2) {
    a.observed[j] = 1;
    a.colors[j] = Eigen::Vector3d(1, 0, 0);
  }
  fill_unobserved(a, Rgb(0, 0, 1));
  std::size_t ambient = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a.observed[j]) {
      EXPECT_EQ(a.colors[j], Eigen::Vector3d(1, 0, 0));
    }
    ambient += a.colors[j] == Eigen::Vector3d(0, 0, 1);
    EXPECT_EQ(a.weights[j], 0.0);
  }
  EXPECT_EQ(ambient, 50u);
}

TEST(Fill, AllObservedUnchanged) {
  UnitSphereAnchorSet a = random_colored(50, 2);
  std::fill(a.observed.begin(), a.observed.end(), 1);
  const auto before = a.colors;
  fill_unobserved(a, Rgb::Zero());
  EXPECT_EQ(a.colors, before);
}

TEST(Fill, AmbientFallback) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(10);
  EXPECT_EQ(ambient_fallback(a), Rgb::Constant(0.5f));
  a.observed[1] = a.observed[2] = 1;
  a.colors[1] = Eigen::Vector3d(1, 0, 0);
  a.colors[2] = Eigen::Vector3d(0, 0, 1);
  EXPECT_TRUE(ambient_fallback(a).isApprox(Rgb(0.5f, 0, 0.5f)));
}

TEST(Table, FullTableHoldsEveryAnchor) {
  const UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(40);
  const ExtrapolationTable t = precompute_table(16, 8, a, 40);
  for (std::size_t pix = 0; pix < 128; ++pix) {
    const auto idx = t.pixel_indices(pix);
    EXPECT_EQ(std::set<std::uint16_t>(idx.begin(), idx.end()).size(), 40u);
  }
}

TEST(Table, MatchesBruteForceTopK) {
  const UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  const int w = 64, h = 32, k = 32;
  const ExtrapolationTable t = precompute_table(w, h, a, k);
  std::vector<std::pair<double, std::size_t>> dots(a.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      const Vec3 n = pixel_normal(x, y, w, h);
      EXPECT_NEAR((t.normals[pix].cast<double>() - n).norm(), 0.0, 1e-6);
      for (std::size_t j = 0; j < a.size(); ++j) dots[j] = {a.directions[j].dot(n), j};
      std::sort(dots.begin(), dots.end(), [](auto& l, auto& r) { return l.first > r.first; });
      const auto idx = t.pixel_indices(pix);
      const auto cosv = t.pixel_cosines(pix);
      EXPECT_EQ(idx[0], dots[0].second);  // nearest anchor first
      for (int i = 1; i < k; ++i) EXPECT_GE(cosv[static_cast<std::size_t>(i) - 1], cosv[static_cast<std::size_t>(i)]);
      const std::set<std::size_t> kept(idx.begin(), idx.end());
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (kept.count(j)) continue;
        EXPECT_LE(std::max(a.directions[j].dot(n), 0.0), cosv[static_cast<std::size_t>(k) - 1] + 1e-6);
      }
      for (int i = 0; i < k; ++i) EXPECT_NEAR(cosv[static_cast<std::size_t>(i)], dots[static_cast<std::size_t>(i)].first, 1e-6);
    }
}

TEST(Table, ValidatesArguments) {
  const UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(40);
  EXPECT_THROW(precompute_table(16, 8, a, 41), Error);
  EXPECT_THROW(precompute_table(16, 8, a, 0), Error);
  EXPECT_THROW(precompute_table(15, 8, a, 4), Error);
  const ExtrapolationTable t = precompute_table(16, 8, a, 8);
  EXPECT_THROW(extrapolate(a, {32, 16}, 128, ExtrapolationMode::kNormalized, &t), Error);
  EXPECT_THROW(extrapolate(UnitSphereAnchorSet::fibonacci(41), {16, 8}, 128, ExtrapolationMode::kNormalized, &t), Error);
}

TEST(Table, SizeForOtherExponents) {
  const UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  EXPECT_EQ(table_size_for_exponent(a, 128, {64, 32}), 32);
  const int k32 = table_size_for_exponent(a, 32, {32, 16});
  const int k512 = table_size_for_exponent(a, 512, {32, 16});
  EXPECT_GT(k32, k512);
  // Definition check at one pixel: anchors beyond K fall below the 1e-6 relative weight.
  const Vec3 n = pixel_normal(5, 7, 32, 16);
  std::vector<double> d;
  for (const Vec3& p : a.directions) d.push_back(std::max(p.dot(n), 0.0));
  std::sort(d.rbegin(), d.rend());
  EXPECT_LT(std::pow(d[static_cast<std::size_t>(k32)], 32), 1e-6 * std::pow(d[0], 32));
}

TEST(Extrapolate, ConstantFieldPreservedWhenNormalized) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  for (auto& c : a.colors) c = Eigen::Vector3d(0.2, 0.6, 0.9);
  for (int w : {1, 8, 128}) {
    const EnvMapLayer m = extrapolate(a, {32, 16}, w);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) {
      EXPECT_NEAR((m.color[i] - Rgb(0.2f, 0.6f, 0.9f)).norm(), 0.0f, 1e-6f);
      EXPECT_TRUE(m.valid[i]);
      EXPECT_TRUE(std::isinf(m.distance[i]));
    }
  }
}

TEST(Extrapolate, LiteralScaleMatchesDirectSum) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  for (auto& c : a.colors) c = Eigen::Vector3d::Ones();
  const int w = 64, h = 32;
  const auto out = extrapolate_pixels(a, {w, h}, 128, ExtrapolationMode::kLiteral);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Vec3 n = pixel_normal(x, y, w, h);
      double s = 0.0;
      for (const Vec3& p : a.directions) s += std::pow(std::max(p.dot(n), 0.0), 128.0);
      s *= 2.0 / 1280.0;
      const auto& c = out[static_cast<std::size_t>(y) * w + x];
      EXPECT_NEAR(c.x(), s, 1e-9);
      EXPECT_LT(s, 0.1);  // the printed constant does not preserve brightness
    }
}

TEST(Extrapolate, SingleLitAnchorPeaksAtItsPixel) {
  UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  const std::size_t lit = 517;
  a.colors[lit] = Eigen::Vector3d::Ones();
  const int w = 128, h = 64;
  const auto out = extrapolate_pixels(a, {w, h}, 128, ExtrapolationMode::kNormalized);
  std::size_t arg = 0, nearest = 0;
  double best_dot = -2.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].x() > out[arg].x()) arg = i;
    const double d = pixel_normal(static_cast<int>(i % w), static_cast<int>(i / w), w, h).dot(a.directions[lit]);
    if (d > best_dot) {
      best_dot = d;
      nearest = i;
    }
  }
  EXPECT_EQ(arg, nearest);
}

TEST(Extrapolate, SupportShrinksWithExponent) {
  const UnitSphereAnchorSet a = UnitSphereAnchorSet::fibonacci(1280);
  const Vec3 n = pixel_normal(40, 20, 128, 64);
  std::size_t previous = a.size() + 1;
  for (int w : {1, 4, 16, 64, 128, 256, 1024}) {
    double top = 0.0;
    for (const Vec3& p : a.directions) top = std::max(top, std::pow(std::max(p.dot(n), 0.0), w));
    std::size_t support = 0;
    for (const Vec3& p : a.directions) support += std::pow(std::max(p.dot(n), 0.0), w) > 1e-6 * top;
    EXPECT_LE(support, previous);
    previous = support;
  }
  EXPECT_LT(previous, 20u);
}

TEST(Extrapolate, Linearity) {
  const UnitSphereAnchorSet a = random_colored(1280, 3);
  UnitSphereAnchorSet b = a;
  for (auto& c : b.colors) c *= 0.37;
  for (auto mode : {ExtrapolationMode::kNormalized, ExtrapolationMode::kLiteral}) {
    const auto pa = extrapolate_pixels(a, {32, 16}, 128, mode);
    const auto pb = extrapolate_pixels(b, {32, 16}, 128, mode);
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR((pb[i] - 0.37 * pa[i]).norm(), 0.0, 1e-6);
  }
}

TEST(Extrapolate, RotationEquivariance) {
  const UnitSphereAnchorSet a = random_colored(1280, 4);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  const Mat3 r = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
  UnitSphereAnchorSet b = a;
  for (auto& d : b.directions) d = r * d;
  for (int i = 0; i < 200; ++i) {
    const Vec3 n = Vec3(g(rng), g(rng), g(rng)).normalized();
    for (auto mode : {ExtrapolationMode::kNormalized, ExtrapolationMode::kLiteral})
      EXPECT_NEAR((extrapolate_at(b, r * n, 128, mode) - extrapolate_at(a, n, 128, mode)).norm(), 0.0, 1e-9);
  }
}

TEST(Extrapolate, YawByWholeColumnsShiftsTheMap) {
  const UnitSphereAnchorSet a = random_colored(1280, 6);
  const int w = 64, h = 32, shift = 5;
  // Rotation about +Y that moves azimuth by `shift` columns.
  const Mat3 r = Eigen::AngleAxisd(-2.0 * 3.14159265358979323846 * shift / w, Vec3::UnitY()).toRotationMatrix();
  UnitSphereAnchorSet b = a;
  for (auto& d : b.directions) d = r * d;
  const auto pa = extrapolate_pixels(a, {w, h}, 128, ExtrapolationMode::kNormalized);
  const auto pb = extrapolate_pixels(b, {w, h}, 128, ExtrapolationMode::kNormalized);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& va = pa[static_cast<std::size_t>(y) * w + x];
      const auto& vb = pb[static_cast<std::size_t>(y) * w + (x + shift) % w];
      EXPECT_NEAR((va - vb).norm(), 0.0, 1e-9);
    }
}

TEST(Extrapolate, TableAgreesWithFullSum) {
  const UnitSphereAnchorSet a = random_colored(1280, 7);
  const ExtrapolationTable t = precompute_table(128, 64, a, 32);
  const auto full = extrapolate_pixels(a, {128, 64}, 128, ExtrapolationMode::kNormalized);
  const auto fast = extrapolate_pixels(a, {128, 64}, 128, ExtrapolationMode::kNormalized, &t);
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) worst = std::max(worst, (full[i] - fast[i]).cwiseAbs().maxCoeff());
  EXPECT_LE(worst, 1e-3);
}

TEST(Extrapolate, ZeroWeightFallsBackToNearestAnchor) {
  // Every anchor in the upper hemisphere: downward pixels get no weight.
  UnitSphereAnchorSet a({Vec3(0, 1, 0), Vec3(0.6, 0.8, 0), Vec3(0, 0.8, -0.6), Vec3(-0.6, 0.8, 0)});
  a.colors = {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 1, 0)};
  const Eigen::Vector3d c = extrapolate_at(a, Vec3(0, -0.6, -0.8), 128, ExtrapolationMode::kNormalized);
  EXPECT_EQ(c, Eigen::Vector3d(0, 0, 1));
  EXPECT_TRUE(extrapolate_at(a, Vec3(0, -0.6, -0.8), 128, ExtrapolationMode::kLiteral).isZero());
  EXPECT_THROW(extrapolate(a, {16, 8}, 0), Error);
}

TEST(Extrapolate, IncrementalUpdateMatchesFullRecompute) {
  UnitSphereAnchorSet a = random_colored(1280, 8);
  const ExtrapolationTable t = precompute_table(64, 32, a, 32);
  for (auto mode : {ExtrapolationMode::kNormalized, ExtrapolationMode::kLiteral}) {
    EnvMapLayer layer = extrapolate(a, {64, 32}, 128, mode, &t);
    std::vector<std::uint8_t> changed(a.size(), 0);
    for (std::size_t j = 100; j < 160; ++j) {
      a.colors[j] = Eigen::Vector3d(1, 0, 1);
      changed[j] = 1;
    }
    const std::size_t updated = extrapolate_update(layer, a, 128, mode, t, changed);
    EXPECT_GT(updated, 0u);
    EXPECT_LT(updated, layer.pixel_count());
    const EnvMapLayer full = extrapolate(a, {64, 32}, 128, mode, &t);
    EXPECT_EQ(layer.color, full.color);
    EXPECT_EQ(extrapolate_update(layer, a, 128, mode, t, std::vector<std::uint8_t>(a.size(), 0)), 0u);
  }
  EnvMapLayer wrong(32, 16);
  EXPECT_THROW(extrapolate_update(wrong, a, 128, ExtrapolationMode::kNormalized, t, std::vector<std::uint8_t>(a.size())),
               Error);
}
