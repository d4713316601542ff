#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "litfield/error.hpp"
#include "litfield/geometry.hpp"
#include "litfield/image.hpp"
#include "litfield/nearfield.hpp"

namespace litfield {

inline constexpr int kDefaultAnchorCount = 1280;
inline constexpr int kDefaultExponent = 128;
inline constexpr int kDefaultTableSize = 32;

/// Deterministic Fibonacci-lattice directions, ordered by decreasing y.
inline std::vector<Vec3> generate_anchors(int n) {
  if (n < 4) throw Error(ErrorCode::kInvalidArgument, "need at least four anchors");
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double a = golden * i;
    dirs.push_back(Vec3(r * std::cos(a), y, r * std::sin(a)).normalized());
  }
  return dirs;
}

/// Far-field lighting state: colored unit directions.
struct UnitSphereAnchorSet {
  std::vector<Vec3> directions;
  std::vector<Eigen::Vector3d> colors;
  std::vector<double> weights;
  std::vector<std::uint8_t> observed;

  UnitSphereAnchorSet() = default;
  explicit UnitSphereAnchorSet(std::vector<Vec3> dirs)
      : directions(std::move(dirs)),
        colors(directions.size(), Eigen::Vector3d::Zero()),
        weights(directions.size(), 0.0),
        observed(directions.size(), 0) {}

  static UnitSphereAnchorSet fibonacci(int n = kDefaultAnchorCount) { return UnitSphereAnchorSet(generate_anchors(n)); }

  std::size_t size() const { return directions.size(); }
  std::size_t observed_count() const {
    return static_cast<std::size_t>(std::count(observed.begin(), observed.end(), 1));
  }
  double observed_fraction() const { return size() ? static_cast<double>(observed_count()) / size() : 0.0; }

  /// Hash of the direction set; ties a precomputed table to its anchors.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const Vec3& d : directions)
      for (int c = 0; c < 3; ++c) {
        const double v = d[c];
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        h = (h ^ bits) * 1099511628211ull;
      }
    return h;
  }

  std::size_t nearest(const Vec3& dir) const {
    std::size_t best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < directions.size(); ++j) {
      const double d = directions[j].dot(dir);
      if (d > best_dot) {
        best_dot = d;
        best = j;
      }
    }
    return best;
  }
};

struct DirectionSample {
  Vec3 direction;
  Rgb color;
};

inline constexpr Resolution kFarCaptureResolution{32, 24};

/// Treats every pixel of a low-resolution frame as lying at unit depth and
/// returns its world-space viewing direction and color.
inline std::vector<DirectionSample> sparse_directions(const ColorImage& color, const Intrinsics& k, const Pose& pose) {
  if (color.width > 64 || color.height > 48)
    throw Error(ErrorCode::kInvalidArgument, "sparse sampling expects at most 64x48 pixels");
  const Intrinsics ks = k.resolution() == color.resolution() ? k : k.scaled(color.resolution());
  std::vector<DirectionSample> out;
  out.reserve(color.pixels.size());
  for (int y = 0; y < color.height; ++y)
    for (int x = 0; x < color.width; ++x) {
      const Vec3 p = unproject(x + 0.5, y + 0.5, 1.0, ks, pose);
      out.push_back({(p - pose.translation()).normalized(), color.at(x, y)});
    }
  return out;
}

/// Hard nearest-anchor assignment with a running mean per anchor.
inline void splat_to_anchors(UnitSphereAnchorSet& anchors, std::span<const DirectionSample> samples) {
  for (const DirectionSample& s : samples) {
    const std::size_t j = anchors.nearest(s.direction);
    anchors.weights[j] += 1.0;
    anchors.colors[j] += (clamp01(s.color).cast<double>() - anchors.colors[j]) / anchors.weights[j];
    anchors.observed[j] = 1;
  }
}

inline void fill_unobserved(UnitSphereAnchorSet& anchors, const Rgb& ambient) {
  const Eigen::Vector3d a = clamp01(ambient).cast<double>();
  for (std::size_t j = 0; j < anchors.size(); ++j)
    if (!anchors.observed[j]) anchors.colors[j] = a;
}

/// Ambient color used when no sensor reading is supplied: mean of the
/// observed anchors, or mid-gray when nothing has been observed.
inline Rgb ambient_fallback(const UnitSphereAnchorSet& anchors) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::size_t n = 0;
  for (std::size_t j = 0; j < anchors.size(); ++j)
    if (anchors.observed[j]) {
      sum += anchors.colors[j];
      ++n;
    }
  if (n == 0) return Rgb::Constant(0.5f);
  return (sum / static_cast<double>(n)).cast<float>();
}

/// Per-pixel K nearest anchors (by cosine) for one map resolution.
struct ExtrapolationTable {
  int width = 0;
  int height = 0;
  int k = 0;
  std::size_t anchor_count = 0;
  std::uint64_t anchor_fingerprint = 0;
  std::vector<Eigen::Vector3f> normals;  // per pixel
  std::vector<std::uint16_t> indices;    // pixel-major, k per pixel
  std::vector<float> cosines;            // descending per pixel, clamped at 0

  Resolution resolution() const { return {width, height}; }
  std::span<const std::uint16_t> pixel_indices(std::size_t pix) const {
    return {indices.data() + pix * static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
  }
  std::span<const float> pixel_cosines(std::size_t pix) const {
    return {cosines.data() + pix * static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
  }
};

inline ExtrapolationTable precompute_table(int width, int height, const UnitSphereAnchorSet& anchors,
                                           int k = kDefaultTableSize) {
  check_equirect_size(width, height);
  const std::size_t n = anchors.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) throw Error(ErrorCode::kInvalidArgument, "table size must be in [1, N]");
  if (n > std::numeric_limits<std::uint16_t>::max() + 1u)
    throw Error(ErrorCode::kInvalidArgument, "table supports at most 65536 anchors");

  ExtrapolationTable t;
  t.width = width;
  t.height = height;
  t.k = k;
  t.anchor_count = n;
  t.anchor_fingerprint = anchors.fingerprint();
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  t.normals.resize(pixels);
  t.indices.resize(pixels * static_cast<std::size_t>(k));
  t.cosines.resize(pixels * static_cast<std::size_t>(k));

  // Anchors sorted by descending y so a polar band maps to a contiguous range.
  std::vector<std::uint32_t> by_y(n);
  std::iota(by_y.begin(), by_y.end(), 0u);
  std::stable_sort(by_y.begin(), by_y.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return anchors.directions[a].y() > anchors.directions[b].y(); });
  std::vector<double> ys(n);
  std::vector<Eigen::Vector3d> sorted_dirs(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = anchors.directions[by_y[i]].y();
    sorted_dirs[i] = anchors.directions[by_y[i]];
  }

  // Initial cap whose expected population is twice K.
  const double initial_alpha = std::acos(std::max(-1.0, 1.0 - 4.0 * k / static_cast<double>(n)));
  std::vector<std::pair<double, std::uint32_t>> cand;
  cand.reserve(n);
  std::vector<std::pair<double, std::uint32_t>> ring;  // (azimuth, sorted index) of the row's band
  ring.reserve(n);

  // Sorted-index range of anchors whose polar angle may fall within alpha of phi.
  auto band = [&](double phi, double alpha) {
    const double y_hi = alpha >= kPi ? 2.0 : std::cos(std::max(0.0, phi - alpha)) + 1e-9;
    const double y_lo = alpha >= kPi ? -2.0 : std::cos(std::min(kPi, phi + alpha)) - 1e-9;
    const auto begin = std::lower_bound(ys.begin(), ys.end(), y_hi, std::greater<double>());
    const auto end = std::lower_bound(ys.begin(), ys.end(), y_lo, std::greater<double>());
    return std::pair{static_cast<std::size_t>(begin - ys.begin()), static_cast<std::size_t>(end - ys.begin())};
  };
  auto take = [&](std::size_t s, const Vec3& normal, double cos_alpha) {
    const double d = sorted_dirs[s].dot(normal);
    if (d >= cos_alpha) cand.emplace_back(d, by_y[s]);
  };

  for (int y = 0; y < height; ++y) {
    const double phi_n = (y + 0.5) / height * kPi;
    const auto [row_begin, row_end] = band(phi_n, initial_alpha);
    ring.clear();
    for (std::size_t s = row_begin; s < row_end; ++s)
      ring.emplace_back(std::atan2(sorted_dirs[s].x(), -sorted_dirs[s].z()), static_cast<std::uint32_t>(s));
    std::sort(ring.begin(), ring.end());
    // Longitude half-width of the cap; the whole ring when the cap covers a pole.
    const bool polar_cap = initial_alpha >= phi_n || initial_alpha >= kPi - phi_n;
    const double half_width =
        polar_cap ? kPi : std::asin(std::min(1.0, std::sin(initial_alpha) / std::sin(phi_n))) + 1e-9;
    const double initial_cos = std::cos(initial_alpha);

    for (int x = 0; x < width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * width + x;
      const Vec3 normal = equirect_to_dir(x, y, width, height);
      t.normals[pix] = normal.cast<float>();
      cand.clear();
      if (half_width >= kPi) {
        for (const auto& r : ring) take(r.second, normal, initial_cos);
      } else {
        const double theta_n = ((x + 0.5) / width - 0.5) * kTwoPi;
        auto scan = [&](double lo, double hi) {
          auto it = std::lower_bound(ring.begin(), ring.end(), std::pair{lo, std::uint32_t{0}});
          for (; it != ring.end() && it->first <= hi; ++it) take(it->second, normal, initial_cos);
        };
        const double lo = theta_n - half_width;
        const double hi = theta_n + half_width;
        scan(std::max(lo, -kPi), std::min(hi, kPi));
        if (lo < -kPi) scan(lo + kTwoPi, kPi);
        if (hi > kPi) scan(-kPi, hi - kTwoPi);
      }
      // Rare: too few anchors in the cap, so widen it over the full band.
      for (double alpha = initial_alpha; cand.size() < static_cast<std::size_t>(k);) {
        alpha = std::min(kPi, 2.0 * alpha);
        const double cos_alpha = alpha >= kPi ? -2.0 : std::cos(alpha);
        const auto [b, e] = band(phi_n, alpha);
        cand.clear();
        for (std::size_t s = b; s < e; ++s) take(s, normal, cos_alpha);
      }
      const auto closer = [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      };
      std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end(), closer);
      std::sort(cand.begin(), cand.begin() + k, closer);
      for (int i = 0; i < k; ++i) {
        t.indices[pix * k + i] = static_cast<std::uint16_t>(cand[i].second);
        t.cosines[pix * k + i] = static_cast<float>(std::max(cand[i].first, 0.0));
      }
    }
  }
  return t;
}

/// Table size for exponents other than the default: the smallest K such that
/// every pixel's (K+1)-th best anchor has cos^w below 1e-6 of its best one.
inline int table_size_for_exponent(const UnitSphereAnchorSet& anchors, int w, Resolution res) {
  if (w == kDefaultExponent) return std::min<int>(kDefaultTableSize, static_cast<int>(anchors.size()));
  if (w < 1) throw Error(ErrorCode::kInvalidArgument, "exponent must be >= 1");
  const double rel = std::pow(1e-6, 1.0 / w);
  std::size_t worst = 1;
  std::vector<double> dots(anchors.size());
  for (int y = 0; y < res.height; ++y)
    for (int x = 0; x < res.width; ++x) {
      const Vec3 n = equirect_to_dir(x, y, res.width, res.height);
      double best = 0.0;
      for (std::size_t j = 0; j < anchors.size(); ++j) {
        dots[j] = std::max(anchors.directions[j].dot(n), 0.0);
        best = std::max(best, dots[j]);
      }
      const double threshold = best * rel;
      const auto count = static_cast<std::size_t>(std::count_if(dots.begin(), dots.end(), [&](double d) { return d >= threshold && d > 0.0; }));
      worst = std::max(worst, count);
    }
  return static_cast<int>(std::min(worst, anchors.size()));
}

enum class ExtrapolationMode {
  kLiteral,     // (2/N) sum max(p.n,0)^w c
  kNormalized,  // sum max(p.n,0)^w c / sum max(p.n,0)^w
};

inline double int_pow(double base, int exp) {
  double result = 1.0;
  while (exp > 0) {
    if (exp & 1) result *= base;
    base *= base;
    exp >>= 1;
  }
  return result;
}

/// Extrapolated color for an arbitrary unit direction, summing over all anchors.
inline Eigen::Vector3d extrapolate_at(const UnitSphereAnchorSet& anchors, const Vec3& normal, int w,
                                      ExtrapolationMode mode) {
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double wsum = 0.0;
  std::size_t best = 0;
  double best_dot = -2.0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const double d = anchors.directions[j].dot(normal);
    if (d > best_dot) {
      best_dot = d;
      best = j;
    }
    const double wt = int_pow(std::max(d, 0.0), w);
    acc += wt * anchors.colors[j];
    wsum += wt;
  }
  if (mode == ExtrapolationMode::kLiteral) return acc * (2.0 / static_cast<double>(anchors.size()));
  if (wsum > 0.0) return acc / wsum;
  return anchors.colors[best];
}

namespace detail {

inline void check_table(const ExtrapolationTable& table, const UnitSphereAnchorSet& anchors, Resolution target) {
  if (table.resolution() != target || table.anchor_count != anchors.size() ||
      table.anchor_fingerprint != anchors.fingerprint())
    throw Error(ErrorCode::kInvalidArgument, "extrapolation table does not match the target or anchor set");
}

/// One pixel from its K stored anchors; `scratch` holds 2K doubles.
inline Eigen::Vector3d table_pixel(const UnitSphereAnchorSet& anchors, const ExtrapolationTable& table, std::size_t pix,
                                   int w, ExtrapolationMode mode, double* scratch) {
  const auto k = static_cast<std::size_t>(table.k);
  const auto idx = table.pixel_indices(pix);
  const auto cosv = table.pixel_cosines(pix);
  double* base = scratch;
  double* wt = scratch + k;
  // Square-and-multiply across all K weights at once so the loops vectorize.
  for (std::size_t i = 0; i < k; ++i) {
    base[i] = cosv[i];
    wt[i] = 1.0;
  }
  for (int e = w; e > 0; e >>= 1) {
    if (e & 1)
      for (std::size_t i = 0; i < k; ++i) wt[i] *= base[i];
    for (std::size_t i = 0; i < k; ++i) base[i] *= base[i];
  }
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double wsum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += wt[i] * anchors.colors[idx[i]];
    wsum += wt[i];
  }
  if (mode == ExtrapolationMode::kLiteral) return acc * (2.0 / static_cast<double>(anchors.size()));
  return wsum > 0.0 ? Eigen::Vector3d(acc / wsum) : anchors.colors[idx[0]];
}

}  // namespace detail

/// Double-precision extrapolation of every pixel of a width x height map.
/// With a table only its K stored anchors are summed per pixel.
inline std::vector<Eigen::Vector3d> extrapolate_pixels(const UnitSphereAnchorSet& anchors, Resolution target, int w,
                                                       ExtrapolationMode mode,
                                                       const ExtrapolationTable* table = nullptr) {
  check_equirect_size(target.width, target.height);
  if (w < 1) throw Error(ErrorCode::kInvalidArgument, "exponent must be >= 1");
  if (anchors.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty anchor set");
  std::vector<Eigen::Vector3d> out(target.pixel_count());
  if (!table) {
    for (int y = 0; y < target.height; ++y)
      for (int x = 0; x < target.width; ++x)
        out[static_cast<std::size_t>(y) * target.width + x] =
            extrapolate_at(anchors, equirect_to_dir(x, y, target.width, target.height), w, mode);
    return out;
  }
  detail::check_table(*table, anchors, target);
  std::vector<double> scratch(2 * static_cast<std::size_t>(table->k));
  for (std::size_t pix = 0; pix < out.size(); ++pix) out[pix] = detail::table_pixel(anchors, *table, pix, w, mode, scratch.data());
  return out;
}

/// Far-field environment map: every pixel valid, distance +inf.
inline EnvMapLayer extrapolate(const UnitSphereAnchorSet& anchors, Resolution target, int w = kDefaultExponent,
                               ExtrapolationMode mode = ExtrapolationMode::kNormalized,
                               const ExtrapolationTable* table = nullptr) {
  const auto px = extrapolate_pixels(anchors, target, w, mode, table);
  EnvMapLayer layer(target.width, target.height);
  for (std::size_t i = 0; i < px.size(); ++i) {
    layer.color[i] = px[i].cast<float>();
    layer.valid[i] = 1;
  }
  return layer;
}

/// Refreshes only the pixels whose table entries reference an anchor flagged
/// in `changed`; the result equals a full extrapolate() with the same table.
inline std::size_t extrapolate_update(EnvMapLayer& layer, const UnitSphereAnchorSet& anchors, int w,
                                      ExtrapolationMode mode, const ExtrapolationTable& table,
                                      std::span<const std::uint8_t> changed) {
  if (w < 1) throw Error(ErrorCode::kInvalidArgument, "exponent must be >= 1");
  detail::check_table(table, anchors, layer.resolution());
  if (changed.size() != anchors.size()) throw Error(ErrorCode::kDimensionMismatch, "one change flag per anchor");
  const auto k = static_cast<std::size_t>(table.k);
  std::vector<double> scratch(2 * k);
  std::size_t updated = 0;
  for (std::size_t pix = 0; pix < layer.pixel_count(); ++pix) {
    const std::uint16_t* idx = table.indices.data() + pix * k;
    bool touched = false;
    for (std::size_t i = 0; i < k && !touched; ++i) touched = changed[idx[i]] != 0;
    if (!touched) continue;
    layer.color[pix] = detail::table_pixel(anchors, table, pix, w, mode, scratch.data()).cast<float>();
    layer.valid[pix] = 1;
    ++updated;
  }
  return updated;
}

}  // namespace litfield
