#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "litfield/error.hpp"
#include "litfield/geometry.hpp"
#include "litfield/nearfield.hpp"

namespace litfield {

struct IcpConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-6;         // meters, change of the RMS residual
  double max_correspondence_dist = 0.1;  // meters
  double outlier_ratio = 3.0;            // fit drops pairs beyond this x median distance; 0 keeps all
};

struct IcpResult {
  Pose transform;                 // maps source into the reference frame
  std::vector<double> residuals;  // RMS correspondence distance, one entry per evaluated transform
  int iterations = 0;
  bool converged = false;
  std::size_t correspondences = 0;
};

/// Uniform voxel hash answering radius-bounded nearest-neighbor queries.
class VoxelIndex {
 public:
  VoxelIndex(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed;
    keyed.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      keyed.emplace_back(key_of(cell_coord(points[i])), static_cast<std::uint32_t>(i));
    std::sort(keyed.begin(), keyed.end());
    order_.reserve(keyed.size());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      if (i == 0 || keyed[i].first != keyed[i - 1].first)
        buckets_[keyed[i].first] = {static_cast<std::uint32_t>(i), 0};
      ++buckets_[keyed[i].first].second;
      order_.push_back(keyed[i].second);
    }
  }

  /// Index of the closest point within `radius` (<= cell size), or -1.
  long nearest(const Vec3& q, double radius, double* dist2_out = nullptr) const {
    const Eigen::Vector3i c = cell_coord(q);
    double best = radius * radius;
    long best_idx = -1;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = buckets_.find(key_of(c + Eigen::Vector3i(dx, dy, dz)));
          if (it == buckets_.end()) continue;
          for (std::uint32_t k = 0; k < it->second.second; ++k) {
            const std::uint32_t idx = order_[it->second.first + k];
            const double d2 = (points_[idx] - q).squaredNorm();
            if (d2 <= best) {
              best = d2;
              best_idx = idx;
            }
          }
        }
    if (dist2_out) *dist2_out = best;
    return best_idx;
  }

 private:
  Eigen::Vector3i cell_coord(const Vec3& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_)), static_cast<int>(std::floor(p.y() / cell_)),
            static_cast<int>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key_of(const Eigen::Vector3i& c) {
    constexpr std::uint64_t kMask = (1u << 21) - 1;
    return ((static_cast<std::uint64_t>(c.x()) & kMask) << 42) | ((static_cast<std::uint64_t>(c.y()) & kMask) << 21) |
           (static_cast<std::uint64_t>(c.z()) & kMask);
  }

  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> buckets_;
  std::vector<std::uint32_t> order_;
};

/// Closed-form least-squares rigid transform mapping `src[i]` onto `dst[i]`.
inline Pose fit_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = nearest_rotation(svd.matrixV() * fix * svd.matrixU().transpose());
  return Pose(r, cd - r * cs);
}

/// Rank of the spread of a cloud; < 2 means all points are (nearly) collinear.
inline int spread_rank(std::span<const Vec3> pts, double rel_tol = 1e-12) {
  if (pts.size() < 3) return 0;
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - c) * (p - c).transpose();
  const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvalues().cwiseAbs();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) return 0;
  return static_cast<int>((ev.array() > rel_tol * top).count());
}

/// Point-to-point ICP: nearest-neighbor correspondences within the gate, then a
/// closed-form rigid fit on the inlier pairs, until the RMS residual over all
/// gated pairs changes by less than the tolerance.
inline IcpResult register_icp(std::span<const Vec3> source, std::span<const Vec3> reference, const IcpConfig& cfg = {}) {
  if (cfg.max_iterations < 1 || !(cfg.max_correspondence_dist > 0.0) || !(cfg.convergence_tol >= 0.0) ||
      !(cfg.outlier_ratio == 0.0 || cfg.outlier_ratio >= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "bad ICP configuration");
  if (spread_rank(source) < 2 || spread_rank(reference) < 2)
    throw Error(ErrorCode::kDegenerateGeometry, "ICP needs at least three non-collinear points per cloud");

  const VoxelIndex index(reference, cfg.max_correspondence_dist);
  IcpResult result;
  std::vector<Vec3> moved(source.size());
  std::vector<Vec3> src_match;
  std::vector<Vec3> dst_match;
  std::vector<double> dist2;

  auto match = [&](const Pose& t) {
    src_match.clear();
    dst_match.clear();
    dist2.clear();
    double sum2 = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      moved[i] = t.apply(source[i]);
      double d2 = 0.0;
      const long j = index.nearest(moved[i], cfg.max_correspondence_dist, &d2);
      if (j < 0) continue;
      src_match.push_back(moved[i]);
      dst_match.push_back(reference[static_cast<std::size_t>(j)]);
      dist2.push_back(d2);
      sum2 += d2;
    }
    return src_match.empty() ? std::numeric_limits<double>::infinity()
                             : std::sqrt(sum2 / static_cast<double>(src_match.size()));
  };

  // Pairs far beyond the typical match distance usually sit outside the overlap.
  std::vector<Vec3> src_fit;
  std::vector<Vec3> dst_fit;
  auto inliers = [&]() {
    if (cfg.outlier_ratio == 0.0) return;
    std::vector<double> tmp = dist2;
    auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
    std::nth_element(tmp.begin(), mid, tmp.end());
    const double limit2 = cfg.outlier_ratio * cfg.outlier_ratio * *mid;
    src_fit.clear();
    dst_fit.clear();
    for (std::size_t i = 0; i < dist2.size(); ++i) {
      if (dist2[i] > limit2) continue;
      src_fit.push_back(src_match[i]);
      dst_fit.push_back(dst_match[i]);
    }
  };

  Pose current;
  double residual = match(current);
  if (src_match.empty()) throw Error(ErrorCode::kNoOverlap, "no correspondences within the gate");
  result.residuals.push_back(residual);

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (src_match.size() < 3 || spread_rank(src_match) < 2) break;
    inliers();
    const bool trimmed = cfg.outlier_ratio > 0.0 && src_fit.size() >= 3 && spread_rank(src_fit) >= 2;
    const Pose step = trimmed ? fit_rigid(src_fit, dst_fit) : fit_rigid(src_match, dst_match);
    const Pose candidate = step * current;
    const double next = match(candidate);
    result.iterations = iter + 1;
    if (src_match.empty()) break;
    current = candidate;
    result.residuals.push_back(next);
    const bool done = std::abs(residual - next) < cfg.convergence_tol;
    residual = next;
    if (done) {
      result.converged = true;
      break;
    }
  }
  result.transform = current;
  result.correspondences = src_match.size();
  return result;
}

inline std::vector<Vec3> positions_of(std::span<const PointRecord> pts, std::size_t max_points = 0) {
  const std::size_t stride = (max_points == 0 || pts.size() <= max_points) ? 1 : (pts.size() + max_points - 1) / max_points;
  std::vector<Vec3> out;
  out.reserve(pts.size() / stride + 1);
  for (std::size_t i = 0; i < pts.size(); i += stride) out.push_back(pts[i].position.cast<double>());
  return out;
}

inline IcpResult register_icp(std::span<const PointRecord> source, std::span<const PointRecord> reference,
                              const IcpConfig& cfg = {}) {
  const auto s = positions_of(source);
  const auto r = positions_of(reference);
  return register_icp(std::span<const Vec3>(s), std::span<const Vec3>(r), cfg);
}

}  // namespace litfield
