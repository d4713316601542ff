#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "litfield/error.hpp"
#include "litfield/image.hpp"

// Conventions used throughout the library:
//  * camera frame is right-handed, looks down -Z, +Y up;
//  * world frame is Y-up;
//  * equirectangular azimuth theta = atan2(x, -z) is zero along -Z, which maps
//    to the horizontal center of the map; polar angle phi is measured from +Y.

namespace litfield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Single-precision atan2 from a degree-8 polynomial in (min/max)^2; absolute
/// error stays near 1e-7 rad, several times faster than the libm call.
inline float fast_atan2(float y, float x) {
  const float ax = std::abs(x);
  const float ay = std::abs(y);
  const float hi = std::max(ax, ay);
  if (hi == 0.0f) return 0.0f;
  const float t = std::min(ax, ay) / hi;
  const float s = t * t;
  float p = 0.002932738745585084f;
  p = p * s - 0.01641310751438141f;
  p = p * s + 0.04327812045812607f;
  p = p * s - 0.07556891441345215f;
  p = p * s + 0.10667483508586884f;
  p = p * s - 0.14211104810237885f;
  p = p * s + 0.19993694126605988f;
  p = p * s - 0.3333313763141632f;
  p = p * s + 1.0f;
  float r = t * p;
  if (ay > ax) r = 1.5707963267948966f - r;
  if (x < 0.0f) r = 3.141592653589793f - r;
  return std::signbit(y) ? -r : r;
}

/// Pinhole intrinsics in pixels for an image of width x height.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Intrinsics() = default;
  Intrinsics(double fx_, double fy_, double cx_, double cy_, int width_, int height_)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_) {
    validate();
  }

  void validate() const {
    if (!(std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0))
      throw Error(ErrorCode::kInvalidArgument, "focal lengths must be finite and positive");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }

  /// Same camera, resampled to another image size.
  Intrinsics scaled(Resolution res) const {
    const double sx = static_cast<double>(res.width) / width;
    const double sy = static_cast<double>(res.height) / height;
    return Intrinsics(fx * sx, fy * sy, cx * sx, cy * sy, res.width, res.height);
  }

  Resolution resolution() const { return {width, height}; }

  /// Horizontal field of view centered on the principal point.
  static Intrinsics from_fov(double hfov_deg, int width, int height) {
    const double f = 0.5 * width / std::tan(0.5 * deg_to_rad(hfov_deg));
    return Intrinsics(f, f, 0.5 * width, 0.5 * height, width, height);
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Rigid world-from-camera transform.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  Pose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite())
      throw Error(ErrorCode::kInvalidArgument, "pose has non-finite entries");
    if ((rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(rotation_.determinant() - 1.0) > 1e-6)
      throw Error(ErrorCode::kInvalidArgument, "rotation is not a proper orthonormal matrix");
  }

  static Pose identity() { return {}; }

  static Pose translation_only(const Vec3& t) { return Pose(Mat3::Identity(), t); }

  /// Camera at `eye` whose -Z axis passes through `target`.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitZ());
    right.normalize();
    const Vec3 cam_up = right.cross(forward);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = cam_up;
    r.col(2) = -forward;
    return Pose(r, eye);
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 to_camera(const Vec3& world) const { return rotation_.transpose() * (world - translation_); }
  Vec3 forward() const { return -rotation_.col(2); }

  Pose inverse() const { return Pose(rotation_.transpose(), -(rotation_.transpose() * translation_)); }
  Pose operator*(const Pose& rhs) const {
    return Pose(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Re-orthonormalizes a nearly-rotational matrix (e.g. after float transport).
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

struct SphericalDir {
  double theta = 0.0;  // azimuth in [0, 2pi)
  double phi = 0.0;    // polar angle from +Y in [0, pi]

  Vec3 to_vector() const {
    const double s = std::sin(phi);
    return {s * std::sin(theta), std::cos(phi), -s * std::cos(theta)};
  }

  static SphericalDir from_vector(const Vec3& v) {
    const double n = v.norm();
    const double y = std::clamp(v.y() / n, -1.0, 1.0);
    SphericalDir d;
    d.phi = std::acos(y);
    if (v.x() == 0.0 && v.z() == 0.0) {
      d.theta = 0.0;
    } else {
      d.theta = std::atan2(v.x(), -v.z());
      if (d.theta < 0.0) d.theta += kTwoPi;
      if (d.theta >= kTwoPi) d.theta -= kTwoPi;
    }
    return d;
  }
};

inline double wrap_angle(double theta) {
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  if (theta >= kTwoPi) theta = 0.0;
  return theta;
}

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

/// Pixel of an equirectangular map hit by a (not necessarily unit) offset vector.
/// `norm` must equal v.norm() and be positive.
inline PixelCoord equirect_pixel_unchecked(const Vec3& v, double norm, int width, int height) {
  const double y = std::clamp(v.y() / norm, -1.0, 1.0);
  const double phi = std::acos(y);
  const int py = std::min(static_cast<int>(phi / kPi * height), height - 1);
  if ((v.x() == 0.0 && v.z() == 0.0) || y == 1.0 || y == -1.0) return {0, py};
  const double theta = std::atan2(v.x(), -v.z());  // (-pi, pi]
  const double u = theta / kTwoPi + 0.5;           // azimuth zero lands on the center column
  int px = static_cast<int>(std::floor(u * width)) % width;
  if (px < 0) px += width;
  return {px, py};
}

inline void check_equirect_size(int width, int height) {
  if (height <= 0 || width != 2 * height)
    throw Error(ErrorCode::kInvalidArgument, "equirectangular maps need width = 2 x height");
}

/// Maps a unit direction to its equirectangular pixel.
inline PixelCoord dir_to_equirect(const Vec3& dir, int width, int height) {
  check_equirect_size(width, height);
  const double n = dir.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) throw Error(ErrorCode::kNotNormalized, "direction must be unit length");
  return equirect_pixel_unchecked(dir, n, width, height);
}

/// Unit direction through the center of equirectangular pixel (px, py).
inline Vec3 equirect_to_dir(double px, double py, int width, int height) {
  const double theta = ((px + 0.5) / width - 0.5) * kTwoPi;
  const double phi = (py + 0.5) / height * kPi;
  const double s = std::sin(phi);
  return {s * std::sin(theta), std::cos(phi), -s * std::cos(theta)};
}

/// World point seen at pixel (u, v) with planar depth d along the viewing axis.
inline Vec3 unproject(double u, double v, double d, const Intrinsics& k, const Pose& pose) {
  if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorCode::kInvalidDepth, "depth must be positive");
  if (!(u >= 0.0 && u <= k.width && v >= 0.0 && v <= k.height))
    throw Error(ErrorCode::kOutOfBounds, "pixel outside image");
  const Vec3 cam(d * (u - k.cx) / k.fx, -d * (v - k.cy) / k.fy, -d);
  return pose.apply(cam);
}

/// Converts a distance measured along the pixel ray into depth along the
/// viewing axis, the `d` that unproject expects. Depth images store ray
/// distances.
inline double range_to_axis_depth(double u, double v, double range, const Intrinsics& k) {
  const double a = (u - k.cx) / k.fx;
  const double b = (v - k.cy) / k.fy;
  return range / std::sqrt(a * a + b * b + 1.0);
}

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // along the viewing axis
};

/// Perspective projection; empty when the point is not in front of the camera.
inline std::optional<Projection> project(const Vec3& world, const Intrinsics& k, const Pose& pose) {
  const Vec3 c = pose.to_camera(world);
  const double depth = -c.z();
  if (!(depth > 0.0)) return std::nullopt;
  return Projection{k.cx + k.fx * c.x() / depth, k.cy - k.fy * c.y() / depth, depth};
}

enum class FieldClass { kNearField, kFarField };

/// Near field iff the reconstruction position lies inside the camera frustum
/// (image rectangle inclusive, positive depth). No depth-range test.
inline FieldClass classify_observation(const Pose& pose, const Intrinsics& k, const Vec3& rec_pos) {
  const auto p = project(rec_pos, k, pose);
  if (!p) return FieldClass::kFarField;
  const bool inside = p->u >= 0.0 && p->u <= k.width && p->v >= 0.0 && p->v <= k.height;
  return inside ? FieldClass::kNearField : FieldClass::kFarField;
}

}  // namespace litfield
