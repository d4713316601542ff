#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Geometry>

#include "litfield/error.hpp"
#include "litfield/geometry.hpp"

namespace litfield {

struct PoseSample {
  std::int64_t timestamp_ms = 0;
  Vec3 position = Vec3::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

/// Motion gate knobs. Defaults are the K=5 window, 300 ms period, 10 cm and 10 degree limits.
struct CapturePolicyConfig {
  int window_size = 5;
  std::int64_t check_period_ms = 300;
  double pos_threshold_m = 0.10;
  double rot_threshold_deg = 10.0;

  void validate() const {
    if (window_size < 1 || check_period_ms <= 0 || !(pos_threshold_m > 0.0) || !(rot_threshold_deg > 0.0))
      throw Error(ErrorCode::kConfiguration, "capture policy needs K >= 1, C > 0 and positive thresholds");
  }
};

enum class CaptureDecision { kCapture, kSkip };

/// Geodesic angle between two orientations, in degrees.
inline double quaternion_angle_deg(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const double dot = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return rad_to_deg(2.0 * std::acos(dot));
}

/// Captures once the check period has elapsed and `now` is within both
/// thresholds of every sample in the window. An empty window captures.
inline CaptureDecision motion_gate(std::span<const PoseSample> window, const PoseSample& now,
                                   const CapturePolicyConfig& cfg, std::optional<std::int64_t> last_capture_ms) {
  if (last_capture_ms && now.timestamp_ms - *last_capture_ms < cfg.check_period_ms) return CaptureDecision::kSkip;
  for (const PoseSample& s : window) {
    if ((now.position - s.position).norm() > cfg.pos_threshold_m) return CaptureDecision::kSkip;
    if (quaternion_angle_deg(now.orientation, s.orientation) > cfg.rot_threshold_deg) return CaptureDecision::kSkip;
  }
  return CaptureDecision::kCapture;
}

/// Stateful wrapper owning the moving window and the capture timer of one stream.
class CaptureGate {
 public:
  explicit CaptureGate(CapturePolicyConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  CaptureDecision offer(const PoseSample& now) {
    if (!window_.empty() && now.timestamp_ms <= window_.back().timestamp_ms)
      throw Error(ErrorCode::kInvalidArgument, "pose timestamps must be strictly increasing");
    const std::vector<PoseSample> snapshot(window_.begin(), window_.end());
    const CaptureDecision d = motion_gate(snapshot, now, cfg_, last_capture_ms_);
    window_.push_back(now);
    while (static_cast<int>(window_.size()) > cfg_.window_size) window_.pop_front();
    if (d == CaptureDecision::kCapture) last_capture_ms_ = now.timestamp_ms;
    return d;
  }

  std::optional<std::int64_t> last_capture_ms() const { return last_capture_ms_; }
  const CapturePolicyConfig& config() const { return cfg_; }

 private:
  CapturePolicyConfig cfg_;
  std::deque<PoseSample> window_;
  std::optional<std::int64_t> last_capture_ms_;
};

struct GuidancePlan {
  std::vector<SphericalDir> directions;
  std::size_t count() const { return directions.size(); }
};

inline constexpr double kGuidanceStepDeg = 30.0;

/// Viewing directions that face away from the virtual object, laid out on a
/// 30 degree grid around -v_obj. Order: center, horizontal, vertical, corners.
inline GuidancePlan plan_guided_movement(const Vec3& v_obj, int n) {
  if (n != 1 && n != 3 && n != 5 && n != 9)
    throw Error(ErrorCode::kInvalidArgument, "guided movement supports 1, 3, 5 or 9 observations");
  if (std::abs(v_obj.norm() - 1.0) > 1e-6) throw Error(ErrorCode::kNotNormalized, "object viewing direction must be unit");
  const SphericalDir center = SphericalDir::from_vector(-v_obj);
  const double step = deg_to_rad(kGuidanceStepDeg);
  auto at = [&](int dt, int dp) {
    SphericalDir d;
    d.theta = wrap_angle(center.theta + dt * step);
    d.phi = std::clamp(center.phi + dp * step, 0.0, kPi);
    return d;
  };
  GuidancePlan plan;
  plan.directions.push_back(center);
  if (n >= 3) {
    plan.directions.push_back(at(-1, 0));
    plan.directions.push_back(at(+1, 0));
  }
  if (n >= 5) {
    plan.directions.push_back(at(0, -1));
    plan.directions.push_back(at(0, +1));
  }
  if (n == 9) {
    plan.directions.push_back(at(-1, -1));
    plan.directions.push_back(at(+1, -1));
    plan.directions.push_back(at(-1, +1));
    plan.directions.push_back(at(+1, +1));
  }
  return plan;
}

}  // namespace litfield
