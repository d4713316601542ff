#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "litfield/capture.hpp"
#include "litfield/error.hpp"
#include "litfield/farfield.hpp"
#include "litfield/geometry.hpp"
#include "litfield/icp.hpp"
#include "litfield/image.hpp"
#include "litfield/nearfield.hpp"

namespace litfield {

enum class Preset : std::uint8_t { kLow = 0, kMedium = 1, kHigh = 2, kCustom = 3 };

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::kLow: return "low";
    case Preset::kMedium: return "medium";
    case Preset::kHigh: return "high";
    case Preset::kCustom: return "custom";
  }
  return "?";
}

inline Preset parse_preset(const std::string& s) {
  if (s == "low") return Preset::kLow;
  if (s == "medium") return Preset::kMedium;
  if (s == "high") return Preset::kHigh;
  if (s == "custom") return Preset::kCustom;
  throw Error(ErrorCode::kConfiguration, "unknown preset '" + s + "'");
}

struct SessionConfig {
  Preset preset = Preset::kHigh;
  int num_views = 5;
  Resolution near_capture_res{1024, 768};
  std::vector<Resolution> multires_levels{{1024, 512}, {512, 256}};
  Resolution envmap_res{1024, 512};
  Resolution far_capture_res = kFarCaptureResolution;
  int anchor_count = kDefaultAnchorCount;
  int extrapolation_w = kDefaultExponent;
  ExtrapolationMode extrapolation_mode = ExtrapolationMode::kNormalized;
  double boundary_side = 2.0;
  CapturePolicyConfig capture_cfg{};
  bool icp_enabled = false;
  IcpConfig icp_cfg{};
  std::uint8_t min_confidence = 2;
  int feather_width = 0;  // reserved; compose is a hard override

  static SessionConfig from_preset(Preset p) {
    SessionConfig c;
    c.preset = p;
    switch (p) {
      case Preset::kLow:
        c.num_views = 3;
        c.near_capture_res = {256, 192};
        c.multires_levels = {{512, 256}, {256, 128}, {64, 32}};
        c.envmap_res = {512, 256};
        break;
      case Preset::kMedium:
        c.num_views = 4;
        c.near_capture_res = {512, 384};
        c.multires_levels = {{768, 384}, {384, 192}};
        c.envmap_res = {512, 256};
        break;
      case Preset::kHigh:
      case Preset::kCustom:
        break;
    }
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfiguration, m); };
    if (num_views < 1) fail("num_views must be >= 1");
    if (near_capture_res.width <= 0 || near_capture_res.height <= 0) fail("near capture resolution must be positive");
    if (far_capture_res.width <= 0 || far_capture_res.height <= 0 || far_capture_res.width > 64 ||
        far_capture_res.height > 48)
      fail("far capture resolution must be within 64x48");
    if (anchor_count < 4) fail("anchor_count must be >= 4");
    if (extrapolation_w < 1) fail("extrapolation exponent must be >= 1");
    if (!(boundary_side > 0.0)) fail("boundary side must be positive");
    if (min_confidence > 2) fail("min_confidence must be 0, 1 or 2");
    if (feather_width != 0) fail("feathering is not supported");
    try {
      check_levels(multires_levels);
      check_equirect_size(envmap_res.width, envmap_res.height);
      capture_cfg.validate();
    } catch (const Error& e) {
      fail(e.what());
    }
    if (preset != Preset::kCustom) {
      const SessionConfig ref = from_preset(preset);
      if (num_views != ref.num_views || near_capture_res != ref.near_capture_res ||
          multires_levels != ref.multires_levels || envmap_res != ref.envmap_res)
        fail(std::string("settings do not match the ") + to_string(preset) + " preset");
    }
  }
};

struct CameraFrame {
  std::uint32_t view_id = 0;
  std::int64_t timestamp_ms = 0;
  Intrinsics intrinsics;
  Pose pose;
  ColorImage color;
  std::optional<DepthImage> depth;
};

/// Wall time per pipeline stage in milliseconds; totals accumulate over the session.
struct StageTimings {
  double data_decode_ms = 0.0;
  double dense_cloud_ms = 0.0;
  double multires_projection_ms = 0.0;
  double sparse_cloud_ms = 0.0;
  double anchor_extrapolation_ms = 0.0;

  StageTimings& operator+=(const StageTimings& o) {
    data_decode_ms += o.data_decode_ms;
    dense_cloud_ms += o.dense_cloud_ms;
    multires_projection_ms += o.multires_projection_ms;
    sparse_cloud_ms += o.sparse_cloud_ms;
    anchor_extrapolation_ms += o.anchor_extrapolation_ms;
    return *this;
  }
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Process-wide cache of extrapolation tables; anchors are deterministic, so
/// sessions with equal settings share one table.
inline std::shared_ptr<const ExtrapolationTable> shared_table(Resolution res, const UnitSphereAnchorSet& anchors, int k) {
  using Key = std::tuple<int, int, int, std::uint64_t>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const ExtrapolationTable>> cache;
  const Key key{res.width, res.height, k, anchors.fingerprint()};
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto table = std::make_shared<const ExtrapolationTable>(precompute_table(res.width, res.height, anchors, k));
  std::lock_guard lock(mu);
  if (cache.size() >= 8) cache.erase(cache.begin());
  return cache.emplace(key, std::move(table)).first->second;
}

inline std::atomic<std::uint64_t>& session_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

}  // namespace detail

/// Snapshot handed to a background registration task.
struct RegistrationJob {
  std::uint32_t view_id = 0;
  std::uint64_t sequence = 0;
  std::vector<Vec3> source;
  std::vector<Vec3> reference;
  IcpConfig cfg;
};

struct RegistrationOutcome {
  std::uint32_t view_id = 0;
  std::uint64_t sequence = 0;
  std::optional<IcpResult> result;
  std::string error;
};

inline constexpr double kPlanarRatio = 1e-3;

inline RegistrationOutcome run_registration(const RegistrationJob& job) {
  RegistrationOutcome out{job.view_id, job.sequence, std::nullopt, {}};
  // A single plane leaves in-plane sliding unconstrained.
  if (spread_rank(job.source, kPlanarRatio) < 3 || spread_rank(job.reference, kPlanarRatio) < 3) {
    out.error = "view geometry is planar";
    return out;
  }
  try {
    out.result = register_icp(std::span<const Vec3>(job.source), std::span<const Vec3>(job.reference), job.cfg);
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

/// One multi-view reconstruction around a fixed position. Not internally
/// synchronized: the owner serializes all calls.
class ReconstructionSession {
 public:
  static ReconstructionSession create(const Vec3& rec_pos, const SessionConfig& config, const Intrinsics& intrinsics,
                                      Resolution native_res, std::optional<Rgb> ambient = std::nullopt) {
    config.validate();
    intrinsics.validate();
    if (intrinsics.resolution() != native_res)
      throw Error(ErrorCode::kConfiguration, "intrinsics do not match the native resolution");
    if (!rec_pos.allFinite()) throw Error(ErrorCode::kConfiguration, "reconstruction position must be finite");
    return ReconstructionSession(rec_pos, config, intrinsics, native_res, ambient);
  }

  std::uint64_t id() const { return id_; }
  const Vec3& rec_pos() const { return rec_pos_; }
  const SessionConfig& config() const { return config_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  Resolution native_resolution() const { return native_res_; }
  const Rgb& ambient() const { return ambient_; }
  const DensePointCloudBuffer& buffer() const { return buffer_; }
  const UnitSphereAnchorSet& anchors() const { return anchors_; }
  const EnvMapLayer& near_map() const { return near_map_; }
  const EnvMapLayer& far_map() const { return far_map_; }
  const StageTimings& last_timings() const { return last_; }
  const StageTimings& total_timings() const { return total_; }
  std::optional<std::int64_t> last_capture_ms() const { return last_capture_ms_; }
  std::uint64_t sequence() const { return sequence_; }

  void record_decode_ms(double ms) {
    last_.data_decode_ms = ms;
    total_.data_decode_ms += ms;
  }

  /// Dense near-field path followed by a sparse update of the anchors.
  const EnvMapLayer& ingest_near(const CameraFrame& frame) {
    if (!frame.depth) throw Error(ErrorCode::kNearRequiresDepth, "near-field frames must carry depth");
    if (classify_observation(frame.pose, frame.intrinsics, rec_pos_) != FieldClass::kNearField)
      throw Error(ErrorCode::kInvalidArgument, "frame does not see the reconstruction position");
    StageTimings t;
    detail::Stopwatch sw;
    const Resolution res = config_.near_capture_res;
    const ColorImage color = resample_nearest(frame.color, res);
    const DepthImage depth = resample_nearest(*frame.depth, res);
    const Intrinsics k = frame.intrinsics.resolution() == res ? frame.intrinsics : frame.intrinsics.scaled(res);
    const auto points = generate_dense_cloud(color, depth, k, frame.pose, config_.min_confidence, frame.view_id);
    t.dense_cloud_ms = sw.lap_ms();

    if (!points.empty()) {
      buffer_.insert_view(frame.view_id, points);
      rebuild_near(&t);
    }
    sw.lap_ms();

    const auto samples = near_samples(color, depth, k, frame.pose);
    const auto before = anchors_.colors;
    splat_to_anchors(anchors_, samples);
    fill_unobserved(anchors_, ambient_);
    t.sparse_cloud_ms = sw.lap_ms();
    refresh_far(&t, before);
    finish(frame.timestamp_ms, t);
    return near_map_;
  }

  /// Sparse far-field path: unit-depth directions splatted into the anchors.
  const EnvMapLayer& ingest_far(const CameraFrame& frame) {
    StageTimings t;
    detail::Stopwatch sw;
    const ColorImage low = resample_area(frame.color, config_.far_capture_res);
    const Intrinsics k = frame.intrinsics.scaled(config_.far_capture_res);
    const auto samples = sparse_directions(low, k, frame.pose);
    const auto before = anchors_.colors;
    splat_to_anchors(anchors_, samples);
    fill_unobserved(anchors_, ambient_);
    t.sparse_cloud_ms = sw.lap_ms();
    refresh_far(&t, before);
    finish(frame.timestamp_ms, t);
    return far_map_;
  }

  /// Near map where valid, far map elsewhere.
  EnvironmentMap compose() const {
    EnvironmentMap out(config_.envmap_res.width, config_.envmap_res.height);
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = near_map_.valid[i] ? near_map_.color[i] : far_map_.color[i];
    return out;
  }

  /// Background registration of a buffered view against all other views.
  std::optional<RegistrationJob> prepare_registration(std::uint32_t view_id, std::size_t max_source = 20000,
                                                      std::size_t max_reference = 100000) const {
    if (!buffer_.contains(view_id) || buffer_.occupied() < 2) return std::nullopt;
    const NearFieldBoundary b{rec_pos_, config_.boundary_side};
    RegistrationJob job;
    job.view_id = view_id;
    job.sequence = buffer_.sequence_of(view_id);
    job.cfg = config_.icp_cfg;
    const auto own = filter_boundary(buffer_.view_points(view_id), b);
    job.source = positions_of(own, max_source);
    std::vector<PointRecord> others;
    for (std::uint32_t id : buffer_.views_by_age()) {
      if (id == view_id) continue;
      const auto f = filter_boundary(buffer_.view_points(id), b);
      others.insert(others.end(), f.begin(), f.end());
    }
    job.reference = positions_of(others, max_reference);
    if (job.source.size() < 3 || job.reference.size() < 3) return std::nullopt;
    return job;
  }

  /// Applies a finished registration if its view is still buffered unchanged.
  bool apply_registration(const RegistrationOutcome& outcome) {
    if (!outcome.result || !buffer_.contains(outcome.view_id) ||
        buffer_.sequence_of(outcome.view_id) != outcome.sequence)
      return false;
    const Pose& t = outcome.result->transform;
    const Eigen::Matrix3f r = t.rotation().cast<float>();
    const Eigen::Vector3f tr = t.translation().cast<float>();
    for (PointRecord& p : buffer_.mutable_view_points(outcome.view_id)) p.position = r * p.position + tr;
    StageTimings timings;
    rebuild_near(&timings);
    return true;
  }

 private:
  ReconstructionSession(const Vec3& rec_pos, const SessionConfig& config, const Intrinsics& intrinsics,
                        Resolution native_res, std::optional<Rgb> ambient)
      : id_(++detail::session_counter()),
        rec_pos_(rec_pos),
        config_(config),
        intrinsics_(intrinsics),
        native_res_(native_res),
        buffer_(config.num_views, config.near_capture_res.pixel_count()),
        anchors_(UnitSphereAnchorSet::fibonacci(config.anchor_count)),
        near_map_(config.envmap_res.width, config.envmap_res.height) {
    ambient_ = ambient ? clamp01(*ambient) : ambient_fallback(anchors_);
    fill_unobserved(anchors_, ambient_);
    const int k = table_size_for_exponent(anchors_, config_.extrapolation_w, config_.envmap_res);
    table_ = detail::shared_table(config_.envmap_res, anchors_, k);
    if (config_.extrapolation_mode == ExtrapolationMode::kNormalized) {
      // Every anchor holds the ambient color, and a weighted mean of one color is that color.
      far_map_ = EnvMapLayer(config_.envmap_res.width, config_.envmap_res.height);
      std::fill(far_map_.color.begin(), far_map_.color.end(), ambient_);
      std::fill(far_map_.valid.begin(), far_map_.valid.end(), std::uint8_t{1});
    } else {
      StageTimings t;
      refresh_far(&t);
    }
  }

  void rebuild_near(StageTimings* t) {
    detail::Stopwatch sw;
    const NearFieldBoundary b{rec_pos_, config_.boundary_side};
    std::vector<PointRecord> inside;
    inside.reserve(buffer_.point_count());
    for (std::uint32_t id : buffer_.views_by_age())
      for (const PointRecord& p : buffer_.view_points(id))
        if (b.contains(p.position)) inside.push_back(p);
    const auto proj = project_multires(inside, rec_pos_, config_.multires_levels);
    const EnvMapLayer merged = merge_multires(proj.layers, config_.multires_levels.front());
    near_map_ = resample_nearest(merged, config_.envmap_res);
    t->multires_projection_ms += sw.lap_ms();
  }

  void refresh_far(StageTimings* t) {
    detail::Stopwatch sw;
    far_map_ = extrapolate(anchors_, config_.envmap_res, config_.extrapolation_w, config_.extrapolation_mode, table_.get());
    t->anchor_extrapolation_ms += sw.lap_ms();
  }

  /// Recomputes only the pixels that depend on anchors whose color moved.
  void refresh_far(StageTimings* t, const std::vector<Eigen::Vector3d>& before) {
    detail::Stopwatch sw;
    std::vector<std::uint8_t> changed(anchors_.size());
    for (std::size_t j = 0; j < changed.size(); ++j) changed[j] = anchors_.colors[j] != before[j];
    extrapolate_update(far_map_, anchors_, config_.extrapolation_w, config_.extrapolation_mode, *table_, changed);
    t->anchor_extrapolation_ms += sw.lap_ms();
  }

  /// One sample per cell of a far-capture-sized grid over the near frame.
  /// Pixels with usable depth contribute the direction from the
  /// reconstruction position to their point; the rest fall back to the
  /// unit-depth camera ray.
  std::vector<DirectionSample> near_samples(const ColorImage& color, const DepthImage& depth, const Intrinsics& k,
                                            const Pose& pose) const {
    const Resolution grid = config_.far_capture_res;
    std::vector<DirectionSample> out;
    out.reserve(grid.pixel_count());
    for (int gy = 0; gy < grid.height; ++gy) {
      const int y = std::min(color.height - 1, static_cast<int>((gy + 0.5) * color.height / grid.height));
      for (int gx = 0; gx < grid.width; ++gx) {
        const int x = std::min(color.width - 1, static_cast<int>((gx + 0.5) * color.width / grid.width));
        const std::size_t i = static_cast<std::size_t>(y) * color.width + x;
        const float d = depth.depth[i];
        Vec3 dir;
        if (depth.confidence[i] >= config_.min_confidence && d > 0.0f && std::isfinite(d)) {
          const Vec3 offset = unproject(x + 0.5, y + 0.5, range_to_axis_depth(x + 0.5, y + 0.5, d, k), k, pose) - rec_pos_;
          if (offset.norm() == 0.0) continue;
          dir = offset.normalized();
        } else {
          dir = (unproject(x + 0.5, y + 0.5, 1.0, k, pose) - pose.translation()).normalized();
        }
        out.push_back({dir, color.pixels[i]});
      }
    }
    return out;
  }

  void finish(std::int64_t timestamp_ms, StageTimings t) {
    t.data_decode_ms = last_.data_decode_ms;
    last_ = t;
    t.data_decode_ms = 0.0;
    total_ += t;
    last_capture_ms_ = timestamp_ms;
    ++sequence_;
  }

  std::uint64_t id_;
  Vec3 rec_pos_;
  SessionConfig config_;
  Intrinsics intrinsics_;
  Resolution native_res_;
  Rgb ambient_ = Rgb::Constant(0.5f);
  DensePointCloudBuffer buffer_;
  UnitSphereAnchorSet anchors_;
  std::shared_ptr<const ExtrapolationTable> table_;
  EnvMapLayer near_map_;
  EnvMapLayer far_map_;
  StageTimings last_;
  StageTimings total_;
  std::optional<std::int64_t> last_capture_ms_;
  std::uint64_t sequence_ = 0;
};

}  // namespace litfield
