#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "litfield/error.hpp"
#include "litfield/geometry.hpp"
#include "litfield/image.hpp"

namespace litfield {

struct PointRecord {
  Eigen::Vector3f position;
  Rgb color;
  std::uint32_t view_id;
};

/// Dense world-space points for every pixel whose confidence reaches
/// `min_confidence` and whose depth is positive. Depth is the distance along
/// each pixel's ray, not along the viewing axis. Row-major order.
inline std::vector<PointRecord> generate_dense_cloud(const ColorImage& color, const DepthImage& depth,
                                                     const Intrinsics& k, const Pose& pose,
                                                     std::uint8_t min_confidence, std::uint32_t view_id = 0) {
  if (color.resolution() != depth.resolution())
    throw Error(ErrorCode::kDimensionMismatch, "color and depth images differ in size");
  if (k.resolution() != color.resolution())
    throw Error(ErrorCode::kDimensionMismatch, "intrinsics do not describe this image size");
  if (min_confidence > 2) throw Error(ErrorCode::kInvalidArgument, "confidence levels are 0, 1 or 2");

  const Mat3& r = pose.rotation();
  const Vec3& t = pose.translation();
  std::vector<PointRecord> out;
  out.reserve(color.pixels.size());
  for (int y = 0; y < color.height; ++y) {
    const double cam_y = -(y + 0.5 - k.cy) / k.fy;
    for (int x = 0; x < color.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * color.width + x;
      const float d = depth.depth[i];
      if (depth.confidence[i] < min_confidence || !(d > 0.0f) || !std::isfinite(d)) continue;
      const double cam_x = (x + 0.5 - k.cx) / k.fx;
      const double z = d / std::sqrt(cam_x * cam_x + cam_y * cam_y + 1.0);
      const Vec3 cam(z * cam_x, z * cam_y, -z);
      out.push_back({(r * cam + t).cast<float>(), color.pixels[i], view_id});
    }
  }
  return out;
}

/// Fixed-capacity multi-view point store. All slots live in one contiguous
/// allocation of num_views x slot_capacity records.
class DensePointCloudBuffer {
 public:
  DensePointCloudBuffer(int num_views, std::size_t slot_capacity)
      : slots_(static_cast<std::size_t>(num_views)), slot_capacity_(slot_capacity) {
    if (num_views < 1 || slot_capacity == 0)
      throw Error(ErrorCode::kConfiguration, "point buffer needs at least one view slot with nonzero capacity");
    storage_ = std::make_unique_for_overwrite<PointRecord[]>(capacity());
  }

  DensePointCloudBuffer(const DensePointCloudBuffer& other)
      : slots_(other.slots_), slot_capacity_(other.slot_capacity_), next_sequence_(other.next_sequence_) {
    storage_ = std::make_unique_for_overwrite<PointRecord[]>(capacity());
    for (std::size_t s = 0; s < slots_.size(); ++s)
      std::copy_n(other.storage_.get() + s * slot_capacity_, slots_[s].count, storage_.get() + s * slot_capacity_);
  }
  DensePointCloudBuffer(DensePointCloudBuffer&&) noexcept = default;
  DensePointCloudBuffer& operator=(DensePointCloudBuffer&&) noexcept = default;

  int num_views() const { return static_cast<int>(slots_.size()); }
  std::size_t slot_capacity() const { return slot_capacity_; }
  std::size_t capacity() const { return slots_.size() * slot_capacity_; }

  /// Overwrites the slot already holding `view_id`, otherwise fills a free slot,
  /// otherwise evicts the least recently inserted view. Returns the slot index.
  std::size_t insert_view(std::uint32_t view_id, std::span<const PointRecord> points) {
    if (points.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot insert an empty view");
    if (points.size() > slot_capacity_) throw Error(ErrorCode::kInvalidArgument, "view exceeds slot capacity");
    std::size_t target = slots_.size();
    for (std::size_t s = 0; s < slots_.size(); ++s)
      if (slots_[s].used && slots_[s].view_id == view_id) target = s;
    if (target == slots_.size()) {
      for (std::size_t s = 0; s < slots_.size() && target == slots_.size(); ++s)
        if (!slots_[s].used) target = s;
    }
    if (target == slots_.size()) {
      target = 0;
      for (std::size_t s = 1; s < slots_.size(); ++s)
        if (slots_[s].sequence < slots_[target].sequence) target = s;
    }
    PointRecord* dst = storage_.get() + target * slot_capacity_;
    for (std::size_t i = 0; i < points.size(); ++i) {
      dst[i] = points[i];
      dst[i].view_id = view_id;
    }
    slots_[target] = Slot{true, view_id, next_sequence_++, points.size()};
    return target;
  }

  bool contains(std::uint32_t view_id) const { return find(view_id) != nullptr; }

  /// View ids ordered from oldest to newest insertion.
  std::vector<std::uint32_t> views_by_age() const {
    std::vector<const Slot*> used;
    for (const Slot& s : slots_)
      if (s.used) used.push_back(&s);
    std::sort(used.begin(), used.end(), [](const Slot* a, const Slot* b) { return a->sequence < b->sequence; });
    std::vector<std::uint32_t> ids;
    for (const Slot* s : used) ids.push_back(s->view_id);
    return ids;
  }

  std::size_t occupied() const {
    return static_cast<std::size_t>(std::count_if(slots_.begin(), slots_.end(), [](const Slot& s) { return s.used; }));
  }

  std::uint64_t sequence_of(std::uint32_t view_id) const {
    const Slot* s = find(view_id);
    if (!s) throw Error(ErrorCode::kInvalidArgument, "view not buffered");
    return s->sequence;
  }

  std::span<const PointRecord> view_points(std::uint32_t view_id) const {
    const Slot* s = find(view_id);
    if (!s) return {};
    return {storage_.get() + static_cast<std::size_t>(s - slots_.data()) * slot_capacity_, s->count};
  }

  std::span<PointRecord> mutable_view_points(std::uint32_t view_id) {
    const Slot* s = find(view_id);
    if (!s) return {};
    return {storage_.get() + static_cast<std::size_t>(s - slots_.data()) * slot_capacity_, s->count};
  }

  std::size_t point_count() const {
    std::size_t n = 0;
    for (const Slot& s : slots_)
      if (s.used) n += s.count;
    return n;
  }

  /// Copies every buffered point, oldest view first.
  std::vector<PointRecord> gather() const {
    std::vector<PointRecord> out;
    out.reserve(point_count());
    for (std::uint32_t id : views_by_age()) {
      const auto pts = view_points(id);
      out.insert(out.end(), pts.begin(), pts.end());
    }
    return out;
  }

 private:
  struct Slot {
    bool used = false;
    std::uint32_t view_id = 0;
    std::uint64_t sequence = 0;
    std::size_t count = 0;
  };

  const Slot* find(std::uint32_t view_id) const {
    for (const Slot& s : slots_)
      if (s.used && s.view_id == view_id) return &s;
    return nullptr;
  }

  std::vector<Slot> slots_;
  std::size_t slot_capacity_;
  std::uint64_t next_sequence_ = 1;
  std::unique_ptr<PointRecord[]> storage_;
};

/// Axis-aligned cube centered on the reconstruction position.
struct NearFieldBoundary {
  Vec3 center = Vec3::Zero();
  double side = 2.0;

  bool contains(const Eigen::Vector3f& p) const {
    const double h = 0.5 * side;
    return std::abs(p.x() - center.x()) <= h && std::abs(p.y() - center.y()) <= h &&
           std::abs(p.z() - center.z()) <= h;
  }
};

inline std::vector<PointRecord> filter_boundary(std::span<const PointRecord> points, const NearFieldBoundary& b) {
  if (!(b.side > 0.0)) throw Error(ErrorCode::kInvalidArgument, "boundary side must be positive");
  std::vector<PointRecord> out;
  out.reserve(points.size());
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [&](const PointRecord& p) { return b.contains(p.position); });
  return out;
}

/// One equirectangular projection level; invalid pixels carry +inf distance.
struct EnvMapLayer {
  int width = 0;
  int height = 0;
  std::vector<Rgb> color;
  std::vector<float> distance;
  std::vector<std::uint8_t> valid;

  EnvMapLayer() = default;
  EnvMapLayer(int w, int h)
      : width(w),
        height(h),
        color(static_cast<std::size_t>(w) * h, Rgb::Zero()),
        distance(color.size(), std::numeric_limits<float>::infinity()),
        valid(color.size(), 0) {
    check_equirect_size(w, h);
  }

  Resolution resolution() const { return {width, height}; }
  std::size_t pixel_count() const { return color.size(); }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }
};

struct MultiResProjection {
  std::vector<EnvMapLayer> layers;
  std::size_t skipped_points = 0;  // points coincident with the reconstruction position
};

inline void check_levels(std::span<const Resolution> levels) {
  if (levels.empty()) throw Error(ErrorCode::kInvalidArgument, "at least one projection level is required");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    check_equirect_size(levels[i].width, levels[i].height);
    if (i > 0 && levels[i].width >= levels[i - 1].width)
      throw Error(ErrorCode::kInvalidArgument, "projection levels must strictly decrease in resolution");
  }
}

/// Projects the cloud around `rec_pos` into every level; per pixel the point
/// closest to `rec_pos` wins, earlier points win exact ties.
inline MultiResProjection project_multires(std::span<const PointRecord> points, const Vec3& rec_pos,
                                           std::span<const Resolution> levels) {
  check_levels(levels);
  MultiResProjection out;
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  if (points.size() >= kNone) throw Error(ErrorCode::kInvalidArgument, "too many points for one projection");

  struct Level {
    int width;
    int height;
    float fw;  // width / 2pi
    float fh;  // height / pi
    std::vector<float> distance;
    std::vector<std::uint32_t> winner;
  };
  std::vector<Level> state;
  for (const Resolution& res : levels)
    state.push_back({res.width, res.height, static_cast<float>(res.width / kTwoPi), static_cast<float>(res.height / kPi),
                     std::vector<float>(res.pixel_count(), std::numeric_limits<float>::infinity()),
                     std::vector<std::uint32_t>(res.pixel_count(), kNone)});

  // Spherical coordinates are computed once per point and shared by all levels.
  const Eigen::Vector3f center = rec_pos.cast<float>();
  const float kPiF = static_cast<float>(kPi);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3f d = points[i].position - center;
    const float dist = d.norm();
    if (!(dist > 0.0f)) {
      ++out.skipped_points;
      continue;
    }
    const float horizontal = std::sqrt(d.x() * d.x() + d.z() * d.z());
    const bool pole = horizontal == 0.0f;
    const float theta = pole ? 0.0f : fast_atan2(d.x(), -d.z()) + kPiF;  // [0, 2pi]
    const float phi = fast_atan2(horizontal, d.y());
    for (Level& l : state) {
      int px = pole ? 0 : static_cast<int>(theta * l.fw);
      if (px >= l.width) px -= l.width;
      const int py = std::min(static_cast<int>(phi * l.fh), l.height - 1);
      const std::size_t pix = static_cast<std::size_t>(py) * static_cast<std::size_t>(l.width) + static_cast<std::size_t>(px);
      if (dist < l.distance[pix]) {
        l.distance[pix] = dist;
        l.winner[pix] = static_cast<std::uint32_t>(i);
      }
    }
  }

  out.layers.reserve(levels.size());
  for (Level& l : state) {
    EnvMapLayer layer(l.width, l.height);
    layer.distance = std::move(l.distance);
    for (std::size_t pix = 0; pix < l.winner.size(); ++pix) {
      if (l.winner[pix] == kNone) continue;
      layer.color[pix] = points[l.winner[pix]].color;
      layer.valid[pix] = 1;
    }
    out.layers.push_back(std::move(layer));
  }
  return out;
}

/// Nearest-pixel upscaling of every layer to `target`, then a per-pixel
/// minimum-distance pick. Exact ties go to the higher-resolution layer.
inline EnvMapLayer merge_multires(std::span<const EnvMapLayer> layers, Resolution target) {
  if (layers.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to merge");
  std::vector<const EnvMapLayer*> order;
  for (const EnvMapLayer& l : layers) order.push_back(&l);
  std::stable_sort(order.begin(), order.end(),
                   [](const EnvMapLayer* a, const EnvMapLayer* b) { return a->width > b->width; });
  if (order.front()->resolution() != target)
    throw Error(ErrorCode::kInvalidArgument, "merge target must be the largest layer resolution");

  EnvMapLayer out(target.width, target.height);
  std::vector<int> col_map(static_cast<std::size_t>(target.width));
  for (const EnvMapLayer* l : order) {
    for (int x = 0; x < target.width; ++x)
      col_map[static_cast<std::size_t>(x)] = static_cast<int>(static_cast<long>(x) * l->width / target.width);
    for (int y = 0; y < target.height; ++y) {
      const int sy = static_cast<int>(static_cast<long>(y) * l->height / target.height);
      const std::size_t src_row = static_cast<std::size_t>(sy) * l->width;
      const std::size_t dst_row = static_cast<std::size_t>(y) * target.width;
      for (int x = 0; x < target.width; ++x) {
        const std::size_t s = src_row + static_cast<std::size_t>(col_map[static_cast<std::size_t>(x)]);
        if (!l->valid[s]) continue;
        const std::size_t d = dst_row + static_cast<std::size_t>(x);
        if (l->distance[s] < out.distance[d]) {
          out.distance[d] = l->distance[s];
          out.color[d] = l->color[s];
          out.valid[d] = 1;
        }
      }
    }
  }
  return out;
}

/// Nearest-pixel resampling of a layer (used when the merged resolution differs
/// from the environment-map resolution).
inline EnvMapLayer resample_nearest(const EnvMapLayer& src, Resolution dst) {
  if (dst == src.resolution()) return src;
  EnvMapLayer out(dst.width, dst.height);
  for (int y = 0; y < dst.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / dst.height));
    for (int x = 0; x < dst.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / dst.width));
      const std::size_t s = static_cast<std::size_t>(sy) * src.width + sx;
      const std::size_t d = static_cast<std::size_t>(y) * dst.width + x;
      out.color[d] = src.color[s];
      out.distance[d] = src.distance[s];
      out.valid[d] = src.valid[s];
    }
  }
  return out;
}

}  // namespace litfield
