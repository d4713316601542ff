#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "litfield/error.hpp"
#include "litfield/geometry.hpp"
#include "litfield/image.hpp"
#include "litfield/session.hpp"

// Analytic cuboid scenes for testing and evaluation. World is Y-up with the
// floor at room.min.y. Rendered depth is the Euclidean distance along each
// pixel ray (not depth along the viewing axis).

namespace litfield {

enum class Face : int { kXMin = 0, kXMax = 1, kFloor = 2, kCeiling = 3, kZMin = 4, kZMax = 5 };

inline constexpr std::array<const char*, 6> kFaceNames{"xmin", "xmax", "floor", "ceiling", "zmin", "zmax"};

/// Solid color, or a two-color checker when `cell` > 0.
struct FaceAppearance {
  Rgb a = Rgb::Constant(0.5f);
  Rgb b = Rgb::Constant(0.5f);
  double cell = 0.0;

  static FaceAppearance solid(const Rgb& c) { return {c, c, 0.0}; }
  static FaceAppearance checker(const Rgb& a, const Rgb& b, double cell) { return {a, b, cell}; }

  /// Color at in-plane coordinates (s, t), measured from the room's min corner.
  Rgb at(double s, double t) const {
    if (cell <= 0.0) return a;
    const auto i = static_cast<long long>(std::floor(s / cell)) + static_cast<long long>(std::floor(t / cell));
    return (i & 1) ? b : a;
  }
};

/// Opaque axis-aligned box inside the room, one color per face.
struct SceneBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();
  std::array<Rgb, 6> colors{};
};

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  Rgb color = Rgb::Zero();
};

class SyntheticScene {
 public:
  Vec3 room_min{-2.0, 0.0, -2.0};
  Vec3 room_max{2.0, 2.5, 2.0};
  std::array<FaceAppearance, 6> faces{};
  std::vector<SceneBox> boxes;

  void validate() const {
    if (!(room_min.array() < room_max.array()).all())
      throw Error(ErrorCode::kScene, "room min corner must be below max corner on every axis");
    for (const auto& f : faces)
      if (f.cell < 0.0 || !std::isfinite(f.cell)) throw Error(ErrorCode::kScene, "checker cell must be positive");
    for (const auto& b : boxes)
      if (!(b.min.array() < b.max.array()).all()) throw Error(ErrorCode::kScene, "box min corner must be below max");
  }

  /// Strictly inside the room and outside every box.
  bool contains(const Vec3& p) const {
    if (!((p.array() > room_min.array()).all() && (p.array() < room_max.array()).all())) return false;
    for (const auto& b : boxes)
      if ((p.array() >= b.min.array()).all() && (p.array() <= b.max.array()).all()) return false;
    return true;
  }

  /// Nearest surface along a unit ray that starts inside the room.
  RayHit trace(const Vec3& o, const Vec3& d) const {
    RayHit hit;
    // Room interior: the exit plane on each axis.
    for (int axis = 0; axis < 3; ++axis) {
      if (d[axis] == 0.0) continue;
      const bool positive = d[axis] > 0.0;
      const double plane = positive ? room_max[axis] : room_min[axis];
      const double t = (plane - o[axis]) / d[axis];
      if (t > 0.0 && t < hit.t) {
        hit.t = t;
        const int face = 2 * axis + (positive ? 1 : 0);
        const Vec3 p = o + t * d - room_min;
        const int s_axis = axis == 0 ? 2 : 0;
        const int t_axis = axis == 1 ? 2 : 1;
        hit.color = faces[static_cast<std::size_t>(face)].at(p[s_axis], p[t_axis]);
      }
    }
    for (const auto& b : boxes) {
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int near_face = -1;
      bool miss = false;
      for (int axis = 0; axis < 3 && !miss; ++axis) {
        if (d[axis] == 0.0) {
          if (o[axis] < b.min[axis] || o[axis] > b.max[axis]) miss = true;
          continue;
        }
        double t0 = (b.min[axis] - o[axis]) / d[axis];
        double t1 = (b.max[axis] - o[axis]) / d[axis];
        // Entering through min plane when travelling in +axis.
        int face = 2 * axis;
        if (t0 > t1) {
          std::swap(t0, t1);
          face = 2 * axis + 1;
        }
        if (t0 > t_near) {
          t_near = t0;
          near_face = face;
        }
        t_far = std::min(t_far, t1);
      }
      if (miss || t_near > t_far || t_near <= 0.0 || near_face < 0) continue;
      if (t_near < hit.t) {
        hit.t = t_near;
        hit.color = b.colors[static_cast<std::size_t>(near_face)];
      }
    }
    return hit;
  }

  /// Six distinct solid faces.
  static SyntheticScene six_color_room(const Vec3& min = Vec3(-1.5, 0.0, -1.5), const Vec3& max = Vec3(1.5, 2.4, 1.5)) {
    SyntheticScene s;
    s.room_min = min;
    s.room_max = max;
    s.faces = {FaceAppearance::solid({0.85f, 0.20f, 0.20f}), FaceAppearance::solid({0.20f, 0.75f, 0.25f}),
               FaceAppearance::solid({0.55f, 0.45f, 0.30f}), FaceAppearance::solid({0.95f, 0.95f, 0.90f}),
               FaceAppearance::solid({0.20f, 0.30f, 0.85f}), FaceAppearance::solid({0.90f, 0.80f, 0.15f})};
    s.validate();
    return s;
  }

  /// Bright ceiling and +Z wall, dark everywhere else.
  static SyntheticScene two_tone_room(const Vec3& min = Vec3(-2.0, 0.0, -2.0), const Vec3& max = Vec3(2.0, 2.6, 2.0)) {
    SyntheticScene s;
    s.room_min = min;
    s.room_max = max;
    const auto dark = FaceAppearance::solid({0.12f, 0.10f, 0.10f});
    const auto bright = FaceAppearance::solid({0.95f, 0.90f, 0.70f});
    s.faces = {dark, dark, dark, bright, dark, bright};
    s.validate();
    return s;
  }

  /// Six-color room with a checkered floor and one box, for coverage studies.
  static SyntheticScene furnished_room() {
    SyntheticScene s = six_color_room();
    s.faces[static_cast<std::size_t>(Face::kFloor)] =
        FaceAppearance::checker({0.80f, 0.78f, 0.72f}, {0.25f, 0.22f, 0.20f}, 0.2);
    SceneBox box;
    box.min = Vec3(-0.9, 0.0, -0.9);
    box.max = Vec3(-0.5, 0.45, -0.5);
    box.colors = {Rgb(0.6f, 0.1f, 0.6f), Rgb(0.6f, 0.1f, 0.6f), Rgb(0.3f, 0.3f, 0.3f),
                  Rgb(0.1f, 0.6f, 0.6f), Rgb(0.6f, 0.6f, 0.1f), Rgb(0.6f, 0.6f, 0.1f)};
    s.boxes.push_back(box);
    s.validate();
    return s;
  }
};

inline SyntheticScene builtin_scene(const std::string& name) {
  if (name == "six-color") return SyntheticScene::six_color_room();
  if (name == "two-tone") return SyntheticScene::two_tone_room();
  if (name == "furnished") return SyntheticScene::furnished_room();
  throw Error(ErrorCode::kScene, "unknown built-in scene '" + name + "'");
}

/// Text scene description, one directive per line, '#' starts a comment:
///
///   room <minx> <miny> <minz> <maxx> <maxy> <maxz>
///   face <xmin|xmax|floor|ceiling|zmin|zmax> solid <r> <g> <b>
///   face <name> checker <r> <g> <b> <r> <g> <b> <cell>
///   box <minx> <miny> <minz> <maxx> <maxy> <maxz> <r> <g> <b>
inline SyntheticScene parse_scene(std::istream& in) {
  SyntheticScene s;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& m) { throw Error(ErrorCode::kScene, "line " + std::to_string(line_no) + ": " + m); };
  auto read_vec = [&](std::istringstream& ls) {
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) fail("expected three numbers");
    return v;
  };
  auto read_rgb = [&](std::istringstream& ls) { return read_vec(ls).cast<float>().eval(); };

  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "room") {
      s.room_min = read_vec(ls);
      s.room_max = read_vec(ls);
    } else if (word == "face") {
      std::string name;
      std::string kind;
      ls >> name >> kind;
      std::size_t idx = kFaceNames.size();
      for (std::size_t i = 0; i < kFaceNames.size(); ++i)
        if (name == kFaceNames[i]) idx = i;
      if (idx == kFaceNames.size()) fail("unknown face '" + name + "'");
      if (kind == "solid") {
        s.faces[idx] = FaceAppearance::solid(read_rgb(ls));
      } else if (kind == "checker") {
        const Rgb a = read_rgb(ls);
        const Rgb b = read_rgb(ls);
        double cell = 0.0;
        if (!(ls >> cell) || !(cell > 0.0)) fail("checker cell must be a positive number");
        s.faces[idx] = FaceAppearance::checker(a, b, cell);
      } else {
        fail("face appearance must be 'solid' or 'checker'");
      }
    } else if (word == "box") {
      SceneBox b;
      b.min = read_vec(ls);
      b.max = read_vec(ls);
      const Rgb c = read_rgb(ls);
      b.colors.fill(c);
      s.boxes.push_back(b);
    } else {
      fail("unknown directive '" + word + "'");
    }
    std::string extra;
    if (ls >> extra) fail("unexpected trailing token '" + extra + "'");
  }
  s.validate();
  return s;
}

inline SyntheticScene load_scene(const std::string& path_or_name) {
  std::ifstream in(path_or_name);
  if (!in) return builtin_scene(path_or_name);
  return parse_scene(in);
}

/// Ray-cast color and exact ray-distance depth; confidence is high everywhere.
inline CameraFrame render_rgbd(const SyntheticScene& scene, const Pose& pose, const Intrinsics& k,
                               std::uint32_t view_id = 0, std::int64_t timestamp_ms = 0) {
  k.validate();
  if (!scene.contains(pose.translation())) throw Error(ErrorCode::kScene, "camera is outside the room");
  CameraFrame frame;
  frame.view_id = view_id;
  frame.timestamp_ms = timestamp_ms;
  frame.intrinsics = k;
  frame.pose = pose;
  frame.color = ColorImage(k.width, k.height);
  DepthImage depth(k.width, k.height, 0.0f, static_cast<std::uint8_t>(Confidence::kHigh));
  const Mat3& r = pose.rotation();
  for (int y = 0; y < k.height; ++y) {
    const double cy = -(y + 0.5 - k.cy) / k.fy;
    for (int x = 0; x < k.width; ++x) {
      const Vec3 dir = (r * Vec3((x + 0.5 - k.cx) / k.fx, cy, -1.0)).normalized();
      const RayHit hit = scene.trace(pose.translation(), dir);
      const std::size_t i = static_cast<std::size_t>(y) * k.width + x;
      frame.color.pixels[i] = hit.color;
      depth.depth[i] = static_cast<float>(hit.t);
    }
  }
  frame.depth = std::move(depth);
  return frame;
}

/// Analytic map: every pixel shaded along its center direction.
inline EnvironmentMap ground_truth_envmap(const SyntheticScene& scene, const Vec3& position, Resolution res) {
  check_equirect_size(res.width, res.height);
  if (!scene.contains(position)) throw Error(ErrorCode::kScene, "position is outside the room");
  EnvironmentMap map(res.width, res.height);
  for (int y = 0; y < res.height; ++y)
    for (int x = 0; x < res.width; ++x)
      map.at(x, y) = scene.trace(position, equirect_to_dir(x, y, res.width, res.height)).color;
  return map;
}

struct TrajectoryPoint {
  Pose pose;
  std::int64_t timestamp_ms = 0;
};

using Trajectory = std::vector<TrajectoryPoint>;

inline constexpr double kCameraHeightRatio = 0.8;
inline constexpr double kStepLengthRatio = 0.3;

/// Evenly spaced cameras on a circle around rec_pos at 0.8 x user height
/// above the floor (y = 0), radius steps x 0.3 x user height, each looking
/// at rec_pos.
inline Trajectory orbit_trajectory(const Vec3& rec_pos, double user_height_cm, double steps, int n_positions = 8,
                                   std::int64_t start_ms = 0, std::int64_t interval_ms = 500) {
  if (!(user_height_cm > 0.0) || !(steps > 0.0) || n_positions < 1)
    throw Error(ErrorCode::kInvalidArgument, "orbit needs positive height, step count and position count");
  const double h = user_height_cm / 100.0;
  const double height = kCameraHeightRatio * h;
  const double radius = steps * kStepLengthRatio * h;
  Trajectory out;
  for (int i = 0; i < n_positions; ++i) {
    const double a = kTwoPi * i / n_positions;
    const Vec3 eye(rec_pos.x() + radius * std::sin(a), height, rec_pos.z() + radius * std::cos(a));
    out.push_back({Pose::look_at(eye, rec_pos), start_ms + i * interval_ms});
  }
  return out;
}

}  // namespace litfield
