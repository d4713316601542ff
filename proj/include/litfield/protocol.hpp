#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "litfield/error.hpp"
#include "litfield/farfield.hpp"
#include "litfield/geometry.hpp"
#include "litfield/image.hpp"
#include "litfield/session.hpp"

// Wire format. Every multi-byte field is little-endian. Each packet starts
// with a one-byte kind:
//
//   0x01 SessionInit    session_id u32 | rec_pos f32x3 | preset u8 | envmap w,h u16x2 |
//                       fx,fy,cx,cy f32x4 | native w,h u16x2 | ambient rgb f32x3
//   0x02 NearKeyframe   session_id u32 | view_id u32 | pose f32x16 (column-major 4x4) |
//                       fx,fy,cx,cy f32x4 | w,h u16x2 | Y,Cb,Cr planes | depth f32 x w*h |
//                       confidence u8 x w*h
//   0x03 FarKeyframe    session_id u32 | pose f32x16 | fx,fy,cx,cy f32x4 | w,h u16x2 (32,24) |
//                       Y,Cb,Cr planes
//   0x10 EnvMapResponse session_id u32 | w,h u16x2 | rgb u8 x 3*w*h
//   0x11 EnvMapUpdate   same body as 0x10; unsolicited refresh after background registration
//   0xFF ErrorReport    session_id u32 | length u16 | utf-8 message

namespace litfield::protocol {

enum class Kind : std::uint8_t {
  kSessionInit = 0x01,
  kNearKeyframe = 0x02,
  kFarKeyframe = 0x03,
  kEnvMapResponse = 0x10,
  kEnvMapUpdate = 0x11,
  kError = 0xFF,
};

using Mat4f = std::array<float, 16>;  // column-major
using Vec3f = std::array<float, 3>;

struct IntrinsicsF {
  float fx = 0.0f;
  float fy = 0.0f;
  float cx = 0.0f;
  float cy = 0.0f;
  friend bool operator==(const IntrinsicsF&, const IntrinsicsF&) = default;
};

/// Planar Y, Cb, Cr with 2x2 chroma subsampling.
struct YCbCr420Image {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> y;
  std::vector<std::uint8_t> cb;
  std::vector<std::uint8_t> cr;

  std::size_t byte_size() const { return y.size() + cb.size() + cr.size(); }
  friend bool operator==(const YCbCr420Image&, const YCbCr420Image&) = default;
};

struct SessionInit {
  std::uint32_t session_id = 0;
  Vec3f rec_pos{};
  std::uint8_t preset = 0;
  std::uint16_t envmap_width = 0;
  std::uint16_t envmap_height = 0;
  IntrinsicsF intrinsics;
  std::uint16_t native_width = 0;
  std::uint16_t native_height = 0;
  Vec3f ambient{};
  friend bool operator==(const SessionInit&, const SessionInit&) = default;
};

struct NearKeyframe {
  std::uint32_t session_id = 0;
  std::uint32_t view_id = 0;
  Mat4f pose{};
  IntrinsicsF intrinsics;
  YCbCr420Image color;
  std::vector<float> depth;
  std::vector<std::uint8_t> confidence;
  friend bool operator==(const NearKeyframe&, const NearKeyframe&) = default;
};

struct FarKeyframe {
  std::uint32_t session_id = 0;
  Mat4f pose{};
  IntrinsicsF intrinsics;
  YCbCr420Image color;
  friend bool operator==(const FarKeyframe&, const FarKeyframe&) = default;
};

struct EnvMapResponse {
  std::uint32_t session_id = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> rgb;
  friend bool operator==(const EnvMapResponse&, const EnvMapResponse&) = default;
};

struct EnvMapUpdate {
  std::uint32_t session_id = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> rgb;
  friend bool operator==(const EnvMapUpdate&, const EnvMapUpdate&) = default;
};

struct ErrorReport {
  std::uint32_t session_id = 0;
  std::string message;
  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

using Packet = std::variant<SessionInit, NearKeyframe, FarKeyframe, EnvMapResponse, EnvMapUpdate, ErrorReport>;

inline constexpr std::size_t kFarKeyframeSize = 1 + 4 + 64 + 16 + 4 + 32 * 24 * 3 / 2;
inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024u * 1024u;

inline Kind kind_of(const Packet& p) {
  return std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SessionInit>) return Kind::kSessionInit;
        else if constexpr (std::is_same_v<T, NearKeyframe>) return Kind::kNearKeyframe;
        else if constexpr (std::is_same_v<T, FarKeyframe>) return Kind::kFarKeyframe;
        else if constexpr (std::is_same_v<T, EnvMapResponse>) return Kind::kEnvMapResponse;
        else if constexpr (std::is_same_v<T, EnvMapUpdate>) return Kind::kEnvMapUpdate;
        else return Kind::kError;
      },
      p);
}

inline std::uint32_t session_of(const Packet& p) {
  return std::visit([](const auto& v) { return v.session_id; }, p);
}

namespace detail {

class Writer {
 public:
  explicit Writer(std::size_t reserve = 0) { bytes_.reserve(reserve); }

  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) bytes_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  template <std::size_t N>
  void f32s(const std::array<float, N>& a) {
    for (float v : a) f32(v);
  }
  void bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) throw TruncatedError(pos_, n);
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  template <std::size_t N>
  std::array<float, N> f32s() {
    need(4 * N);
    std::array<float, N> a{};
    for (auto& v : a) v = f32();
    return a;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline void write_intrinsics(Writer& w, const IntrinsicsF& k) {
  w.f32(k.fx);
  w.f32(k.fy);
  w.f32(k.cx);
  w.f32(k.cy);
}

inline IntrinsicsF read_intrinsics(Reader& r) {
  r.need(16);
  IntrinsicsF k;
  k.fx = r.f32();
  k.fy = r.f32();
  k.cx = r.f32();
  k.cy = r.f32();
  return k;
}

inline void check_ycbcr(const YCbCr420Image& img) {
  if (img.width == 0 || img.height == 0 || img.width % 2 || img.height % 2)
    throw Error(ErrorCode::kMalformed, "YCbCr 4:2:0 images need positive even dimensions");
  const std::size_t luma = static_cast<std::size_t>(img.width) * img.height;
  if (img.y.size() != luma || img.cb.size() != luma / 4 || img.cr.size() != luma / 4)
    throw Error(ErrorCode::kMalformed, "YCbCr plane sizes do not match dimensions");
}

inline void write_planes(Writer& w, const YCbCr420Image& img) {
  w.bytes(img.y);
  w.bytes(img.cb);
  w.bytes(img.cr);
}

inline YCbCr420Image read_planes(Reader& r, std::uint16_t width, std::uint16_t height) {
  YCbCr420Image img;
  img.width = width;
  img.height = height;
  if (width == 0 || height == 0 || width % 2 || height % 2)
    throw Error(ErrorCode::kMalformed, "YCbCr 4:2:0 images need positive even dimensions");
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  r.need(luma + luma / 2);
  img.y = r.bytes(luma);
  img.cb = r.bytes(luma / 4);
  img.cr = r.bytes(luma / 4);
  return img;
}

inline void check_rgb_map(std::uint16_t w, std::uint16_t h, std::size_t bytes) {
  if (static_cast<std::size_t>(w) * h * 3 != bytes)
    throw Error(ErrorCode::kMalformed, "environment map payload does not match its dimensions");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_packet(const Packet& packet) {
  using detail::Writer;
  return std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        Writer w;
        if constexpr (std::is_same_v<T, SessionInit>) {
          w.u8(static_cast<std::uint8_t>(Kind::kSessionInit));
          w.u32(p.session_id);
          w.f32s(p.rec_pos);
          w.u8(p.preset);
          w.u16(p.envmap_width);
          w.u16(p.envmap_height);
          detail::write_intrinsics(w, p.intrinsics);
          w.u16(p.native_width);
          w.u16(p.native_height);
          w.f32s(p.ambient);
        } else if constexpr (std::is_same_v<T, NearKeyframe>) {
          detail::check_ycbcr(p.color);
          const std::size_t n = static_cast<std::size_t>(p.color.width) * p.color.height;
          if (p.depth.size() != n || p.confidence.size() != n)
            throw Error(ErrorCode::kMalformed, "depth and confidence must cover every pixel");
          w = Writer(1 + 4 + 4 + 64 + 16 + 4 + p.color.byte_size() + 5 * n);
          w.u8(static_cast<std::uint8_t>(Kind::kNearKeyframe));
          w.u32(p.session_id);
          w.u32(p.view_id);
          w.f32s(p.pose);
          detail::write_intrinsics(w, p.intrinsics);
          w.u16(p.color.width);
          w.u16(p.color.height);
          detail::write_planes(w, p.color);
          for (float d : p.depth) w.f32(d);
          w.bytes(p.confidence);
        } else if constexpr (std::is_same_v<T, FarKeyframe>) {
          detail::check_ycbcr(p.color);
          if (p.color.width != kFarCaptureResolution.width || p.color.height != kFarCaptureResolution.height)
            throw Error(ErrorCode::kMalformed, "far keyframes are 32x24");
          w.u8(static_cast<std::uint8_t>(Kind::kFarKeyframe));
          w.u32(p.session_id);
          w.f32s(p.pose);
          detail::write_intrinsics(w, p.intrinsics);
          w.u16(p.color.width);
          w.u16(p.color.height);
          detail::write_planes(w, p.color);
        } else if constexpr (std::is_same_v<T, EnvMapResponse> || std::is_same_v<T, EnvMapUpdate>) {
          detail::check_rgb_map(p.width, p.height, p.rgb.size());
          w = Writer(9 + p.rgb.size());
          w.u8(static_cast<std::uint8_t>(std::is_same_v<T, EnvMapResponse> ? Kind::kEnvMapResponse : Kind::kEnvMapUpdate));
          w.u32(p.session_id);
          w.u16(p.width);
          w.u16(p.height);
          w.bytes(p.rgb);
        } else {
          if (p.message.size() > 0xFFFF) throw Error(ErrorCode::kMalformed, "error message too long");
          w.u8(static_cast<std::uint8_t>(Kind::kError));
          w.u32(p.session_id);
          w.u16(static_cast<std::uint16_t>(p.message.size()));
          w.bytes({reinterpret_cast<const std::uint8_t*>(p.message.data()), p.message.size()});
        }
        return w.take();
      },
      packet);
}

/// Throws TruncatedError, or Error with kUnknownKind / kMalformed.
inline Packet decode_packet(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  const std::uint8_t kind = r.u8();
  Packet out;
  switch (static_cast<Kind>(kind)) {
    case Kind::kSessionInit: {
      SessionInit p;
      p.session_id = r.u32();
      p.rec_pos = r.f32s<3>();
      p.preset = r.u8();
      p.envmap_width = r.u16();
      p.envmap_height = r.u16();
      p.intrinsics = detail::read_intrinsics(r);
      p.native_width = r.u16();
      p.native_height = r.u16();
      p.ambient = r.f32s<3>();
      out = p;
      break;
    }
    case Kind::kNearKeyframe: {
      NearKeyframe p;
      p.session_id = r.u32();
      p.view_id = r.u32();
      p.pose = r.f32s<16>();
      p.intrinsics = detail::read_intrinsics(r);
      const std::uint16_t w = r.u16();
      const std::uint16_t h = r.u16();
      p.color = detail::read_planes(r, w, h);
      const std::size_t n = static_cast<std::size_t>(w) * h;
      r.need(5 * n);
      p.depth.resize(n);
      for (float& d : p.depth) d = r.f32();
      p.confidence = r.bytes(n);
      out = std::move(p);
      break;
    }
    case Kind::kFarKeyframe: {
      FarKeyframe p;
      p.session_id = r.u32();
      p.pose = r.f32s<16>();
      p.intrinsics = detail::read_intrinsics(r);
      const std::uint16_t w = r.u16();
      const std::uint16_t h = r.u16();
      if (w != kFarCaptureResolution.width || h != kFarCaptureResolution.height)
        throw Error(ErrorCode::kMalformed, "far keyframes are 32x24");
      p.color = detail::read_planes(r, w, h);
      out = std::move(p);
      break;
    }
    case Kind::kEnvMapResponse:
    case Kind::kEnvMapUpdate: {
      EnvMapResponse p;
      p.session_id = r.u32();
      p.width = r.u16();
      p.height = r.u16();
      p.rgb = r.bytes(static_cast<std::size_t>(p.width) * p.height * 3);
      if (static_cast<Kind>(kind) == Kind::kEnvMapResponse)
        out = std::move(p);
      else
        out = EnvMapUpdate{p.session_id, p.width, p.height, std::move(p.rgb)};
      break;
    }
    case Kind::kError: {
      ErrorReport p;
      p.session_id = r.u32();
      const std::uint16_t len = r.u16();
      const auto msg = r.bytes(len);
      p.message.assign(msg.begin(), msg.end());
      out = std::move(p);
      break;
    }
    default:
      throw Error(ErrorCode::kUnknownKind, "packet kind 0x" + [&] {
        const char* hex = "0123456789abcdef";
        return std::string{hex[kind >> 4], hex[kind & 15]};
      }());
  }
  if (r.remaining() != 0)
    throw Error(ErrorCode::kMalformed, std::to_string(r.remaining()) + " trailing byte(s) after packet");
  return out;
}

// ---------------------------------------------------------------------------
// Color conversion: full-range BT.601.

inline std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

inline YCbCr420Image rgb_to_ycbcr420(const ColorImage& img) {
  if (img.width % 2 || img.height % 2 || img.width > 0xFFFF || img.height > 0xFFFF)
    throw Error(ErrorCode::kDimensionMismatch, "YCbCr 4:2:0 needs even dimensions");
  YCbCr420Image out;
  out.width = static_cast<std::uint16_t>(img.width);
  out.height = static_cast<std::uint16_t>(img.height);
  out.y.resize(static_cast<std::size_t>(img.width) * img.height);
  out.cb.resize(out.y.size() / 4);
  out.cr.resize(out.y.size() / 4);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const Eigen::Vector3d c = clamp01(img.at(x, y)).cast<double>() * 255.0;
      out.y[static_cast<std::size_t>(y) * img.width + x] = to_byte(0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]);
    }
  const int cw = img.width / 2;
  for (int by = 0; by < img.height / 2; ++by)
    for (int bx = 0; bx < cw; ++bx) {
      double cb = 0.0;
      double cr = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const Eigen::Vector3d c = clamp01(img.at(2 * bx + dx, 2 * by + dy)).cast<double>() * 255.0;
          cb += 128.0 - 0.168736 * c[0] - 0.331264 * c[1] + 0.5 * c[2];
          cr += 128.0 + 0.5 * c[0] - 0.418688 * c[1] - 0.081312 * c[2];
        }
      out.cb[static_cast<std::size_t>(by) * cw + bx] = to_byte(cb / 4.0);
      out.cr[static_cast<std::size_t>(by) * cw + bx] = to_byte(cr / 4.0);
    }
  return out;
}

/// Inverse conversion; each channel is rounded to the nearest 8-bit level,
/// clamped to [0,255] and scaled to [0,1].
inline ColorImage ycbcr420_to_rgb(const YCbCr420Image& img) {
  if (img.width % 2 || img.height % 2 || img.width == 0 || img.height == 0)
    throw Error(ErrorCode::kDimensionMismatch, "YCbCr 4:2:0 needs positive even dimensions");
  detail::check_ycbcr(img);
  ColorImage out(img.width, img.height);
  const int cw = img.width / 2;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double luma = img.y[static_cast<std::size_t>(y) * img.width + x];
      const std::size_t ci = static_cast<std::size_t>(y / 2) * cw + x / 2;
      const double cb = img.cb[ci] - 128.0;
      const double cr = img.cr[ci] - 128.0;
      const double r = luma + 1.402 * cr;
      const double g = luma - 0.344136 * cb - 0.714136 * cr;
      const double b = luma + 1.772 * cb;
      out.at(x, y) = Rgb(to_byte(r), to_byte(g), to_byte(b)) / 255.0f;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Conversions between packets and library types.

inline Mat4f pose_to_wire(const Pose& pose) {
  Mat4f m{};
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) m[static_cast<std::size_t>(c * 4 + r)] = static_cast<float>(pose.rotation()(r, c));
  for (int r = 0; r < 3; ++r) m[static_cast<std::size_t>(12 + r)] = static_cast<float>(pose.translation()[r]);
  m[15] = 1.0f;
  return m;
}

inline Pose pose_from_wire(const Mat4f& m) {
  for (float v : m)
    if (!std::isfinite(v)) throw Error(ErrorCode::kMalformed, "pose has non-finite entries");
  if (m[3] != 0.0f || m[7] != 0.0f || m[11] != 0.0f || m[15] != 1.0f)
    throw Error(ErrorCode::kMalformed, "pose is not an affine rigid transform");
  Mat3 r;
  for (int c = 0; c < 3; ++c)
    for (int row = 0; row < 3; ++row) r(row, c) = m[static_cast<std::size_t>(c * 4 + row)];
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-4 || std::abs(r.determinant() - 1.0) > 1e-4)
    throw Error(ErrorCode::kMalformed, "pose rotation is not orthonormal");
  return Pose(nearest_rotation(r), Vec3(m[12], m[13], m[14]));
}

inline IntrinsicsF intrinsics_to_wire(const Intrinsics& k) {
  return {static_cast<float>(k.fx), static_cast<float>(k.fy), static_cast<float>(k.cx), static_cast<float>(k.cy)};
}

inline Intrinsics intrinsics_from_wire(const IntrinsicsF& k, int width, int height) {
  try {
    return Intrinsics(k.fx, k.fy, k.cx, k.cy, width, height);
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
}

inline NearKeyframe make_near_keyframe(std::uint32_t session_id, const CameraFrame& frame) {
  if (!frame.depth) throw Error(ErrorCode::kNearRequiresDepth, "near keyframes need depth");
  if (frame.depth->resolution() != frame.color.resolution())
    throw Error(ErrorCode::kDimensionMismatch, "color and depth differ in size");
  NearKeyframe p;
  p.session_id = session_id;
  p.view_id = frame.view_id;
  p.pose = pose_to_wire(frame.pose);
  p.intrinsics = intrinsics_to_wire(frame.intrinsics);
  p.color = rgb_to_ycbcr420(frame.color);
  p.depth = frame.depth->depth;
  p.confidence = frame.depth->confidence;
  return p;
}

/// Far keyframes carry a 32x24 box-filtered copy of the frame.
inline FarKeyframe make_far_keyframe(std::uint32_t session_id, const CameraFrame& frame) {
  FarKeyframe p;
  p.session_id = session_id;
  p.pose = pose_to_wire(frame.pose);
  p.intrinsics = intrinsics_to_wire(frame.intrinsics.scaled(kFarCaptureResolution));
  p.color = rgb_to_ycbcr420(resample_area(frame.color, kFarCaptureResolution));
  return p;
}

inline CameraFrame frame_from(const NearKeyframe& p) {
  CameraFrame f;
  f.view_id = p.view_id;
  f.pose = pose_from_wire(p.pose);
  f.intrinsics = intrinsics_from_wire(p.intrinsics, p.color.width, p.color.height);
  f.color = ycbcr420_to_rgb(p.color);
  DepthImage d(p.color.width, p.color.height);
  for (std::size_t i = 0; i < p.depth.size(); ++i) {
    if (!std::isfinite(p.depth[i]) || p.depth[i] < 0.0f) throw Error(ErrorCode::kMalformed, "depth must be finite and >= 0");
    if (p.confidence[i] > 2) throw Error(ErrorCode::kMalformed, "confidence must be 0, 1 or 2");
  }
  d.depth = p.depth;
  d.confidence = p.confidence;
  f.depth = std::move(d);
  return f;
}

inline CameraFrame frame_from(const FarKeyframe& p) {
  CameraFrame f;
  f.pose = pose_from_wire(p.pose);
  f.intrinsics = intrinsics_from_wire(p.intrinsics, p.color.width, p.color.height);
  f.color = ycbcr420_to_rgb(p.color);
  return f;
}

inline EnvMapResponse make_response(std::uint32_t session_id, const EnvironmentMap& map) {
  if (map.width > 0xFFFF || map.height > 0xFFFF) throw Error(ErrorCode::kMalformed, "map too large for the wire");
  return {session_id, static_cast<std::uint16_t>(map.width), static_cast<std::uint16_t>(map.height), map.to_rgb8()};
}

inline EnvironmentMap map_from(std::uint16_t width, std::uint16_t height, const std::vector<std::uint8_t>& rgb) {
  try {
    return EnvironmentMap::from_rgb8(width, height, rgb);
  } catch (const Error& e) {
    throw Error(ErrorCode::kProtocol, e.what());
  }
}

inline SessionInit make_session_init(std::uint32_t session_id, const Vec3& rec_pos, Preset preset, Resolution envmap,
                                     const Intrinsics& k, const Rgb& ambient) {
  SessionInit p;
  p.session_id = session_id;
  p.rec_pos = {static_cast<float>(rec_pos.x()), static_cast<float>(rec_pos.y()), static_cast<float>(rec_pos.z())};
  p.preset = static_cast<std::uint8_t>(preset);
  p.envmap_width = static_cast<std::uint16_t>(envmap.width);
  p.envmap_height = static_cast<std::uint16_t>(envmap.height);
  p.intrinsics = intrinsics_to_wire(k);
  p.native_width = static_cast<std::uint16_t>(k.width);
  p.native_height = static_cast<std::uint16_t>(k.height);
  p.ambient = {ambient.x(), ambient.y(), ambient.z()};
  return p;
}

/// Session settings requested by an init packet. Presets 0-2 accept an
/// envmap size of 0x0 (preset default) or exactly the preset's size; the
/// custom preset uses medium settings with the requested map size.
inline SessionConfig config_from(const SessionInit& p) {
  if (p.preset > static_cast<std::uint8_t>(Preset::kCustom))
    throw Error(ErrorCode::kConfiguration, "unknown preset " + std::to_string(p.preset));
  const auto preset = static_cast<Preset>(p.preset);
  SessionConfig cfg = SessionConfig::from_preset(preset == Preset::kCustom ? Preset::kMedium : preset);
  cfg.preset = preset;
  const Resolution requested{p.envmap_width, p.envmap_height};
  if (preset == Preset::kCustom) {
    if (requested.height < 16 || requested.height > 1024 || requested.width != 2 * requested.height)
      throw Error(ErrorCode::kConfiguration, "custom envmap size must be 2:1 with height in [16, 1024]");
    cfg.envmap_res = requested;
  } else if (!(requested == Resolution{0, 0}) && !(requested == cfg.envmap_res)) {
    throw Error(ErrorCode::kConfiguration, "envmap size does not match the preset");
  }
  cfg.validate();
  return cfg;
}

inline Vec3 rec_pos_from(const SessionInit& p) {
  const Vec3 v(p.rec_pos[0], p.rec_pos[1], p.rec_pos[2]);
  if (!v.allFinite()) throw Error(ErrorCode::kMalformed, "reconstruction position must be finite");
  return v;
}

inline Rgb ambient_from(const SessionInit& p) {
  const Rgb a(p.ambient[0], p.ambient[1], p.ambient[2]);
  if (!a.allFinite()) throw Error(ErrorCode::kMalformed, "ambient color must be finite");
  return clamp01(a);
}

// ---------------------------------------------------------------------------
// Stream framing: u32 little-endian payload length, then the payload.

inline std::vector<std::uint8_t> frame_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxFrameBytes) throw Error(ErrorCode::kMalformed, "frame exceeds the 64 MiB cap");
  detail::Writer w(4 + payload.size());
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload);
  return w.take();
}

inline std::uint32_t frame_length(std::span<const std::uint8_t, 4> header) {
  return static_cast<std::uint32_t>(header[0]) | (static_cast<std::uint32_t>(header[1]) << 8) |
         (static_cast<std::uint32_t>(header[2]) << 16) | (static_cast<std::uint32_t>(header[3]) << 24);
}

}  // namespace litfield::protocol
