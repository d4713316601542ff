#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "litfield/error.hpp"

namespace litfield {

using Rgb = Eigen::Vector3f;

struct Resolution {
  int width = 0;
  int height = 0;

  friend bool operator==(const Resolution&, const Resolution&) = default;
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

/// Row-major linear RGB image, channels in [0,1].
struct ColorImage {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  ColorImage() = default;
  ColorImage(int w, int h, const Rgb& fill = Rgb::Zero())
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }

  Resolution resolution() const { return {width, height}; }
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

enum class Confidence : std::uint8_t { kLow = 0, kMedium = 1, kHigh = 2 };

/// Row-major depth in meters plus per-pixel confidence in {0,1,2}. Depth is
/// Euclidean distance from the camera center along the pixel ray.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  std::vector<std::uint8_t> confidence;

  DepthImage() = default;
  DepthImage(int w, int h, float fill = 0.0f, std::uint8_t conf = 2)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill),
        confidence(depth.size(), conf) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }

  Resolution resolution() const { return {width, height}; }
};

inline Rgb clamp01(const Rgb& c) { return c.cwiseMax(0.0f).cwiseMin(1.0f); }

/// Nearest-pixel resampling (pixel-center aligned).
inline ColorImage resample_nearest(const ColorImage& src, Resolution dst) {
  if (dst == src.resolution()) return src;
  ColorImage out(dst.width, dst.height);
  for (int y = 0; y < dst.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / dst.height));
    for (int x = 0; x < dst.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / dst.width));
      out.at(x, y) = src.at(sx, sy);
    }
  }
  return out;
}

inline DepthImage resample_nearest(const DepthImage& src, Resolution dst) {
  if (dst == src.resolution()) return src;
  DepthImage out(dst.width, dst.height);
  for (int y = 0; y < dst.height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / dst.height));
    for (int x = 0; x < dst.width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / dst.width));
      const std::size_t s = static_cast<std::size_t>(sy) * src.width + sx;
      const std::size_t d = static_cast<std::size_t>(y) * dst.width + x;
      out.depth[d] = src.depth[s];
      out.confidence[d] = src.confidence[s];
    }
  }
  return out;
}

/// Box-filter downsampling; each output pixel averages the source pixels whose
/// index maps into it. Falls back to nearest sampling when upscaling.
inline ColorImage resample_area(const ColorImage& src, Resolution dst) {
  if (dst == src.resolution()) return src;
  if (dst.width > src.width || dst.height > src.height) return resample_nearest(src, dst);
  ColorImage out(dst.width, dst.height);
  for (int y = 0; y < dst.height; ++y) {
    const int y0 = static_cast<int>(static_cast<long>(y) * src.height / dst.height);
    const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long>(y + 1) * src.height / dst.height));
    for (int x = 0; x < dst.width; ++x) {
      const int x0 = static_cast<int>(static_cast<long>(x) * src.width / dst.width);
      const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long>(x + 1) * src.width / dst.width));
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      for (int sy = y0; sy < y1; ++sy)
        for (int sx = x0; sx < x1; ++sx) sum += src.at(sx, sy).cast<double>();
      out.at(x, y) = (sum / static_cast<double>((y1 - y0) * (x1 - x0))).cast<float>();
    }
  }
  return out;
}

/// Linear [0,1] to 8-bit, round half up.
inline std::uint8_t quantize_u8(float v) {
  const float scaled = std::floor(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

/// Equirectangular RGB map; linear float internally, 8-bit on export.
struct EnvironmentMap {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  EnvironmentMap() = default;
  EnvironmentMap(int w, int h, const Rgb& fill = Rgb::Zero())
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (h <= 0 || w != 2 * h) throw Error(ErrorCode::kInvalidArgument, "environment maps need width = 2 x height");
  }

  Resolution resolution() const { return {width, height}; }
  Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::vector<std::uint8_t> to_rgb8() const {
    std::vector<std::uint8_t> out;
    out.reserve(pixels.size() * 3);
    for (const Rgb& p : pixels)
      for (int c = 0; c < 3; ++c) out.push_back(quantize_u8(p[c]));
    return out;
  }

  static EnvironmentMap from_rgb8(int w, int h, const std::vector<std::uint8_t>& rgb) {
    EnvironmentMap m(w, h);
    if (rgb.size() != m.pixels.size() * 3) throw Error(ErrorCode::kDimensionMismatch, "rgb buffer size does not match map");
    for (std::size_t i = 0; i < m.pixels.size(); ++i)
      m.pixels[i] = Rgb(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]) / 255.0f;
    return m;
  }
};

}  // namespace litfield
