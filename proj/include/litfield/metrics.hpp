#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "litfield/error.hpp"
#include "litfield/image.hpp"

namespace litfield {

namespace detail {

inline void check_same_size(const EnvironmentMap& a, const EnvironmentMap& b) {
  if (a.resolution() != b.resolution()) throw Error(ErrorCode::kDimensionMismatch, "images differ in resolution");
}

inline void check_mask(const EnvironmentMap& a, std::span<const std::uint8_t> mask) {
  if (mask.size() != a.pixels.size()) throw Error(ErrorCode::kDimensionMismatch, "mask does not match the image");
}

}  // namespace detail

/// PSNR in dB over all channels with MAX = 1. Identical inputs give +inf.
inline double psnr(const EnvironmentMap& a, const EnvironmentMap& b) {
  detail::check_same_size(a, b);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) sse += (a.pixels[i] - b.pixels[i]).cast<double>().squaredNorm();
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (sse / (3.0 * static_cast<double>(a.pixels.size()))));
}

/// PSNR restricted to pixels whose mask entry is nonzero. Empty masks are an error.
inline double psnr_masked(const EnvironmentMap& a, const EnvironmentMap& b, std::span<const std::uint8_t> mask) {
  detail::check_same_size(a, b);
  detail::check_mask(a, mask);
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    if (!mask[i]) continue;
    sse += (a.pixels[i] - b.pixels[i]).cast<double>().squaredNorm();
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "mask selects no pixels");
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / (sse / (3.0 * static_cast<double>(n))));
}

inline std::vector<double> luminance(const EnvironmentMap& m) {
  std::vector<double> y(m.pixels.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = 0.299 * m.pixels[i].x() + 0.587 * m.pixels[i].y() + 0.114 * m.pixels[i].z();
  return y;
}

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Local SSIM on luminance for every full 11x11 window. Entry (x, y) of the
/// result belongs to the window centered at pixel (x + 5, y + 5); the map is
/// (width - 10) x (height - 10).
struct SsimMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

inline SsimMap ssim_map(const EnvironmentMap& a, const EnvironmentMap& b) {
  detail::check_same_size(a, b);
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw Error(ErrorCode::kInvalidArgument, "images are smaller than the SSIM window");
  constexpr int r = kSsimWindow / 2;
  std::array<double, kSsimWindow> g{};
  double gsum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-((i - r) * (i - r)) / (2.0 * kSsimSigma * kSsimSigma));
    gsum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= gsum;

  const int w = a.width;
  const int h = a.height;
  const std::vector<double> x = luminance(a);
  const std::vector<double> y = luminance(b);
  const int ow = w - 2 * r;
  const int oh = h - 2 * r;

  // Separable filtering of x, y, x^2, y^2, xy: horizontal pass, then vertical.
  constexpr int kChannels = 5;
  std::vector<double> horiz(static_cast<std::size_t>(kChannels) * ow * h);
  for (int row = 0; row < h; ++row)
    for (int col = 0; col < ow; ++col) {
      double s[kChannels] = {};
      for (int k = 0; k < kSsimWindow; ++k) {
        const std::size_t i = static_cast<std::size_t>(row) * w + col + k;
        const double wk = g[static_cast<std::size_t>(k)];
        s[0] += wk * x[i];
        s[1] += wk * y[i];
        s[2] += wk * x[i] * x[i];
        s[3] += wk * y[i] * y[i];
        s[4] += wk * x[i] * y[i];
      }
      for (int c = 0; c < kChannels; ++c)
        horiz[(static_cast<std::size_t>(c) * h + row) * ow + col] = s[c];
    }

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  SsimMap out{ow, oh, std::vector<double>(static_cast<std::size_t>(ow) * oh)};
  for (int row = 0; row < oh; ++row)
    for (int col = 0; col < ow; ++col) {
      double s[kChannels] = {};
      for (int k = 0; k < kSsimWindow; ++k) {
        const double wk = g[static_cast<std::size_t>(k)];
        for (int c = 0; c < kChannels; ++c) s[c] += wk * horiz[(static_cast<std::size_t>(c) * h + row + k) * ow + col];
      }
      const double mx = s[0];
      const double my = s[1];
      const double vx = s[2] - mx * mx;
      const double vy = s[3] - my * my;
      const double cov = s[4] - mx * my;
      out.values[static_cast<std::size_t>(row) * ow + col] =
          ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return out;
}

/// Mean local SSIM on luminance, 11x11 Gaussian window with sigma 1.5.
inline double ssim(const EnvironmentMap& a, const EnvironmentMap& b) {
  const SsimMap m = ssim_map(a, b);
  double sum = 0.0;
  for (double v : m.values) sum += v;
  return sum / static_cast<double>(m.values.size());
}

/// Mean local SSIM over windows whose center pixel is selected by the mask.
inline double ssim_masked(const EnvironmentMap& a, const EnvironmentMap& b, std::span<const std::uint8_t> mask) {
  detail::check_mask(a, mask);
  const SsimMap m = ssim_map(a, b);
  constexpr int r = kSsimWindow / 2;
  double sum = 0.0;
  std::size_t n = 0;
  for (int row = 0; row < m.height; ++row)
    for (int col = 0; col < m.width; ++col) {
      if (!mask[static_cast<std::size_t>(row + r) * a.width + col + r]) continue;
      sum += m.values[static_cast<std::size_t>(row) * m.width + col];
      ++n;
    }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "mask selects no SSIM windows");
  return sum / static_cast<double>(n);
}

}  // namespace litfield
