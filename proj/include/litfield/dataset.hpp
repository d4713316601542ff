#pragma once

#include <bit>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "litfield/error.hpp"
#include "litfield/image.hpp"

// Dataset directory layout:
//   manifest.txt       key = value lines
//   init.bin           encoded SessionInit packet
//   frame_NNN.bin      encoded NearKeyframe / FarKeyframe packets, in order
//   ground_truth.ppm   8-bit ground-truth map (P6)
//   ground_truth.f32   same map as raw little-endian float32 RGB

namespace litfield::dataset {

namespace fs = std::filesystem;

/// Ordered key-value text file. Blank lines and '#' comments are ignored.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream os;
    os << value;
    entries_[key] = os.str();
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(ErrorCode::kIo, "manifest has no '" + key + "' entry");
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
  }

  template <typename T>
  T get_as(const std::string& key) const {
    std::istringstream is(get(key));
    T v{};
    if (!(is >> v)) throw Error(ErrorCode::kIo, "manifest entry '" + key + "' is not a valid value");
    return v;
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

  void save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  }

  static Manifest load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (line.find_first_not_of(" \t\r") != std::string::npos)
          throw Error(ErrorCode::kIo, "manifest line without '=': " + line);
        continue;
      }
      m.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return m;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> entries_;
};

inline void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_ppm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

inline void write_ppm(const fs::path& path, const EnvironmentMap& map) { write_ppm(path, map.width, map.height, map.to_rgb8()); }

inline void write_ppm(const fs::path& path, const ColorImage& img) {
  std::vector<std::uint8_t> rgb;
  rgb.reserve(img.pixels.size() * 3);
  for (const Rgb& p : img.pixels)
    for (int c = 0; c < 3; ++c) rgb.push_back(quantize_u8(p[c]));
  write_ppm(path, img.width, img.height, rgb);
}

/// Reads a binary P6 file with maxval 255.
inline EnvironmentMap read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P6") throw Error(ErrorCode::kIo, path.string() + " is not a binary PPM");
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kIo, "bad PPM header in " + path.string());
  }
  if (maxval != 255) throw Error(ErrorCode::kIo, "only 8-bit PPM is supported");
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) throw Error(ErrorCode::kIo, path.string() + " is truncated");
  return EnvironmentMap::from_rgb8(w, h, rgb);
}

inline void write_f32(const fs::path& path, std::span<const float> values) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) {
    const auto u = std::bit_cast<std::uint32_t>(v);
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(u >> s));
  }
  write_bytes(path, bytes);
}

inline std::vector<float> read_f32(const fs::path& path) {
  const auto bytes = read_bytes(path);
  if (bytes.size() % 4) throw Error(ErrorCode::kIo, path.string() + " is not a float32 array");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 3; b >= 0; --b) u = (u << 8) | bytes[4 * i + static_cast<std::size_t>(b)];
    out[i] = std::bit_cast<float>(u);
  }
  return out;
}

/// Linear float map as raw RGB float32 (width and height are stored elsewhere).
inline void write_map_f32(const fs::path& path, const EnvironmentMap& map) {
  std::vector<float> v;
  v.reserve(map.pixels.size() * 3);
  for (const Rgb& p : map.pixels) v.insert(v.end(), {p.x(), p.y(), p.z()});
  write_f32(path, v);
}

inline EnvironmentMap read_map_f32(const fs::path& path, int width, int height) {
  const auto v = read_f32(path);
  EnvironmentMap map(width, height);
  if (v.size() != map.pixels.size() * 3) throw Error(ErrorCode::kIo, path.string() + " does not match the map size");
  for (std::size_t i = 0; i < map.pixels.size(); ++i) map.pixels[i] = Rgb(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return map;
}

/// Prefers the float copy next to a PPM when one exists.
inline EnvironmentMap read_map(const fs::path& ppm) {
  EnvironmentMap m = read_ppm(ppm);
  fs::path f32 = ppm;
  f32.replace_extension(".f32");
  if (fs::exists(f32)) return read_map_f32(f32, m.width, m.height);
  return m;
}

inline void write_map(const fs::path& ppm, const EnvironmentMap& map) {
  write_ppm(ppm, map);
  fs::path f32 = ppm;
  f32.replace_extension(".f32");
  write_map_f32(f32, map);
}

}  // namespace litfield::dataset
