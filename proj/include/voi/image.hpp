#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <vector>

#include "voi/common.hpp"
#include "voi/scene.hpp"

namespace voi {

/// 8-bit RGB raster, row-major, interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill = {}) : width(w), height(h), rgb(3 * std::size_t(w) * std::size_t(h)) {
    if (w <= 0 || h <= 0) throw Error("image dimensions must be positive");
    const auto px = to_bytes(fill);
    for (std::size_t i = 0; i < rgb.size(); i += 3) std::memcpy(&rgb[i], px.data(), 3);
  }

  static std::array<std::uint8_t, 3> to_bytes(const Rgb& c) {
    auto q = [](double v) {
      return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    return {q(c.r), q(c.g), q(c.b)};
  }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  std::uint8_t* at(int x, int y) { return &rgb[3 * (std::size_t(y) * width + x)]; }
  const std::uint8_t* at(int x, int y) const { return &rgb[3 * (std::size_t(y) * width + x)]; }
  void set(int x, int y, const std::array<std::uint8_t, 3>& c) { std::memcpy(at(x, y), c.data(), 3); }

  bool operator==(const Image&) const = default;
};

/// Copies the window [x0, x0+w) x [y0, y0+h); the window must lie inside the image.
inline Image sub_image(const Image& src, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height)
    throw Error("sub-image window outside source image");
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    std::memcpy(out.at(0, y), src.at(x0, y0 + y), 3 * std::size_t(w));
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.string().c_str(), 0, img.rgb.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw Error("cannot write PNG '" + path.string() + "': " + msg);
  }
}

inline Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
    throw Error("cannot read PNG '" + path.string() + "': " + pi.message);
  pi.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(pi.width), static_cast<int>(pi.height));
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw Error("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return img;
}

}  // namespace voi
