#pragma once

#include <cmath>
#include <vector>

#include "voi/image.hpp"
#include "voi/nn/tensor.hpp"

namespace voi {

/// Writes an RGB8 image as planar [3, H, W] values in [0, 1] (or [-1, 1] with `signed_range`).
template <typename T>
void image_to_chw(const Image& img, T* dst, bool signed_range = false) {
  const std::size_t hw = std::size_t(img.width) * img.height;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const T v = static_cast<T>(img.rgb[3 * p + c]) / T(255);
      dst[c * hw + p] = signed_range ? T(2) * v - T(1) : v;
    }
}

template <typename T>
nn::Tensor<T> images_to_tensor(const std::vector<Image>& imgs, bool signed_range = false) {
  if (imgs.empty()) throw Error("no images to convert");
  const auto w = std::size_t(imgs[0].width), h = std::size_t(imgs[0].height);
  nn::Tensor<T> t({imgs.size(), 3, h, w});
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (std::size_t(imgs[i].width) != w || std::size_t(imgs[i].height) != h)
      throw Error("images differ in size: " + std::to_string(imgs[i].width) + "x" + std::to_string(imgs[i].height) +
                  " vs " + std::to_string(w) + "x" + std::to_string(h));
    image_to_chw(imgs[i], t.ptr() + i * 3 * w * h, signed_range);
  }
  return t;
}

/// Inverse of image_to_chw for one planar image; values are clamped before quantizing.
template <typename T>
Image chw_to_image(const T* src, int width, int height, bool signed_range = false) {
  Image img(width, height);
  const std::size_t hw = std::size_t(width) * height;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      double v = static_cast<double>(src[c * hw + p]);
      if (signed_range) v = 0.5 * (v + 1.0);
      img.rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  return img;
}

template <typename T>
std::vector<Image> tensor_to_images(const nn::Tensor<T>& t, bool signed_range = false) {
  if (t.rank() != 4 || t.dim(1) != 3) throw Error("expected an [N, 3, H, W] tensor");
  std::vector<Image> out;
  const std::size_t plane = 3 * t.dim(2) * t.dim(3);
  for (std::size_t i = 0; i < t.dim(0); ++i)
    out.push_back(chw_to_image(t.ptr() + i * plane, int(t.dim(3)), int(t.dim(2)), signed_range));
  return out;
}

}  // namespace voi
