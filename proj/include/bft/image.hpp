#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "bft/tensor.hpp"

namespace bft {

/// 8-bit interleaved RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const Image&) const = default;
};

/// Binary P6 with maxval 255.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);

std::array<float, 3> channel_mean(const Image& img);

struct Crop {
  Tensor<float> pixels;  // [3,out,out], values in [0,1]
  bool padded = false;   // some samples fell outside the frame
};

/// Square window of side `side` centered at (cx, cy), bilinearly resampled to
/// out x out. Samples outside the frame take the channel mean.
Crop crop_resize(const Image& img, double cx, double cy, double side, int out, bool flip = false);

}  // namespace bft
