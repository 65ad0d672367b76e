#include "bft/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace bft {

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw IoError("ppm: malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) throw IoError("ppm: dimension too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError("ppm: not a P6 file");
  pos = 2;
  const int w = read_int(), h = read_int(), maxval = read_int();
  if (w <= 0 || h <= 0) throw IoError("ppm: non-positive extent");
  if (maxval != 255) throw IoError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError("ppm: malformed header");
  ++pos;
  Image img(w, h);
  if (bytes.size() - pos < img.rgb.size()) throw IoError("ppm: truncated pixel data");
  std::copy_n(bytes.begin() + static_cast<long>(pos), img.rgb.size(), img.rgb.begin());
  return img;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto bytes = encode_ppm(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::array<float, 3> channel_mean(const Image& img) {
  std::array<double, 3> acc{0, 0, 0};
  for (std::size_t i = 0; i < img.rgb.size(); i += 3)
    for (int c = 0; c < 3; ++c) acc[c] += img.rgb[i + c];
  const double n = std::max<double>(1.0, static_cast<double>(img.width) * img.height);
  return {static_cast<float>(acc[0] / n / 255.0), static_cast<float>(acc[1] / n / 255.0),
          static_cast<float>(acc[2] / n / 255.0)};
}

Crop crop_resize(const Image& img, double cx, double cy, double side, int out, bool flip) {
  if (out <= 0 || !(side > 0)) throw DimensionError("crop: non-positive size");
  Crop crop;
  crop.pixels = Tensor<float>(Shape{3, out, out});
  const auto mean = channel_mean(img);
  const double step = side / out;
  const double x0 = cx - 0.5 * side, y0 = cy - 0.5 * side;
  const std::size_t plane = static_cast<std::size_t>(out) * out;
  float* dst = crop.pixels.ptr();
  for (int v = 0; v < out; ++v) {
    const double sy = y0 + (v + 0.5) * step - 0.5;
    const int iy = static_cast<int>(std::floor(sy));
    const double fy = sy - iy;
    for (int u = 0; u < out; ++u) {
      const double sx = x0 + (u + 0.5) * step - 0.5;
      const int ix = static_cast<int>(std::floor(sx));
      const double fx = sx - ix;
      const int du = flip ? out - 1 - u : u;
      double acc[3] = {0, 0, 0};
      for (int ty = 0; ty < 2; ++ty) {
        const int py = iy + ty;
        const double wy = ty ? fy : 1.0 - fy;
        for (int tx = 0; tx < 2; ++tx) {
          const int px = ix + tx;
          const double w = wy * (tx ? fx : 1.0 - fx);
          if (w == 0.0) continue;
          if (px < 0 || py < 0 || px >= img.width || py >= img.height) {
            crop.padded = true;
            for (int c = 0; c < 3; ++c) acc[c] += w * mean[c];
          } else {
            const std::uint8_t* p = img.px(px, py);
            for (int c = 0; c < 3; ++c) acc[c] += w * (p[c] / 255.0);
          }
        }
      }
      for (int c = 0; c < 3; ++c) dst[c * plane + static_cast<std::size_t>(v) * out + du] = static_cast<float>(acc[c]);
    }
  }
  return crop;
}

}  // namespace bft
