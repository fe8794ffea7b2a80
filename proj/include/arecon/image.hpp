#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "arecon/math.hpp"

namespace arecon {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  T& at(int x, int y, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool sameShape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  size_t pixelCount() const { return static_cast<size_t>(width) * height; }
};

using ImageRgb = Image<double>;   // channels = 3, values in [0,1]
using ImageGray = Image<double>;  // channels = 1
using ImageMask = Image<std::uint8_t>;

inline Vec3 pixelRgb(const ImageRgb& img, int x, int y) {
  return Vec3(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
}

inline void setPixelRgb(ImageRgb& img, int x, int y, const Vec3& c) {
  img.at(x, y, 0) = c.x();
  img.at(x, y, 1) = c.y();
  img.at(x, y, 2) = c.z();
}

// Binary PPM (P6), linear values clamped to [0,1], no gamma.
inline void writePpm(const ImageRgb& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = clampd(img.at(x, y, c), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
      }
}

// Depth as CSV rows, invalid pixels written as 0.
inline void writeDepthCsv(const Image<double>& depth, const ImageMask& valid,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(9);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (x) out << ",";
      out << (valid.at(x, y) ? depth.at(x, y) : 0.0);
    }
    out << "\n";
  }
}

// Raw little-endian float32 dump, x fastest then y.
inline void writeRawFloat(const std::vector<float>& values, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
}

}  // namespace arecon
