#pragma once

#include <string>
#include <vector>

#include "hdrfield/common.hpp"

namespace hdrfield {

// Row-major, channel-interleaved float image. LDR data lives in [0,1];
// HDR/depth/flow data is unbounded.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  Vec3 rgb(int x, int y) const {
    return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2));
  }
  void set_rgb(int x, int y, const Vec3& v) {
    at(x, y, 0) = v(0);
    at(x, y, 1) = v(1);
    at(x, y, 2) = v(2);
  }
};

// Portable Float Map, little-endian, bottom-up rows (1 or 3 channels).
void write_pfm(const std::string& path, const Image& image);
Image read_pfm(const std::string& path);

// Binary P6 PPM, 8-bit, values clamped to [0,1] before quantization.
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

Image downscale(const Image& image, int factor);  // box average

}  // namespace hdrfield
