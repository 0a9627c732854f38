#include "hdrfield/image.hpp"

#include <algorithm>
#include <fstream>

namespace hdrfield {

void write_pfm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("PFM supports 1 or 3 channels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << (image.channels == 3 ? "PF" : "Pf") << "\n"
     << image.width << " " << image.height << "\n"
     << "-1.0\n";  // negative scale: little-endian
  std::vector<float> row(static_cast<std::size_t>(image.width) * image.channels);
  for (int y = image.height - 1; y >= 0; --y) {  // bottom-up
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        row[static_cast<std::size_t>(x) * image.channels + c] =
            static_cast<float>(image.at(x, y, c));
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

Image read_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  is >> magic >> w >> h >> scale;
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || scale >= 0.0) {
    throw std::runtime_error("unsupported PFM header in " + path);
  }
  is.get();  // single whitespace after the scale
  Image image(w, h, magic == "PF" ? 3 : 1);
  std::vector<float> row(static_cast<std::size_t>(w) * image.channels);
  for (int y = h - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated PFM: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < image.channels; ++c)
        image.at(x, y, c) = row[static_cast<std::size_t>(x) * image.channels + c];
  }
  return image;
}

void write_ppm(const std::string& path, const Image& image) {
  if (image.channels != 3) {
    throw std::invalid_argument("PPM requires 3 channels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
}

Image read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("unsupported PPM header in " + path);
  }
  is.get();
  Image image(w, h, 3);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (!is) throw std::runtime_error("truncated PPM: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
  }
  return image;
}

Image downscale(const Image& image, int factor) {
  if (factor <= 1) return image;
  Image out(image.width / factor, image.height / factor, image.channels);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += image.at(x * factor + dx, y * factor + dy, c);
        out.at(x, y, c) = acc * norm;
      }
    }
  }
  return out;
}

}  // namespace hdrfield
