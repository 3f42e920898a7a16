#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ddet {

// Interleaved 8-bit RGB raster, row-major, origin top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // size = width * height * 3

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool operator==(const Image&) const = default;
};

// Binary P6, header "P6\n<w> <h>\n255\n", then exactly w*h*3 payload bytes.
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// Bilinear sample at real coordinates; (x, y) are pixel-center based, clamped
// to the raster edge.
void bilinear_sample(const Image& img, double x, double y, double out[3]);

// Resize to (out_w, out_h) with bilinear interpolation, pixel-center aligned.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// h in degrees (wraps), s and v in [0,1]; output channels in [0,255].
void hsv_to_rgb(double h, double s, double v, double rgb[3]);

}  // namespace ddet
