#include "ddet/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ddet {

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw std::runtime_error("short write: " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw std::runtime_error("unsupported ppm header: " + path.string());
  f.get();  // single whitespace byte after maxval
  Image img(w, h);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw std::runtime_error("truncated ppm payload: " + path.string());
  return img;
}

void bilinear_sample(const Image& img, double x, double y, double out[3]) {
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  double fx = std::floor(x), fy = std::floor(y);
  int x0 = clampi(static_cast<int>(fx), 0, img.width - 1);
  int y0 = clampi(static_cast<int>(fy), 0, img.height - 1);
  int x1 = clampi(x0 + 1, 0, img.width - 1);
  int y1 = clampi(y0 + 1, 0, img.height - 1);
  double ax = x - fx, ay = y - fy;
  if (ax < 0) ax = 0;
  if (ax > 1) ax = 1;
  if (ay < 0) ay = 0;
  if (ay > 1) ay = 1;
  for (int c = 0; c < 3; ++c) {
    double top = img.at(x0, y0, c) + ax * (img.at(x1, y0, c) - img.at(x0, y0, c));
    double bot = img.at(x0, y1, c) + ax * (img.at(x1, y1, c) - img.at(x0, y1, c));
    out[c] = top + ay * (bot - top);
  }
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  Image out(out_w, out_h);
  double sx = static_cast<double>(img.width) / out_w;
  double sy = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < out_w; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      double rgb[3];
      bilinear_sample(img, src_x, src_y, rgb);
      for (int c = 0; c < 3; ++c) {
        double v = std::nearbyint(rgb[c]);
        out.at(x, y, c) = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
    }
  }
  return out;
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  double c = v * s;
  double hp = h / 60.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  double m = v - c;
  rgb[0] = (r + m) * 255.0;
  rgb[1] = (g + m) * 255.0;
  rgb[2] = (b + m) * 255.0;
}

}  // namespace ddet
