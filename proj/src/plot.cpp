#include "ddet/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ddet {
namespace {

constexpr int kWidth = 480;
constexpr int kHeight = 360;
constexpr int kMarginLeft = 56;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";
}

void draw_axes(std::ostringstream& out, const std::string& xlabel,
               const std::string& ylabel, double ymax) {
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
      << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
      << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = i / 4.0;
    const int tx = x0 + static_cast<int>(f * (x1 - x0));
    const int ty = y0 - static_cast<int>(f * (y0 - y1));
    out << "<line x1=\"" << tx << "\" y1=\"" << y0 << "\" x2=\"" << tx
        << "\" y2=\"" << y0 + 4 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << tx << "\" y=\"" << y0 + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << fmt(f) << "</text>\n";
    out << "<line x1=\"" << x0 - 4 << "\" y1=\"" << ty << "\" x2=\"" << x0
        << "\" y2=\"" << ty << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << x0 - 8 << "\" y=\"" << ty + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << fmt(f * ymax) << "</text>\n";
  }
  out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << escape_xml(xlabel) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 "
      << (y0 + y1) / 2 << ")\">" << escape_xml(ylabel) << "</text>\n";
}

void draw_legend(std::ostringstream& out, const std::vector<std::string>& names) {
  const int lx = kWidth - kMarginRight - 150, ly = kMarginTop + 8;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int y = ly + static_cast<int>(i) * 18;
    out << "<line x1=\"" << lx << "\" y1=\"" << y << "\" x2=\"" << lx + 22
        << "\" y2=\"" << y << "\" stroke=\"" << kPalette[i % 6]
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << lx + 28 << "\" y=\"" << y + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape_xml(names[i]) << "</text>\n";
  }
}

}  // namespace

std::string svg_pr_curves(const std::string& title,
                          const std::vector<PlotSeries>& series) {
  std::ostringstream out;
  open_svg(out, title);
  draw_axes(out, "recall", "precision", 1.0);
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  std::vector<std::string> names;
  for (std::size_t s = 0; s < series.size(); ++s) {
    names.push_back(series[s].name);
    if (series[s].points.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 6]
        << "\" stroke-width=\"2\" points=\"";
    // Anchor the curve at recall 0 with the first point's precision.
    const auto& first = series[s].points.front();
    out << x0 << ',' << y0 - static_cast<int>(first.precision * (y0 - y1)) << ' ';
    for (const auto& p : series[s].points) {
      const int px = x0 + static_cast<int>(p.recall * (x1 - x0));
      const int py = y0 - static_cast<int>(p.precision * (y0 - y1));
      out << px << ',' << py << ' ';
    }
    out << "\"/>\n";
  }
  draw_legend(out, names);
  out << "</svg>\n";
  return out.str();
}

std::string svg_bar_chart(const std::string& title,
                          const std::vector<std::string>& series,
                          const std::vector<BarGroup>& groups) {
  double ymax = 0.0;
  for (const auto& g : groups)
    for (double v : g.values) ymax = std::max(ymax, v);
  if (ymax <= 0.0) ymax = 1.0;

  std::ostringstream out;
  open_svg(out, title);
  draw_axes(out, "", "AP", ymax);
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  if (!groups.empty()) {
    const double group_w = static_cast<double>(x1 - x0) / groups.size();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double gx = x0 + group_w * g;
      const std::size_t n = std::max<std::size_t>(groups[g].values.size(), 1);
      const double bar_w = group_w * 0.8 / static_cast<double>(n);
      for (std::size_t s = 0; s < groups[g].values.size(); ++s) {
        const double v = std::clamp(groups[g].values[s] / ymax, 0.0, 1.0);
        const int bh = static_cast<int>(v * (y0 - y1));
        out << "<rect x=\"" << fmt(gx + group_w * 0.1 + bar_w * s) << "\" y=\""
            << y0 - bh << "\" width=\"" << fmt(bar_w * 0.92) << "\" height=\""
            << bh << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
      }
      out << "<text x=\"" << fmt(gx + group_w / 2) << "\" y=\"" << y0 + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"11\">"
          << escape_xml(groups[g].label) << "</text>\n";
    }
  }
  draw_legend(out, series);
  out << "</svg>\n";
  return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing file: " + path);
}

}  // namespace ddet
