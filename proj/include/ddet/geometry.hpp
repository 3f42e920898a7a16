#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace ddet {

// Axis-aligned box, corner form, origin top-left, real-valued pixels.
// Valid boxes have strictly positive area.
struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
  }
};

// Anchor-relative offsets: (tx, ty) scale-normalized center shift,
// (tw, th) log size ratios.
struct BoxDelta {
  double tx = 0.0, ty = 0.0, tw = 0.0, th = 0.0;
};

inline double iou(const Box& a, const Box& b) {
  double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

inline BoxDelta encode_box(const Box& anchor, const Box& target) {
  double aw = anchor.width(), ah = anchor.height();
  return BoxDelta{
      (target.center_x() - anchor.center_x()) / aw,
      (target.center_y() - anchor.center_y()) / ah,
      std::log(target.width() / aw),
      std::log(target.height() / ah),
  };
}

inline Box decode_box(const Box& anchor, const BoxDelta& d) {
  double aw = anchor.width(), ah = anchor.height();
  double cx = anchor.center_x() + d.tx * aw;
  double cy = anchor.center_y() + d.ty * ah;
  double w = aw * std::exp(d.tw);
  double h = ah * std::exp(d.th);
  return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

// Clipping overload: clamps to [0, frame_w] x [0, frame_h] and rejects
// boxes whose area collapses to zero (or that were non-finite).
std::optional<Box> decode_box(const Box& anchor, const BoxDelta& d,
                              double frame_w, double frame_h);

// Greedy NMS. Keeps a detection iff its IoU with every previously kept one
// is below the threshold; candidates visited by descending score, ties by
// input index. Returns kept input indices in visit order.
std::vector<std::size_t> nms_indices(const std::vector<Box>& boxes,
                                     const std::vector<double>& scores,
                                     double iou_threshold);

std::vector<std::pair<Box, double>> nms(
    const std::vector<std::pair<Box, double>>& detections, double iou_threshold);

}  // namespace ddet
