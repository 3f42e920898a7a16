#include "ddet/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace ddet {

std::optional<Box> decode_box(const Box& anchor, const BoxDelta& d,
                              double frame_w, double frame_h) {
  Box b = decode_box(anchor, d);
  b.x_min = std::clamp(b.x_min, 0.0, frame_w);
  b.x_max = std::clamp(b.x_max, 0.0, frame_w);
  b.y_min = std::clamp(b.y_min, 0.0, frame_h);
  b.y_max = std::clamp(b.y_max, 0.0, frame_h);
  if (!b.valid()) return std::nullopt;
  return b;
}

std::vector<std::size_t> nms_indices(const std::vector<Box>& boxes,
                                     const std::vector<double>& scores,
                                     double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(boxes[idx], boxes[k]) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

std::vector<std::pair<Box, double>> nms(
    const std::vector<std::pair<Box, double>>& detections, double iou_threshold) {
  std::vector<Box> boxes;
  std::vector<double> scores;
  boxes.reserve(detections.size());
  scores.reserve(detections.size());
  for (const auto& [b, s] : detections) {
    boxes.push_back(b);
    scores.push_back(s);
  }
  std::vector<std::pair<Box, double>> out;
  for (std::size_t idx : nms_indices(boxes, scores, iou_threshold))
    out.push_back(detections[idx]);
  return out;
}

}  // namespace ddet
