#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddet/dataset.hpp"
#include "ddet/descriptor.hpp"
#include "ddet/geometry.hpp"
#include "ddet/image.hpp"

namespace ddet {

struct GridConfig {
  double stride = 15.0;
  std::vector<double> scales = {30.0, 60.0, 120.0};
  std::vector<double> ratios = {0.5, 1.0, 2.0};
  int frame_width = 225;
  int frame_height = 225;

  bool operator==(const GridConfig&) const = default;
};

struct ProposalGrid {
  GridConfig config;
  std::vector<Box> anchors;  // clipped to the frame, degenerate ones removed
};

// Enumerates anchors center-major (row by row), then by scale, then by ratio.
// A box of scale s and ratio r spans s*sqrt(r) x s/sqrt(r) before clipping.
// Throws if the config yields no valid anchor.
ProposalGrid build_grid(const GridConfig& config);

// Linear detection heads over region descriptors. Slot 0 of the class head is
// background; foreground class c occupies slot c + 1.
struct DetectorModel {
  int num_classes = 1;  // foreground classes
  int dim = kDescriptorDim;
  int descriptor_version = kDescriptorVersion;
  GridConfig grid_config;
  std::vector<double> cls_w;  // (num_classes + 1) x dim, row-major
  std::vector<double> cls_b;  // num_classes + 1
  std::vector<double> reg_w;  // 4 * num_classes x dim, row-major
  std::vector<double> reg_b;  // 4 * num_classes

  static DetectorModel init(int num_classes, const GridConfig& grid,
                            std::uint64_t seed, int dim = kDescriptorDim);

  // logits: num_classes + 1 entries; deltas: 4 * num_classes entries.
  void forward(const double* descriptor, double* logits, double* deltas) const;

  std::size_t param_count() const;
};

// Mutable views over the model's parameter tensors, in serialization order.
struct ParamView {
  double* data;
  std::size_t size;
};
std::array<ParamView, 4> param_tensors(DetectorModel& model);

// FNV-1a over the little-endian bytes of every parameter, in tensor order.
std::uint64_t param_hash(const DetectorModel& model);

// Max-subtracted softmax.
void softmax(const double* logits, int n, double* probs);

// JSON checkpoint; round-trips every weight bit-exactly.
nlohmann::json model_to_json(const DetectorModel& model);
DetectorModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const DetectorModel& model);
DetectorModel load_model(const std::string& path);

// Per-anchor training target. label: -1 ignored, 0 background, c >= 1 the
// foreground slot of the matched annotation. gt: annotation index, -1 if none.
struct AnchorTarget {
  int label = 0;
  int gt = -1;
};

// IoU-band assignment (>= pos_iou positive, < neg_iou background, ignore
// between), then every annotation claims its highest-IoU anchor so no
// annotation is left without a positive. Anchor-claim ties go to the lower
// anchor index; two annotations claiming one anchor resolve by higher IoU,
// then earlier annotation.
std::vector<AnchorTarget> assign_targets(const ProposalGrid& grid,
                                         const std::vector<Annotation>& gts,
                                         double pos_iou = 0.5,
                                         double neg_iou = 0.3);

struct Detection {
  Box box;
  int class_index = 0;  // foreground class, 0-based (head slot - 1)
  double score = 0.0;
  std::size_t anchor = 0;
};

struct DetectConfig {
  double score_floor = 0.05;
  double nms_iou = 0.5;
  int pre_nms_per_class = 300;
  int post_nms_total = 100;
};

// Full-grid forward pass, per-class score floor + NMS, then a global cap.
// Output sorted by descending score, ties by ascending anchor index.
std::vector<Detection> detect(const DetectorModel& model, const Image& image,
                              const ProposalGrid& grid,
                              const DetectConfig& config = {});

}  // namespace ddet
