#include "ddet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ddet/kernels.hpp"
#include "ddet/rng.hpp"

namespace ddet {

ProposalGrid build_grid(const GridConfig& config) {
  if (!(config.stride > 0.0)) throw std::invalid_argument("stride must be positive");
  if (config.scales.empty() || config.ratios.empty())
    throw std::invalid_argument("scales and ratios must be nonempty");
  for (double s : config.scales)
    if (!(s > 0.0)) throw std::invalid_argument("scales must be positive");
  for (double r : config.ratios)
    if (!(r > 0.0)) throw std::invalid_argument("ratios must be positive");
  if (config.frame_width <= 0 || config.frame_height <= 0)
    throw std::invalid_argument("frame must be positive");

  const double fw = config.frame_width, fh = config.frame_height;
  ProposalGrid grid;
  grid.config = config;
  for (double cy = config.stride / 2.0; cy < fh; cy += config.stride) {
    for (double cx = config.stride / 2.0; cx < fw; cx += config.stride) {
      for (double s : config.scales) {
        for (double r : config.ratios) {
          const double w = s * std::sqrt(r);
          const double h = s / std::sqrt(r);
          Box b{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
          b.x_min = std::clamp(b.x_min, 0.0, fw);
          b.x_max = std::clamp(b.x_max, 0.0, fw);
          b.y_min = std::clamp(b.y_min, 0.0, fh);
          b.y_max = std::clamp(b.y_max, 0.0, fh);
          if (b.valid()) grid.anchors.push_back(b);
        }
      }
    }
  }
  if (grid.anchors.empty())
    throw std::invalid_argument("grid config yields no valid anchor");
  return grid;
}

DetectorModel DetectorModel::init(int num_classes, const GridConfig& grid,
                                  std::uint64_t seed, int dim) {
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  if (dim < 1) throw std::invalid_argument("descriptor dim must be positive");
  DetectorModel m;
  m.num_classes = num_classes;
  m.dim = dim;
  m.grid_config = grid;
  m.cls_w.resize(static_cast<std::size_t>(num_classes + 1) * dim);
  m.cls_b.assign(num_classes + 1, 0.0);
  m.reg_w.resize(static_cast<std::size_t>(4 * num_classes) * dim);
  m.reg_b.assign(4 * num_classes, 0.0);
  Rng rng = stream(seed, "init", 0);
  for (double& w : m.cls_w) w = rng.uniform(-0.01, 0.01);
  for (double& w : m.reg_w) w = rng.uniform(-0.01, 0.01);
  return m;
}

void DetectorModel::forward(const double* descriptor, double* logits,
                            double* deltas) const {
  const std::size_t d = static_cast<std::size_t>(dim);
  for (int k = 0; k <= num_classes; ++k)
    logits[k] = kernels::dot(cls_w.data() + k * d, descriptor, d) + cls_b[k];
  for (int r = 0; r < 4 * num_classes; ++r)
    deltas[r] = kernels::dot(reg_w.data() + r * d, descriptor, d) + reg_b[r];
}

std::size_t DetectorModel::param_count() const {
  return cls_w.size() + cls_b.size() + reg_w.size() + reg_b.size();
}

std::array<ParamView, 4> param_tensors(DetectorModel& model) {
  return {ParamView{model.cls_w.data(), model.cls_w.size()},
          ParamView{model.cls_b.data(), model.cls_b.size()},
          ParamView{model.reg_w.data(), model.reg_w.size()},
          ParamView{model.reg_b.data(), model.reg_b.size()}};
}

std::uint64_t param_hash(const DetectorModel& model) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(model.num_classes),
                                 static_cast<std::uint64_t>(model.dim)};
  mix_bytes(dims, sizeof(dims));
  auto& m = const_cast<DetectorModel&>(model);
  for (const ParamView& t : param_tensors(m))
    mix_bytes(t.data, t.size * sizeof(double));
  return h;
}

void softmax(const double* logits, int n, double* probs) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (int i = 0; i < n; ++i) probs[i] /= sum;
}

nlohmann::json model_to_json(const DetectorModel& model) {
  nlohmann::json j;
  j["format"] = "ddet-model";
  j["version"] = 1;
  j["num_classes"] = model.num_classes;
  j["dim"] = model.dim;
  j["descriptor_version"] = model.descriptor_version;
  j["grid"] = {{"stride", model.grid_config.stride},
               {"scales", model.grid_config.scales},
               {"ratios", model.grid_config.ratios},
               {"frame_width", model.grid_config.frame_width},
               {"frame_height", model.grid_config.frame_height}};
  j["cls_w"] = model.cls_w;
  j["cls_b"] = model.cls_b;
  j["reg_w"] = model.reg_w;
  j["reg_b"] = model.reg_b;
  return j;
}

void save_model(const std::string& path, const DetectorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing model file: " + path);
}

DetectorModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "ddet-model")
    throw std::runtime_error("not a model record");
  DetectorModel m;
  m.num_classes = j.at("num_classes").get<int>();
  m.dim = j.at("dim").get<int>();
  m.descriptor_version = j.at("descriptor_version").get<int>();
  const auto& g = j.at("grid");
  m.grid_config.stride = g.at("stride").get<double>();
  m.grid_config.scales = g.at("scales").get<std::vector<double>>();
  m.grid_config.ratios = g.at("ratios").get<std::vector<double>>();
  m.grid_config.frame_width = g.at("frame_width").get<int>();
  m.grid_config.frame_height = g.at("frame_height").get<int>();
  m.cls_w = j.at("cls_w").get<std::vector<double>>();
  m.cls_b = j.at("cls_b").get<std::vector<double>>();
  m.reg_w = j.at("reg_w").get<std::vector<double>>();
  m.reg_b = j.at("reg_b").get<std::vector<double>>();
  const std::size_t d = static_cast<std::size_t>(m.dim);
  const std::size_t k1 = static_cast<std::size_t>(m.num_classes) + 1;
  if (m.num_classes < 1 || m.dim < 1 || m.cls_w.size() != k1 * d ||
      m.cls_b.size() != k1 || m.reg_w.size() != 4 * (k1 - 1) * d ||
      m.reg_b.size() != 4 * (k1 - 1))
    throw std::runtime_error("model record has inconsistent shapes");
  return m;
}

DetectorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
  }
}

std::vector<AnchorTarget> assign_targets(const ProposalGrid& grid,
                                         const std::vector<Annotation>& gts,
                                         double pos_iou, double neg_iou) {
  const std::size_t n = grid.anchors.size();
  std::vector<AnchorTarget> out(n);
  if (gts.empty()) return out;  // all background

  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  std::vector<double> gt_best_iou(gts.size(), -1.0);
  std::vector<std::size_t> gt_best_anchor(gts.size(), 0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(grid.anchors[a], gts[g].box);
      if (v > best_iou[a]) {  // ties keep the earlier annotation
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > gt_best_iou[g]) {  // ties keep the lower anchor index
        gt_best_iou[g] = v;
        gt_best_anchor[g] = a;
      }
    }
  }

  for (std::size_t a = 0; a < n; ++a) {
    if (best_gt[a] >= 0 && best_iou[a] >= pos_iou) {
      out[a].label = gts[static_cast<std::size_t>(best_gt[a])].class_index + 1;
      out[a].gt = best_gt[a];
    } else if (best_iou[a] < neg_iou) {
      out[a] = {0, -1};
    } else {
      out[a] = {-1, best_gt[a]};  // ignored for CE, still names its overlap
    }
  }

  // Every annotation claims its best anchor; higher IoU wins a contested
  // anchor, ties go to the earlier annotation.
  std::vector<int> claimed(n, -1);
  std::vector<double> claimed_iou(n, -1.0);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const std::size_t a = gt_best_anchor[g];
    if (gt_best_iou[g] > claimed_iou[a]) {
      claimed[a] = static_cast<int>(g);
      claimed_iou[a] = gt_best_iou[g];
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (claimed[a] >= 0) {
      out[a].label = gts[static_cast<std::size_t>(claimed[a])].class_index + 1;
      out[a].gt = claimed[a];
    }
  }
  return out;
}

std::vector<Detection> detect(const DetectorModel& model, const Image& image,
                              const ProposalGrid& grid,
                              const DetectConfig& config) {
  const int k1 = model.num_classes + 1;
  RegionDescriptors desc(image);
  std::vector<double> phi(static_cast<std::size_t>(model.dim));
  std::vector<double> logits(static_cast<std::size_t>(k1));
  std::vector<double> probs(static_cast<std::size_t>(k1));
  std::vector<double> deltas(static_cast<std::size_t>(4 * model.num_classes));

  std::vector<std::vector<Detection>> per_class(
      static_cast<std::size_t>(model.num_classes));
  for (std::size_t a = 0; a < grid.anchors.size(); ++a) {
    desc.describe(grid.anchors[a], phi.data());
    model.forward(phi.data(), logits.data(), deltas.data());
    softmax(logits.data(), k1, probs.data());
    for (int c = 1; c <= model.num_classes; ++c) {
      const double score = probs[static_cast<std::size_t>(c)];
      if (score < config.score_floor) continue;
      const BoxDelta d{deltas[(c - 1) * 4 + 0], deltas[(c - 1) * 4 + 1],
                       deltas[(c - 1) * 4 + 2], deltas[(c - 1) * 4 + 3]};
      const auto box = decode_box(grid.anchors[a], d, grid.config.frame_width,
                                  grid.config.frame_height);
      if (!box) continue;
      per_class[static_cast<std::size_t>(c - 1)].push_back(
          Detection{*box, c - 1, score, a});
    }
  }

  auto by_score_then_anchor = [](const Detection& x, const Detection& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.anchor < y.anchor;
  };

  std::vector<Detection> merged;
  for (auto& cands : per_class) {
    std::sort(cands.begin(), cands.end(), by_score_then_anchor);
    if (cands.size() > static_cast<std::size_t>(config.pre_nms_per_class))
      cands.resize(static_cast<std::size_t>(config.pre_nms_per_class));
    std::vector<Detection> kept;
    for (const Detection& cand : cands) {
      bool suppressed = false;
      for (const Detection& k : kept) {
        if (iou(cand.box, k.box) >= config.nms_iou) {
          suppressed = true;
          break;
        }
      }
      if (!suppressed) kept.push_back(cand);
    }
    merged.insert(merged.end(), kept.begin(), kept.end());
  }
  std::sort(merged.begin(), merged.end(), by_score_then_anchor);
  if (merged.size() > static_cast<std::size_t>(config.post_nms_total))
    merged.resize(static_cast<std::size_t>(config.post_nms_total));
  return merged;
}

}  // namespace ddet
