#include "ddet/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

namespace ddet {
namespace {

void require_keys(const nlohmann::json& j,
                  std::initializer_list<const char*> allowed,
                  const std::string& where) {
  if (!j.is_object())
    throw std::runtime_error("expected an object at " + where);
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::runtime_error("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

GridConfig grid_config_from_json(const nlohmann::json& j,
                                 const std::string& where) {
  require_keys(j, {"stride", "scales", "ratios", "frame_width", "frame_height"},
               where);
  GridConfig g;
  read(j, "stride", g.stride);
  read(j, "scales", g.scales);
  read(j, "ratios", g.ratios);
  read(j, "frame_width", g.frame_width);
  read(j, "frame_height", g.frame_height);
  return g;
}

KDConfig kd_config_from_json(const nlohmann::json& j, const std::string& where) {
  require_keys(j,
               {"lambda_ndbe", "lambda_neoplasia", "lambda_polyp", "eps_floor",
                "normalize_over_batch"},
               where);
  KDConfig k;
  read(j, "lambda_ndbe", k.lambda_ndbe);
  read(j, "lambda_neoplasia", k.lambda_neoplasia);
  read(j, "lambda_polyp", k.lambda_polyp);
  read(j, "eps_floor", k.eps_floor);
  read(j, "normalize_over_batch", k.normalize_over_batch);
  return k;
}

DetectConfig detect_config_from_json(const nlohmann::json& j,
                                     const std::string& where) {
  require_keys(j, {"score_floor", "nms_iou", "pre_nms_per_class", "post_nms_total"},
               where);
  DetectConfig d;
  read(j, "score_floor", d.score_floor);
  read(j, "nms_iou", d.nms_iou);
  read(j, "pre_nms_per_class", d.pre_nms_per_class);
  read(j, "post_nms_total", d.post_nms_total);
  return d;
}

nlohmann::json grid_config_to_json(const GridConfig& g) {
  return {{"stride", g.stride},
          {"scales", g.scales},
          {"ratios", g.ratios},
          {"frame_width", g.frame_width},
          {"frame_height", g.frame_height}};
}

nlohmann::json kd_config_to_json(const KDConfig& k) {
  return {{"lambda_ndbe", k.lambda_ndbe},
          {"lambda_neoplasia", k.lambda_neoplasia},
          {"lambda_polyp", k.lambda_polyp},
          {"eps_floor", k.eps_floor},
          {"normalize_over_batch", k.normalize_over_batch}};
}

nlohmann::json detect_config_to_json(const DetectConfig& d) {
  return {{"score_floor", d.score_floor},
          {"nms_iou", d.nms_iou},
          {"pre_nms_per_class", d.pre_nms_per_class},
          {"post_nms_total", d.post_nms_total}};
}

AugmentPolicy augment_variant(const std::string& name, std::uint64_t seed) {
  if (name == "none") return AugmentPolicy::none(seed);
  if (name == "geometric") return AugmentPolicy::geometric_only(seed);
  if (name == "photometric") return AugmentPolicy::photometric_only(seed);
  if (name == "combined") return AugmentPolicy::combined(seed);
  throw std::runtime_error("unknown augmentation variant '" + name + "'");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  require_keys(j,
               {"data_seed", "seeds", "teacher_epochs", "student_epochs",
                "kfold_epochs", "lr", "momentum", "weight_decay",
                "batch_images", "anchors_per_image", "max_positives_per_image",
                "reg_weight", "augment", "grid", "kd", "detect"},
               "config");
  ExperimentConfig c;
  read(j, "data_seed", c.data_seed);
  read(j, "seeds", c.seeds);
  read(j, "teacher_epochs", c.teacher_epochs);
  read(j, "student_epochs", c.student_epochs);
  read(j, "kfold_epochs", c.kfold_epochs);
  read(j, "lr", c.lr);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "batch_images", c.batch_images);
  read(j, "anchors_per_image", c.anchors_per_image);
  read(j, "max_positives_per_image", c.max_positives_per_image);
  read(j, "reg_weight", c.reg_weight);
  read(j, "augment", c.augment);
  if (j.contains("grid")) c.grid = grid_config_from_json(j.at("grid"), "config.grid");
  if (j.contains("kd")) c.kd = kd_config_from_json(j.at("kd"), "config.kd");
  if (j.contains("detect"))
    c.detect = detect_config_from_json(j.at("detect"), "config.detect");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"data_seed", data_seed},
          {"seeds", seeds},
          {"teacher_epochs", teacher_epochs},
          {"student_epochs", student_epochs},
          {"kfold_epochs", kfold_epochs},
          {"lr", lr},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"batch_images", batch_images},
          {"anchors_per_image", anchors_per_image},
          {"max_positives_per_image", max_positives_per_image},
          {"reg_weight", reg_weight},
          {"augment", augment},
          {"grid", grid_config_to_json(grid)},
          {"kd", kd_config_to_json(kd)},
          {"detect", detect_config_to_json(detect)}};
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::runtime_error("config needs at least one seed");
  if (teacher_epochs < 1 || student_epochs < 1 || kfold_epochs < 1)
    throw std::runtime_error("epoch counts must be positive");
  augment_variant(augment, 0);  // rejects unknown names
  teacher_train_config().validate();
  student_train_config(seeds.front(), true).validate();
}

TrainConfig ExperimentConfig::teacher_train_config() const {
  TrainConfig t;
  t.epochs = teacher_epochs;
  t.lr = lr;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.batch_images = batch_images;
  t.anchors_per_image = anchors_per_image;
  t.max_positives_per_image = max_positives_per_image;
  t.reg_weight = reg_weight;
  t.seed = data_seed;
  t.grid = grid;
  t.augment = augment_variant(augment, data_seed);
  t.kd.enabled = false;
  t.val_detect = detect;
  return t;
}

TrainConfig ExperimentConfig::student_train_config(std::uint64_t seed,
                                                   bool kd_enabled) const {
  TrainConfig t = teacher_train_config();
  t.epochs = student_epochs;
  t.seed = seed;
  t.augment = augment_variant(augment, seed);
  t.kd = kd;
  t.kd.enabled = kd_enabled;
  return t;
}

}  // namespace ddet
