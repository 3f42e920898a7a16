#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddet/train.hpp"

namespace ddet {

// Strict parsers: an unknown key anywhere in the document is an error that
// names the key and its location. Absent keys keep their defaults.
GridConfig grid_config_from_json(const nlohmann::json& j, const std::string& where);
KDConfig kd_config_from_json(const nlohmann::json& j, const std::string& where);
DetectConfig detect_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json grid_config_to_json(const GridConfig& g);
nlohmann::json kd_config_to_json(const KDConfig& k);
nlohmann::json detect_config_to_json(const DetectConfig& d);

// One experiment: two corpora plus a shifted test set, one teacher, and a
// distilled / undistilled student pair per seed.
struct ExperimentConfig {
  std::uint64_t data_seed = 1;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int teacher_epochs = 60;
  int student_epochs = 60;
  int kfold_epochs = 20;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_images = 4;
  int anchors_per_image = 64;
  int max_positives_per_image = 16;
  double reg_weight = 1.0;
  std::string augment = "combined";  // none|geometric|photometric|combined
  GridConfig grid;
  KDConfig kd;
  DetectConfig detect;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;  // every resolved field
  void validate() const;

  // kd_enabled selects the distillation arm; the teacher pointer is still
  // required by the caller for the enabled arm.
  TrainConfig student_train_config(std::uint64_t seed, bool kd_enabled) const;
  TrainConfig teacher_train_config() const;
};

AugmentPolicy augment_variant(const std::string& name, std::uint64_t seed);

}  // namespace ddet
