#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ddet/augment.hpp"
#include "ddet/dataset.hpp"
#include "ddet/detector.hpp"
#include "ddet/distill.hpp"
#include "ddet/eval.hpp"

namespace ddet {

struct TrainConfig {
  int epochs = 60;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_images = 4;
  int anchors_per_image = 64;
  int max_positives_per_image = 16;
  double reg_weight = 1.0;
  double pos_iou = 0.5;
  double neg_iou = 0.3;
  std::uint64_t seed = 0;
  GridConfig grid;
  // The run seed drives every stream; the policy's own seed is overwritten.
  AugmentPolicy augment = AugmentPolicy::none(0);
  KDConfig kd;
  DetectConfig val_detect;

  void validate() const;
};

// Read-only teacher: the parameter hash is taken at freeze time and verified
// before use, so an accidentally mutated teacher fails loudly.
class FrozenTeacher {
 public:
  explicit FrozenTeacher(DetectorModel model);
  const DetectorModel& model() const { return model_; }
  std::uint64_t hash() const { return hash_; }
  void verify() const;

 private:
  DetectorModel model_;
  std::uint64_t hash_ = 0;
};

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_map50 = 0.0;
};

struct TrainResult {
  DetectorModel final_model;
  DetectorModel best_model;
  int best_epoch = -1;
  double best_val_map50 = 0.0;
  std::vector<EpochSummary> epochs;
};

// One loop for both roles; a teacher run passes teacher = nullptr and a
// single-class dataset. Distillation runs only when config.kd.enabled and a
// teacher is supplied; with it off the teacher is never evaluated, so the
// trajectory is bit-identical with or without one.
//
// When run_dir is nonempty the loop appends per-iteration metrics to
// <run_dir>/metrics.jsonl, keeps <run_dir>/state.json at every epoch
// boundary, and resumes from it when present, reproducing the uninterrupted
// trajectory exactly. Non-finite losses abort with a diagnostic.
TrainResult train_detector(const DataSet& train_data, const DataSet& val_data,
                           const TrainConfig& config,
                           const FrozenTeacher* teacher = nullptr,
                           const std::string& run_dir = {});

// Validation-style inference over a dataset: detections tagged with sample
// indices, ready for evaluation.
std::vector<EvalDetection> run_inference(const DetectorModel& model,
                                                const DataSet& data,
                                                const DetectConfig& config);

// Mean average precision at IoU 0.5 of a model over a dataset.
double validation_map50(const DetectorModel& model, const DataSet& data,
                        const DetectConfig& config);

struct KfoldRow {
  std::string variant;
  std::vector<double> fold_map50;  // percent, one per fold
  double average = 0.0;            // arithmetic mean of fold_map50
};

struct KfoldTable {
  int k = 0;
  std::vector<KfoldRow> rows;
};

// Average is computed here so every consumer shares the same arithmetic.
KfoldRow make_kfold_row(const std::string& variant,
                        const std::vector<double>& fold_map50);

// Cross-validated augmentation sweep: none / geometric / photometric /
// combined, each trained per fold and scored by val mAP at IoU 0.5.
KfoldTable run_kfold(const DataSet& data, int k, const TrainConfig& base,
                     const FrozenTeacher* teacher = nullptr,
                     const std::string& run_dir = {});

// Markdown table with K1..Kk and Average columns, cells in percent, one
// decimal place.
std::string format_kfold_markdown(const KfoldTable& table);

}  // namespace ddet
