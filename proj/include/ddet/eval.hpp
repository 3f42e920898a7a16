#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ddet/dataset.hpp"
#include "ddet/geometry.hpp"

namespace ddet {

struct EvalDetection {
  int image = 0;
  int class_index = 0;
  double score = 0.0;
  Box box;
};

struct EvalBox {
  int image = 0;
  int class_index = 0;
  Box box;
};

// {0.25, 0.30, ..., 0.75}
std::vector<double> eval_thresholds();

// One class at one IoU threshold. tp holds a flag per detection of that
// class, ranked by descending score, ties by image id then input position.
struct MatchResult {
  std::vector<char> tp;
  std::size_t gt_count = 0;
};

// Greedy matching in rank order: a detection takes the highest-IoU ground
// truth of its image and class that is still unmatched and overlaps at least
// iou_threshold; IoU ties take the earlier ground truth.
MatchResult match_detections(const std::vector<EvalDetection>& dets,
                             const std::vector<EvalBox>& gts, int class_index,
                             double iou_threshold);

// All-point average precision: integral of the precision envelope over
// recall. Zero when gt_count is zero or no detection is a true positive.
double average_precision(const std::vector<char>& tp, std::size_t gt_count);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ClassReport {
  std::string name;
  std::size_t gt_count = 0;
  std::vector<double> ap;                  // one per threshold
  std::vector<std::vector<PrPoint>> pr;    // raw ranked points per threshold
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<ClassReport> classes;
  std::size_t detection_count = 0;
  std::size_t gt_total = 0;
  // Mean AP over classes with ground truth, one entry per threshold; zero
  // when no class has any ground truth.
  std::vector<double> map_at;
  double map_25_75 = 0.0;

  double map_at_iou(double t) const;  // nearest-threshold lookup
  double ap_at_iou(const std::string& class_name, double t) const;
};

EvalReport evaluate(const std::vector<EvalDetection>& dets,
                    const std::vector<EvalBox>& gts,
                    const std::vector<std::string>& class_names,
                    const std::vector<double>& thresholds = eval_thresholds());

void save_report_json(const std::string& path, const EvalReport& report);
EvalReport load_report_json(const std::string& path);
// One row: mAP25, mAP50, mAP25:75, then AP50 per class.
void save_report_csv(const std::string& path, const EvalReport& report);

// Line-delimited JSON records {image, class, score, x_min, y_min, x_max,
// y_max} with the class given by name. An unknown class name is an error
// that quotes the offending record.
std::vector<EvalDetection> read_predictions(const std::string& path,
                                            const ClassCatalog& catalog);
void write_predictions(const std::string& path,
                       const std::vector<EvalDetection>& dets,
                       const ClassCatalog& catalog);

// Flattens a dataset's annotations; image ids are sample indices.
std::vector<EvalBox> dataset_ground_truth(const DataSet& data);

}  // namespace ddet
