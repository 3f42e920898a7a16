#pragma once

#include <array>
#include <vector>

#include "ddet/detector.hpp"

namespace ddet {

// Class-aware penalization weights. The teacher emits a single foreground
// probability; each student foreground class is pulled toward it with its
// own weight, and the per-class penalties are averaged weighted by lambda.
struct KDConfig {
  double lambda_ndbe = 0.165;
  double lambda_neoplasia = 0.33;
  double lambda_polyp = 0.33;
  double eps_floor = 1e-7;
  bool normalize_over_batch = true;
  bool enabled = true;

  double lambda(int class_index) const;  // 0 ndbe, 1 neoplasia, 2 polyp
  double lambda_sum() const { return lambda_ndbe + lambda_neoplasia + lambda_polyp; }
  void validate() const;  // throws on lambda <= 0 or eps_floor <= 0
};

// -lambda * ln(max(overlap, eps)) where overlap is the Bhattacharyya
// coefficient of the two series, each L1-normalized first when normalize is
// set. Throws if either series sums to zero.
double bhattacharyya_penalty(const std::vector<double>& u,
                             const std::vector<double>& v, double lambda,
                             double eps, bool normalize = true);

struct KDResult {
  double value = 0.0;                     // lambda-weighted mean penalty
  std::array<double, 3> per_class{};      // penalty per student class
  std::array<double, 3> coefficient{};    // Bhattacharyya coefficient per class
};

// student_probs: n x 4 row-major (background + 3 classes), teacher_fg: n
// foreground probabilities from the teacher on the same anchors.
KDResult kd_penalty(const std::vector<double>& student_probs,
                    const std::vector<double>& teacher_fg, int n,
                    const KDConfig& config);

// Mean negative log-likelihood over entries whose label is not -1.
// logits: n x num_slots row-major; labels in [-1, num_slots).
// Throws if every label is -1.
double cross_entropy(const std::vector<double>& logits,
                     const std::vector<int>& labels, int num_slots);

// Smooth L1 (Huber with delta 1) summed over the 4 coordinates of each
// positive entry, averaged over the positive count; 0 when none are positive.
double smooth_l1(const std::vector<double>& pred,
                 const std::vector<double>& target,
                 const std::vector<bool>& positive);

// One sampled training batch: descriptors and targets for n anchors drawn
// from several images. Labels use head slots (0 background, c >= 1 class).
// A label of -c marks a regression-only row: it trains the box head toward
// class slot c but is excluded from the classification and distillation
// terms (used for intermediate-overlap anchors that have no clean CE label).
struct TrainBatch {
  int n = 0;
  int dim = kDescriptorDim;
  std::vector<double> descriptors;  // n x dim
  std::vector<int> labels;          // n
  std::vector<double> reg_targets;  // n x 4, meaningful where label != 0
  std::vector<double> teacher_fg;   // n, empty when distillation is off
};

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double kd = 0.0;
  double reg = 0.0;
  std::array<double, 3> kd_per_class{};
};

struct ModelGrads {
  std::vector<double> cls_w, cls_b, reg_w, reg_b;
  static ModelGrads zeros_like(const DetectorModel& model);
};
std::array<ParamView, 4> param_tensors(ModelGrads& grads);

// total = ce + kd + reg_weight * reg. Distillation requires teacher_fg and a
// 3-class student; it is skipped when config.enabled is false or teacher_fg
// is empty. When grads is non-null the analytic parameter gradients of the
// total are accumulated into it.
LossBreakdown total_student_loss(const DetectorModel& model,
                                 const TrainBatch& batch,
                                 const KDConfig& config, double reg_weight,
                                 ModelGrads* grads = nullptr);

}  // namespace ddet
