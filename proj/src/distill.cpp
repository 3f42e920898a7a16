#include "ddet/distill.hpp"

#include <cmath>
#include <stdexcept>

#include "ddet/kernels.hpp"

namespace ddet {

double KDConfig::lambda(int class_index) const {
  switch (class_index) {
    case 0: return lambda_ndbe;
    case 1: return lambda_neoplasia;
    case 2: return lambda_polyp;
    default: throw std::out_of_range("class index for lambda");
  }
}

void KDConfig::validate() const {
  if (!(lambda_ndbe > 0.0) || !(lambda_neoplasia > 0.0) || !(lambda_polyp > 0.0))
    throw std::invalid_argument("penalization weights must be positive");
  if (!(eps_floor > 0.0))
    throw std::invalid_argument("eps_floor must be positive");
}

double bhattacharyya_penalty(const std::vector<double>& u,
                             const std::vector<double>& v, double lambda,
                             double eps, bool normalize) {
  if (u.size() != v.size() || u.empty())
    throw std::invalid_argument("series sizes differ or are empty");
  const double su = kernels::sum(u.data(), u.size());
  const double sv = kernels::sum(v.data(), v.size());
  if (su == 0.0 || sv == 0.0)
    throw std::invalid_argument("series sums to zero");
  double bc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = normalize ? u[i] / su : u[i];
    const double b = normalize ? v[i] / sv : v[i];
    bc += std::sqrt(a * b);
  }
  return -lambda * std::log(std::max(bc, eps));
}

KDResult kd_penalty(const std::vector<double>& student_probs,
                    const std::vector<double>& teacher_fg, int n,
                    const KDConfig& config) {
  if (n <= 0) throw std::invalid_argument("empty batch");
  if (student_probs.size() != static_cast<std::size_t>(n) * 4 ||
      teacher_fg.size() != static_cast<std::size_t>(n))
    throw std::invalid_argument("probability series shape mismatch");
  KDResult out;
  std::vector<double> u(static_cast<std::size_t>(n));
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < n; ++j)
      u[static_cast<std::size_t>(j)] =
          student_probs[static_cast<std::size_t>(j) * 4 + c + 1];
    const double su = kernels::sum(u.data(), u.size());
    const double sv = kernels::sum(teacher_fg.data(), teacher_fg.size());
    if (su == 0.0 || sv == 0.0)
      throw std::invalid_argument("series sums to zero");
    double bc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double a = config.normalize_over_batch
                           ? u[static_cast<std::size_t>(j)] / su
                           : u[static_cast<std::size_t>(j)];
      const double b = config.normalize_over_batch
                           ? teacher_fg[static_cast<std::size_t>(j)] / sv
                           : teacher_fg[static_cast<std::size_t>(j)];
      bc += std::sqrt(a * b);
    }
    out.coefficient[static_cast<std::size_t>(c)] = bc;
    out.per_class[static_cast<std::size_t>(c)] =
        -config.lambda(c) * std::log(std::max(bc, config.eps_floor));
    out.value += out.per_class[static_cast<std::size_t>(c)];
  }
  out.value /= config.lambda_sum();
  return out;
}

double cross_entropy(const std::vector<double>& logits,
                     const std::vector<int>& labels, int num_slots) {
  if (num_slots < 1 || labels.empty() ||
      logits.size() != labels.size() * static_cast<std::size_t>(num_slots))
    throw std::invalid_argument("logit shape mismatch");
  std::vector<double> p(static_cast<std::size_t>(num_slots));
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == -1) continue;
    if (labels[j] < 0 || labels[j] >= num_slots)
      throw std::invalid_argument("label out of range");
    softmax(logits.data() + j * num_slots, num_slots, p.data());
    total += -std::log(p[static_cast<std::size_t>(labels[j])]);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("all entries ignored");
  return total / static_cast<double>(counted);
}

namespace {

inline double huber(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double huber_grad(double x) {
  return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
}

}  // namespace

double smooth_l1(const std::vector<double>& pred,
                 const std::vector<double>& target,
                 const std::vector<bool>& positive) {
  if (pred.size() != target.size() || pred.size() != positive.size() * 4)
    throw std::invalid_argument("regression shape mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < positive.size(); ++j) {
    if (!positive[j]) continue;
    for (int i = 0; i < 4; ++i) total += huber(pred[j * 4 + i] - target[j * 4 + i]);
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

ModelGrads ModelGrads::zeros_like(const DetectorModel& model) {
  ModelGrads g;
  g.cls_w.assign(model.cls_w.size(), 0.0);
  g.cls_b.assign(model.cls_b.size(), 0.0);
  g.reg_w.assign(model.reg_w.size(), 0.0);
  g.reg_b.assign(model.reg_b.size(), 0.0);
  return g;
}

std::array<ParamView, 4> param_tensors(ModelGrads& grads) {
  return {ParamView{grads.cls_w.data(), grads.cls_w.size()},
          ParamView{grads.cls_b.data(), grads.cls_b.size()},
          ParamView{grads.reg_w.data(), grads.reg_w.size()},
          ParamView{grads.reg_b.data(), grads.reg_b.size()}};
}

LossBreakdown total_student_loss(const DetectorModel& model,
                                 const TrainBatch& batch,
                                 const KDConfig& config, double reg_weight,
                                 ModelGrads* grads) {
  const int n = batch.n;
  const int k1 = model.num_classes + 1;
  const std::size_t d = static_cast<std::size_t>(model.dim);
  if (n <= 0) throw std::invalid_argument("empty batch");
  if (batch.dim != model.dim ||
      batch.descriptors.size() != static_cast<std::size_t>(n) * d ||
      batch.labels.size() != static_cast<std::size_t>(n) ||
      batch.reg_targets.size() != static_cast<std::size_t>(n) * 4)
    throw std::invalid_argument("batch shape mismatch");
  const bool use_kd = config.enabled && !batch.teacher_fg.empty();
  if (use_kd) {
    if (model.num_classes != 3)
      throw std::invalid_argument("distillation expects a 3-class student");
    if (batch.teacher_fg.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("teacher series shape mismatch");
  }

  // Forward: probabilities and regression outputs per anchor.
  std::vector<double> probs(static_cast<std::size_t>(n) * k1);
  std::vector<double> regs(static_cast<std::size_t>(n) * 4 * model.num_classes);
  std::vector<double> logits(static_cast<std::size_t>(k1));
  for (int j = 0; j < n; ++j) {
    const double* phi = batch.descriptors.data() + static_cast<std::size_t>(j) * d;
    model.forward(phi, logits.data(),
                  regs.data() + static_cast<std::size_t>(j) * 4 * model.num_classes);
    softmax(logits.data(), k1, probs.data() + static_cast<std::size_t>(j) * k1);
  }

  LossBreakdown out;

  int reg_rows = 0, ce_rows = 0;
  for (int j = 0; j < n; ++j) {
    const int label = batch.labels[j];
    if (label >= k1 || label <= -k1)
      throw std::invalid_argument("label out of range");
    if (label >= 0) {
      out.ce += -std::log(probs[static_cast<std::size_t>(j) * k1 + label]);
      ++ce_rows;
    }
    if (label != 0) ++reg_rows;
  }
  if (ce_rows > 0) out.ce /= static_cast<double>(ce_rows);

  // Per-anchor, per-class d(penalty)/d(student foreground probability).
  std::vector<double> kd_du;
  if (use_kd) {
    kd_du.assign(static_cast<std::size_t>(n) * 3, 0.0);
    const double sv = kernels::sum(batch.teacher_fg.data(), batch.teacher_fg.size());
    if (sv == 0.0) throw std::invalid_argument("series sums to zero");
    const double lam_sum = config.lambda_sum();
    std::vector<double> vhat(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      vhat[static_cast<std::size_t>(j)] =
          config.normalize_over_batch
              ? batch.teacher_fg[static_cast<std::size_t>(j)] / sv
              : batch.teacher_fg[static_cast<std::size_t>(j)];
    for (int c = 0; c < 3; ++c) {
      double su = 0.0;
      for (int j = 0; j < n; ++j)
        if (batch.labels[j] >= 0)
          su += probs[static_cast<std::size_t>(j) * k1 + c + 1];
      if (su == 0.0) throw std::invalid_argument("series sums to zero");
      double bc = 0.0;
      for (int j = 0; j < n; ++j) {
        if (batch.labels[j] < 0) continue;
        const double u = probs[static_cast<std::size_t>(j) * k1 + c + 1];
        const double uhat = config.normalize_over_batch ? u / su : u;
        bc += std::sqrt(uhat * vhat[static_cast<std::size_t>(j)]);
      }
      const double lam = config.lambda(c);
      out.kd_per_class[static_cast<std::size_t>(c)] =
          -lam * std::log(std::max(bc, config.eps_floor));
      out.kd += out.kd_per_class[static_cast<std::size_t>(c)];
      if (grads) {
        // d(total kd)/d(bc); the floor kills the gradient below eps.
        const double dkd_dbc =
            bc > config.eps_floor ? -lam / (lam_sum * bc) : 0.0;
        for (int j = 0; j < n; ++j) {
          if (batch.labels[j] < 0) continue;
          const double u = probs[static_cast<std::size_t>(j) * k1 + c + 1];
          const double vh = vhat[static_cast<std::size_t>(j)];
          double dbc_du;
          if (config.normalize_over_batch) {
            const double uhat = u / su;
            const double ratio = uhat > 0.0 ? std::sqrt(vh / uhat) : 0.0;
            dbc_du = (ratio - bc) / (2.0 * su);
          } else {
            dbc_du = u > 0.0 ? std::sqrt(vh / u) / 2.0 : 0.0;
          }
          kd_du[static_cast<std::size_t>(j) * 3 + c] = dkd_dbc * dbc_du;
        }
      }
    }
    out.kd /= lam_sum;
  }

  double reg_total = 0.0;
  for (int j = 0; j < n; ++j) {
    const int label = batch.labels[j];
    if (label == 0) continue;
    const std::size_t slot = static_cast<std::size_t>(std::abs(label) - 1);
    const double* pred =
        regs.data() + static_cast<std::size_t>(j) * 4 * model.num_classes +
        slot * 4;
    const double* tgt = batch.reg_targets.data() + static_cast<std::size_t>(j) * 4;
    for (int i = 0; i < 4; ++i) reg_total += huber(pred[i] - tgt[i]);
  }
  out.reg = reg_rows > 0 ? reg_total / reg_rows : 0.0;
  out.total = out.ce + out.kd + reg_weight * out.reg;

  if (!grads) return out;

  std::vector<double> gz(static_cast<std::size_t>(k1));
  for (int j = 0; j < n; ++j) {
    const double* p = probs.data() + static_cast<std::size_t>(j) * k1;
    const double* phi = batch.descriptors.data() + static_cast<std::size_t>(j) * d;
    const int label = batch.labels[j];
    if (label >= 0) {
      for (int k = 0; k < k1; ++k)
        gz[static_cast<std::size_t>(k)] =
            (p[k] - (k == label ? 1.0 : 0.0)) / static_cast<double>(ce_rows);
      if (use_kd) {
        for (int c = 0; c < 3; ++c) {
          const double coeff = kd_du[static_cast<std::size_t>(j) * 3 + c];
          if (coeff == 0.0) continue;
          const double pc = p[c + 1];
          for (int k = 0; k < k1; ++k)
            gz[static_cast<std::size_t>(k)] +=
                coeff * pc * ((k == c + 1 ? 1.0 : 0.0) - p[k]);
        }
      }
      for (int k = 0; k < k1; ++k) {
        const double g = gz[static_cast<std::size_t>(k)];
        if (g == 0.0) continue;
        kernels::axpy(g, phi, grads->cls_w.data() + static_cast<std::size_t>(k) * d, d);
        grads->cls_b[static_cast<std::size_t>(k)] += g;
      }
    }
    if (label != 0 && reg_rows > 0) {
      const std::size_t row0 = static_cast<std::size_t>(std::abs(label) - 1) * 4;
      const double* pred =
          regs.data() + static_cast<std::size_t>(j) * 4 * model.num_classes + row0;
      const double* tgt = batch.reg_targets.data() + static_cast<std::size_t>(j) * 4;
      for (int i = 0; i < 4; ++i) {
        const double g =
            reg_weight * huber_grad(pred[i] - tgt[i]) / static_cast<double>(reg_rows);
        if (g == 0.0) continue;
        kernels::axpy(g, phi, grads->reg_w.data() + (row0 + i) * d, d);
        grads->reg_b[row0 + i] += g;
      }
    }
  }
  return out;
}

}  // namespace ddet
