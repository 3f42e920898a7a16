#include "ddet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace ddet {

std::vector<double> eval_thresholds() {
  std::vector<double> t;
  for (int i = 25; i <= 75; i += 5) t.push_back(i / 100.0);
  return t;
}

namespace {

// Rank order shared by matching and the report: descending score, then
// image id, then input position.
std::vector<std::size_t> rank_class(const std::vector<EvalDetection>& dets,
                                    int class_index) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].class_index == class_index) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    if (dets[a].image != dets[b].image) return dets[a].image < dets[b].image;
    return a < b;
  });
  return idx;
}

}  // namespace

MatchResult match_detections(const std::vector<EvalDetection>& dets,
                             const std::vector<EvalBox>& gts, int class_index,
                             double iou_threshold) {
  std::map<int, std::vector<std::size_t>> gt_by_image;
  MatchResult out;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].class_index != class_index) continue;
    gt_by_image[gts[g].image].push_back(g);
    ++out.gt_count;
  }
  std::vector<char> taken(gts.size(), 0);
  const auto ranked = rank_class(dets, class_index);
  out.tp.reserve(ranked.size());
  for (std::size_t i : ranked) {
    const auto it = gt_by_image.find(dets[i].image);
    double best = 0.0;
    std::size_t best_g = gts.size();
    if (it != gt_by_image.end()) {
      for (std::size_t g : it->second) {
        if (taken[g]) continue;
        const double v = iou(dets[i].box, gts[g].box);
        if (v >= iou_threshold && v > best) {  // ties keep the earlier gt
          best = v;
          best_g = g;
        }
      }
    }
    if (best_g < gts.size()) {
      taken[best_g] = 1;
      out.tp.push_back(1);
    } else {
      out.tp.push_back(0);
    }
  }
  return out;
}

double average_precision(const std::vector<char>& tp, std::size_t gt_count) {
  if (gt_count == 0 || tp.empty()) return 0.0;
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp[i]) ++hits;
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(gt_count);
  }
  // Precision envelope from the right, integrated over recall increments.
  double ap = 0.0, env = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    env = std::max(env, precision[i]);
    const double prev = i == 0 ? 0.0 : recall[i - 1];
    ap += (recall[i] - prev) * env;
  }
  return ap;
}

double EvalReport::map_at_iou(double t) const {
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    if (std::abs(thresholds[i] - t) < 1e-9) return map_at[i];
  throw std::out_of_range("no such evaluation threshold");
}

double EvalReport::ap_at_iou(const std::string& class_name, double t) const {
  for (const auto& c : classes) {
    if (c.name != class_name) continue;
    for (std::size_t i = 0; i < thresholds.size(); ++i)
      if (std::abs(thresholds[i] - t) < 1e-9) return c.ap[i];
  }
  throw std::out_of_range("no such class or threshold");
}

EvalReport evaluate(const std::vector<EvalDetection>& dets,
                    const std::vector<EvalBox>& gts,
                    const std::vector<std::string>& class_names,
                    const std::vector<double>& thresholds) {
  if (class_names.empty() || thresholds.empty())
    throw std::invalid_argument("need classes and thresholds");
  EvalReport report;
  report.thresholds = thresholds;
  report.detection_count = dets.size();
  report.gt_total = gts.size();
  report.classes.resize(class_names.size());
  for (int c = 0; c < static_cast<int>(class_names.size()); ++c) {
    auto& cls = report.classes[static_cast<std::size_t>(c)];
    cls.name = class_names[static_cast<std::size_t>(c)];
    cls.ap.resize(thresholds.size(), 0.0);
    cls.pr.resize(thresholds.size());
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      auto match = match_detections(dets, gts, c, thresholds[t]);
      cls.gt_count = match.gt_count;
      cls.ap[t] = average_precision(match.tp, match.gt_count);
      auto& curve = cls.pr[t];
      curve.reserve(match.tp.size());
      std::size_t hits = 0;
      for (std::size_t i = 0; i < match.tp.size(); ++i) {
        if (match.tp[i]) ++hits;
        curve.push_back(
            {match.gt_count == 0
                 ? 0.0
                 : static_cast<double>(hits) / static_cast<double>(match.gt_count),
             static_cast<double>(hits) / static_cast<double>(i + 1)});
      }
    }
  }
  report.map_at.assign(thresholds.size(), 0.0);
  std::size_t present = 0;
  for (const auto& cls : report.classes)
    if (cls.gt_count > 0) ++present;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    if (present == 0) continue;
    double total = 0.0;
    for (const auto& cls : report.classes)
      if (cls.gt_count > 0) total += cls.ap[t];
    report.map_at[t] = total / static_cast<double>(present);
  }
  report.map_25_75 =
      std::accumulate(report.map_at.begin(), report.map_at.end(), 0.0) /
      static_cast<double>(report.map_at.size());
  return report;
}

void save_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["thresholds"] = report.thresholds;
  j["detection_count"] = report.detection_count;
  j["gt_total"] = report.gt_total;
  j["map_at"] = report.map_at;
  j["map_25_75"] = report.map_25_75;
  auto& classes = j["classes"] = nlohmann::json::array();
  for (const auto& cls : report.classes) {
    nlohmann::json c;
    c["name"] = cls.name;
    c["gt_count"] = cls.gt_count;
    c["ap"] = cls.ap;
    auto& curves = c["pr"] = nlohmann::json::array();
    for (const auto& curve : cls.pr) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : curve) pts.push_back({p.recall, p.precision});
      curves.push_back(std::move(pts));
    }
    classes.push_back(std::move(c));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing report: " + path);
}

EvalReport load_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read report: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  EvalReport report;
  report.thresholds = j.at("thresholds").get<std::vector<double>>();
  report.detection_count = j.at("detection_count").get<std::size_t>();
  report.gt_total = j.at("gt_total").get<std::size_t>();
  report.map_at = j.at("map_at").get<std::vector<double>>();
  report.map_25_75 = j.at("map_25_75").get<double>();
  for (const auto& c : j.at("classes")) {
    ClassReport cls;
    cls.name = c.at("name").get<std::string>();
    cls.gt_count = c.at("gt_count").get<std::size_t>();
    cls.ap = c.at("ap").get<std::vector<double>>();
    for (const auto& curve : c.at("pr")) {
      std::vector<PrPoint> pts;
      for (const auto& p : curve)
        pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      cls.pr.push_back(std::move(pts));
    }
    report.classes.push_back(std::move(cls));
  }
  return report;
}

void save_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << "mAP25,mAP50,mAP25:75";
  for (const auto& cls : report.classes) out << ",AP50:" << cls.name;
  out << '\n';
  char buf[64];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << cell(report.map_at_iou(0.25)) << ',' << cell(report.map_at_iou(0.5))
      << ',' << cell(report.map_25_75);
  for (const auto& cls : report.classes)
    out << ',' << cell(report.ap_at_iou(cls.name, 0.5));
  out << '\n';
  if (!out) throw std::runtime_error("failed writing report: " + path);
}

std::vector<EvalDetection> read_predictions(const std::string& path,
                                            const ClassCatalog& catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read predictions: " + path);
  std::vector<EvalDetection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    EvalDetection d;
    d.image = j.at("image").get<int>();
    const std::string cls = j.at("class").get<std::string>();
    d.class_index = catalog.merged_index(cls);
    if (d.class_index < 0)
      throw std::runtime_error("unknown class '" + cls + "' in " + path +
                               " line " + std::to_string(lineno) + ": " + line);
    d.score = j.at("score").get<double>();
    d.box = Box{j.at("x_min").get<double>(), j.at("y_min").get<double>(),
                j.at("x_max").get<double>(), j.at("y_max").get<double>()};
    out.push_back(d);
  }
  return out;
}

void write_predictions(const std::string& path,
                       const std::vector<EvalDetection>& dets,
                       const ClassCatalog& catalog) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write predictions: " + path);
  for (const auto& d : dets) {
    nlohmann::json j;
    j["image"] = d.image;
    j["class"] = catalog.merged_classes.at(static_cast<std::size_t>(d.class_index));
    j["score"] = d.score;
    j["x_min"] = d.box.x_min;
    j["y_min"] = d.box.y_min;
    j["x_max"] = d.box.x_max;
    j["y_max"] = d.box.y_max;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing predictions: " + path);
}

std::vector<EvalBox> dataset_ground_truth(const DataSet& data) {
  std::vector<EvalBox> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    for (const auto& ann : data.samples[i].annotations)
      out.push_back({static_cast<int>(i), ann.class_index, ann.box});
  return out;
}

}  // namespace ddet
