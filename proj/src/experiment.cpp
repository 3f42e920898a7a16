#include "ddet/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ddet/plot.hpp"
#include "ddet/synthdata.hpp"

namespace fs = std::filesystem;

namespace ddet {
namespace {

bool stage_done(const fs::path& dir) { return fs::exists(dir / "DONE"); }

void mark_done(const fs::path& dir) {
  std::ofstream out(dir / "DONE");
  out << "done\n";
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// The echoed config pins the directory to one configuration; a rerun with a
// different config must not silently mix outputs.
void echo_config(const fs::path& out_dir, const ExperimentConfig& config) {
  const fs::path path = out_dir / "config.json";
  const std::string resolved = config.to_json().dump(2) + "\n";
  if (fs::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str() != resolved)
      throw std::runtime_error(
          "output directory was produced with a different config: " +
          path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << resolved;
}

void save_triple(const fs::path& dir, const GenTriple& triple) {
  save_dataset(dir / "train", triple.train);
  save_dataset(dir / "val", triple.val);
  save_dataset(dir / "test", triple.test);
}

void stage_data(const fs::path& out_dir, const ExperimentConfig& config,
                std::ostream& log) {
  const fs::path dir = out_dir / "data";
  if (stage_done(dir)) {
    log << "[data] already generated\n";
    return;
  }
  log << "[data] generating corpora (seed " << config.data_seed << ")\n";
  fs::create_directories(dir);
  save_triple(dir / "polyp", generate_polyp_proxy(config.data_seed));
  save_triple(dir / "edd", generate_edd_proxy(config.data_seed));
  save_dataset(dir / "unseen", generate_unseen_test(config.data_seed));
  mark_done(dir);
}

void evaluate_and_save(const DetectorModel& model, const DataSet& data,
                       const DetectConfig& detect_cfg, const fs::path& dir,
                       const std::string& tag) {
  const auto dets = run_inference(model, data, detect_cfg);
  write_predictions((dir / ("preds_" + tag + ".jsonl")).string(), dets,
                    data.catalog);
  const auto report =
      evaluate(dets, dataset_ground_truth(data), data.catalog.merged_classes);
  save_report_json((dir / ("eval_" + tag + ".json")).string(), report);
  save_report_csv((dir / ("eval_" + tag + ".csv")).string(), report);
}

void stage_teacher(const fs::path& out_dir, const ExperimentConfig& config,
                   std::ostream& log) {
  const fs::path dir = out_dir / "teacher";
  if (stage_done(dir)) {
    log << "[teacher] already trained\n";
    return;
  }
  log << "[teacher] training on the single-class corpus\n";
  const auto train = load_dataset(out_dir / "data" / "polyp" / "train");
  const auto val = load_dataset(out_dir / "data" / "polyp" / "val");
  const auto test = load_dataset(out_dir / "data" / "polyp" / "test");
  auto result =
      train_detector(train, val, config.teacher_train_config(), nullptr,
                     dir.string());
  save_model((dir / "teacher.json").string(), result.best_model);
  evaluate_and_save(result.best_model, test, config.detect, dir, "test");
  log << "[teacher] best val mAP50 " << result.best_val_map50 << " at epoch "
      << result.best_epoch << "\n";
  mark_done(dir);
}

std::string student_run_name(bool kd_on, std::uint64_t seed) {
  return std::string("kd-") + (kd_on ? "on" : "off") + "-s" +
         std::to_string(seed);
}

void stage_students(const fs::path& out_dir, const ExperimentConfig& config,
                    std::ostream& log) {
  const auto train = load_dataset(out_dir / "data" / "edd" / "train");
  const auto val = load_dataset(out_dir / "data" / "edd" / "val");
  const auto held_out = load_dataset(out_dir / "data" / "edd" / "test");
  const auto unseen = load_dataset(out_dir / "data" / "unseen");
  const FrozenTeacher teacher(
      load_model((out_dir / "teacher" / "teacher.json").string()));

  for (std::uint64_t seed : config.seeds) {
    for (bool kd_on : {false, true}) {
      const fs::path dir =
          out_dir / "students" / student_run_name(kd_on, seed);
      if (stage_done(dir)) {
        log << "[students] " << student_run_name(kd_on, seed) << " done\n";
        continue;
      }
      log << "[students] training " << student_run_name(kd_on, seed) << "\n";
      const TrainConfig cfg = config.student_train_config(seed, kd_on);
      // The distillation-off arm never even receives the teacher.
      auto result = train_detector(train, val, cfg,
                                   kd_on ? &teacher : nullptr, dir.string());
      save_model((dir / "student.json").string(), result.best_model);
      evaluate_and_save(result.best_model, held_out, config.detect, dir,
                        "held_out");
      evaluate_and_save(result.best_model, unseen, config.detect, dir,
                        "unseen");
      mark_done(dir);
    }
  }
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

struct ArmStats {
  std::vector<double> map25, map50, map25_75;
  std::map<std::string, std::vector<double>> ap50;
};

void stage_report(const fs::path& out_dir, const ExperimentConfig& config,
                  std::ostream& log) {
  log << "[report] aggregating evaluation results\n";
  const fs::path dir = out_dir / "reports";
  fs::create_directories(dir);
  const nlohmann::json cmp = build_comparison(out_dir.string(), config);
  write_json(dir / "comparison.json", cmp);

  // CSV: one row per (set, arm, seed).
  std::ostringstream csv;
  csv << "set,arm,seed,mAP25,mAP50,mAP25:75";
  const auto class_names = ClassCatalog::edd().merged_classes;
  for (const auto& c : class_names) csv << ",AP50:" << c;
  csv << '\n';
  char buf[64];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const char* set : {"held_out", "unseen"}) {
    for (const char* arm : {"kd-off", "kd-on"}) {
      const auto& a = cmp.at(set).at(arm);
      for (std::size_t i = 0; i < config.seeds.size(); ++i) {
        csv << set << ',' << arm << ',' << config.seeds[i] << ','
            << cell(a.at("map25")[i].get<double>()) << ','
            << cell(a.at("map50")[i].get<double>()) << ','
            << cell(a.at("map25_75")[i].get<double>());
        for (const auto& c : class_names)
          csv << ',' << cell(a.at("ap50").at(c)[i].get<double>());
        csv << '\n';
      }
    }
  }
  write_text_file((dir / "comparison.csv").string(), csv.str());

  // Markdown summary of the means and the headline deltas.
  std::ostringstream md;
  md << "# Distillation comparison\n\n";
  md << "Mean over " << config.seeds.size() << " seeds.\n\n";
  md << "| test set | arm | mAP25 | mAP50 | mAP25:75 |\n|---|---|---|---|---|\n";
  for (const char* set : {"held_out", "unseen"}) {
    for (const char* arm : {"kd-off", "kd-on"}) {
      const auto& m = cmp.at("mean").at(set).at(arm);
      std::snprintf(buf, sizeof(buf), "| %s | %s | %.4f | %.4f | %.4f |\n", set,
                    arm, m.at("map25").get<double>(),
                    m.at("map50").get<double>(), m.at("map25_75").get<double>());
      md << buf;
    }
  }
  md << "\nDelta (kd-on minus kd-off):\n\n";
  std::snprintf(buf, sizeof(buf), "- held-out mAP25: %+.4f\n",
                cmp.at("delta").at("held_out_map25").get<double>());
  md << buf;
  std::snprintf(buf, sizeof(buf), "- unseen mAP25: %+.4f\n",
                cmp.at("delta").at("unseen_map25").get<double>());
  md << buf;
  std::snprintf(buf, sizeof(buf), "- unseen polyp AP50: %+.4f\n",
                cmp.at("delta").at("unseen_polyp_ap50").get<double>());
  md << buf;
  write_text_file((dir / "comparison.md").string(), md.str());

  // Plots: PR curves at IoU 0.5 (first seed) and mean AP50 bars, per set.
  const std::uint64_t seed0 = config.seeds.front();
  for (const char* set : {"held_out", "unseen"}) {
    std::vector<BarGroup> bars;
    for (const auto& cls : class_names) {
      std::vector<PlotSeries> series;
      for (bool kd_on : {false, true}) {
        const fs::path run =
            out_dir / "students" / student_run_name(kd_on, seed0);
        const auto report = load_report_json(
            (run / ("eval_" + std::string(set) + ".json")).string());
        for (std::size_t c = 0; c < report.classes.size(); ++c) {
          if (report.classes[c].name != cls) continue;
          PlotSeries s;
          s.name = kd_on ? "kd-on" : "kd-off";
          s.points = report.classes[c].pr[5];  // IoU 0.50
          series.push_back(std::move(s));
        }
      }
      write_text_file(
          (dir / ("pr_" + std::string(set) + "_" + cls + ".svg")).string(),
          svg_pr_curves("precision-recall @ IoU 0.5: " + cls + " (" + set + ")",
                        series));
      BarGroup g;
      g.label = cls;
      for (const char* arm : {"kd-off", "kd-on"})
        g.values.push_back(cmp.at("mean")
                               .at(set)
                               .at(arm)
                               .at("ap50")
                               .at(cls)
                               .get<double>());
      bars.push_back(std::move(g));
    }
    write_text_file((dir / ("ap50_" + std::string(set) + ".svg")).string(),
                    svg_bar_chart("mean AP50 by class (" + std::string(set) + ")",
                                  {"kd-off", "kd-on"}, bars));
  }
}

}  // namespace

nlohmann::json build_comparison(const std::string& out_dir,
                                const ExperimentConfig& config) {
  const auto class_names = ClassCatalog::edd().merged_classes;
  nlohmann::json cmp;
  cmp["seeds"] = config.seeds;
  cmp["arms"] = {"kd-off", "kd-on"};
  for (const char* set : {"held_out", "unseen"}) {
    for (bool kd_on : {false, true}) {
      ArmStats stats;
      for (std::uint64_t seed : config.seeds) {
        const fs::path run = fs::path(out_dir) / "students" /
                             student_run_name(kd_on, seed);
        const auto report = load_report_json(
            (run / ("eval_" + std::string(set) + ".json")).string());
        stats.map25.push_back(report.map_at_iou(0.25));
        stats.map50.push_back(report.map_at_iou(0.5));
        stats.map25_75.push_back(report.map_25_75);
        for (const auto& cls : class_names)
          stats.ap50[cls].push_back(report.ap_at_iou(cls, 0.5));
      }
      const char* arm = kd_on ? "kd-on" : "kd-off";
      auto& a = cmp[set][arm];
      a["map25"] = stats.map25;
      a["map50"] = stats.map50;
      a["map25_75"] = stats.map25_75;
      for (const auto& [cls, vals] : stats.ap50) a["ap50"][cls] = vals;
      auto& m = cmp["mean"][set][arm];
      m["map25"] = mean(stats.map25);
      m["map50"] = mean(stats.map50);
      m["map25_75"] = mean(stats.map25_75);
      for (const auto& [cls, vals] : stats.ap50) m["ap50"][cls] = mean(vals);
    }
  }
  auto diff = [&](const char* set, const char* key) {
    return cmp["mean"][set]["kd-on"][key].get<double>() -
           cmp["mean"][set]["kd-off"][key].get<double>();
  };
  cmp["delta"]["held_out_map25"] = diff("held_out", "map25");
  cmp["delta"]["unseen_map25"] = diff("unseen", "map25");
  cmp["delta"]["unseen_polyp_ap50"] =
      cmp["mean"]["unseen"]["kd-on"]["ap50"]["polyp"].get<double>() -
      cmp["mean"]["unseen"]["kd-off"]["ap50"]["polyp"].get<double>();
  return cmp;
}

ExperimentSummary run_experiment(const std::string& out_dir,
                                 const ExperimentConfig& config,
                                 std::ostream& log) {
  const fs::path root(out_dir);
  fs::create_directories(root);
  fs::remove(root / "FAILED");
  std::string stage = "config";
  try {
    config.validate();
    echo_config(root, config);
    stage = "data";
    stage_data(root, config, log);
    stage = "teacher";
    stage_teacher(root, config, log);
    stage = "students";
    stage_students(root, config, log);
    stage = "report";
    stage_report(root, config, log);
  } catch (const std::exception& e) {
    write_json(root / "FAILED", {{"stage", stage}, {"error", e.what()}});
    throw;
  }

  ExperimentSummary summary;
  const nlohmann::json cmp = build_comparison(out_dir, config);
  summary.delta_held_out_map25 = cmp.at("delta").at("held_out_map25").get<double>();
  summary.delta_unseen_map25 = cmp.at("delta").at("unseen_map25").get<double>();
  summary.delta_unseen_polyp_ap50 =
      cmp.at("delta").at("unseen_polyp_ap50").get<double>();
  summary.comparison_path = (root / "reports" / "comparison.json").string();
  const auto teacher_state = (root / "teacher" / "state.json");
  if (fs::exists(teacher_state)) {
    std::ifstream in(teacher_state);
    summary.teacher_best_val_map50 =
        nlohmann::json::parse(in).at("best_val_map50").get<double>();
  }
  return summary;
}

}  // namespace ddet
