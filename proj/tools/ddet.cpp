// Command line front end: data generation, training, evaluation, the full
// distillation experiment, and the augmentation k-fold sweep.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddet/config.hpp"
#include "ddet/experiment.hpp"
#include "ddet/plot.hpp"
#include "ddet/synthdata.hpp"
#include "ddet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ddet;

namespace {

struct GenArgs {
  std::string out;
  std::string corpus;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  std::string train_dir, val_dir, out;
  std::string role;
  std::string teacher_ckpt;
  std::string config_path;
  std::string kd = "on";
  std::string augment;
  int epochs = -1;
  std::int64_t seed = -1;
};

struct EvalArgs {
  std::string model, data_dir, out, predictions;
};

struct ExperimentArgs {
  std::string config_path, out;
};

struct KfoldArgs {
  std::string data_dir, out, config_path;
  int k = 3;
  std::int64_t seed = -1;
};

int cmd_gen_data(const GenArgs& a) {
  fs::create_directories(a.out);
  json summary;
  if (a.corpus == "polyp" || a.corpus == "edd") {
    const GenTriple triple = a.corpus == "polyp" ? generate_polyp_proxy(a.seed)
                                                 : generate_edd_proxy(a.seed);
    save_dataset(fs::path(a.out) / "train", triple.train);
    save_dataset(fs::path(a.out) / "val", triple.val);
    save_dataset(fs::path(a.out) / "test", triple.test);
    summary = {{"corpus", a.corpus},
               {"seed", a.seed},
               {"train_images", triple.train.samples.size()},
               {"val_images", triple.val.samples.size()},
               {"test_images", triple.test.samples.size()}};
  } else if (a.corpus == "unseen") {
    const DataSet ds = generate_unseen_test(a.seed);
    save_dataset(a.out, ds);
    summary = {{"corpus", a.corpus},
               {"seed", a.seed},
               {"test_images", ds.samples.size()}};
  } else {
    throw std::runtime_error("unknown corpus '" + a.corpus +
                             "' (expected polyp, edd or unseen)");
  }
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a) {
  ExperimentConfig base = a.config_path.empty()
                              ? ExperimentConfig{}
                              : ExperimentConfig::load(a.config_path);
  if (!a.augment.empty()) base.augment = a.augment;

  const bool student = a.role == "student";
  if (!student && a.role != "teacher")
    throw std::runtime_error("role must be teacher or student");
  if (student && a.teacher_ckpt.empty())
    throw std::runtime_error("the student role requires --teacher-ckpt");
  const bool kd_on = a.kd == "on";
  if (a.kd != "on" && a.kd != "off")
    throw std::runtime_error("--kd must be on or off");

  TrainConfig cfg = student
                        ? base.student_train_config(base.seeds.front(), kd_on)
                        : base.teacher_train_config();
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(a.seed);
    cfg.augment = augment_variant(base.augment, cfg.seed);
  }

  const DataSet train_data = load_dataset(a.train_dir);
  const DataSet val_data = load_dataset(a.val_dir);

  std::unique_ptr<FrozenTeacher> teacher;
  if (student) {
    teacher = std::make_unique<FrozenTeacher>(load_model(a.teacher_ckpt));
    if (!kd_on) teacher.reset();  // ablation arm never touches the teacher
  }

  auto result = train_detector(train_data, val_data, cfg, teacher.get(), a.out);
  save_model((fs::path(a.out) / "model.json").string(), result.best_model);
  save_model((fs::path(a.out) / "final.json").string(), result.final_model);
  json summary = {{"role", a.role},
                  {"kd", student ? (kd_on ? "on" : "off") : "n/a"},
                  {"epochs", cfg.epochs},
                  {"best_epoch", result.best_epoch},
                  {"best_val_map50", result.best_val_map50},
                  {"model", (fs::path(a.out) / "model.json").string()}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const DetectorModel model = load_model(a.model);
  const DataSet data = load_dataset(a.data_dir);
  std::vector<EvalDetection> dets;
  if (a.predictions.empty()) {
    DetectConfig dc;
    dets = run_inference(model, data, dc);
  } else {
    dets = read_predictions(a.predictions, data.catalog);
  }
  const auto report =
      evaluate(dets, dataset_ground_truth(data), data.catalog.merged_classes);
  fs::create_directories(a.out);
  save_report_json((fs::path(a.out) / "eval.json").string(), report);
  save_report_csv((fs::path(a.out) / "eval.csv").string(), report);
  json summary = {{"map25", report.map_at_iou(0.25)},
                  {"map50", report.map_at_iou(0.5)},
                  {"map25_75", report.map_25_75},
                  {"detections", report.detection_count},
                  {"ground_truth", report.gt_total}};
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_experiment(const ExperimentArgs& a) {
  const ExperimentConfig cfg = a.config_path.empty()
                                   ? ExperimentConfig{}
                                   : ExperimentConfig::load(a.config_path);
  const auto summary = run_experiment(a.out, cfg, std::cout);
  json j = {{"teacher_best_val_map50", summary.teacher_best_val_map50},
            {"delta_held_out_map25", summary.delta_held_out_map25},
            {"delta_unseen_map25", summary.delta_unseen_map25},
            {"delta_unseen_polyp_ap50", summary.delta_unseen_polyp_ap50},
            {"comparison", summary.comparison_path}};
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_kfold(const KfoldArgs& a) {
  ExperimentConfig base = a.config_path.empty()
                              ? ExperimentConfig{}
                              : ExperimentConfig::load(a.config_path);
  TrainConfig cfg = base.teacher_train_config();
  cfg.epochs = base.kfold_epochs;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  const DataSet data = load_dataset(a.data_dir);
  fs::create_directories(a.out);
  const KfoldTable table =
      run_kfold(data, a.k, cfg, nullptr, (fs::path(a.out) / "runs").string());
  const std::string md = format_kfold_markdown(table);
  write_text_file((fs::path(a.out) / "kfold.md").string(), md);
  json j;
  j["k"] = table.k;
  for (const auto& row : table.rows) {
    json rj = {{"variant", row.variant},
               {"fold_map50", row.fold_map50},
               {"average", row.average}};
    j["rows"].push_back(rj);
  }
  std::ofstream out(fs::path(a.out) / "kfold.json");
  out << j.dump(2) << '\n';
  std::cout << md;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teacher-student detection distillation workbench"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--corpus", gen.corpus, "polyp, edd or unseen")->required();
  gen_cmd->add_option("--seed", gen.seed, "generation seed");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--train-data", tr.train_dir, "training dataset dir")->required();
  train_cmd->add_option("--val-data", tr.val_dir, "validation dataset dir")->required();
  train_cmd->add_option("--out", tr.out, "run directory")->required();
  train_cmd->add_option("--role", tr.role, "teacher or student")->required();
  train_cmd->add_option("--teacher-ckpt", tr.teacher_ckpt,
                        "teacher checkpoint (required for students)");
  train_cmd->add_option("--config", tr.config_path, "config json");
  train_cmd->add_option("--kd", tr.kd, "distillation on|off (students)");
  train_cmd->add_option("--augment", tr.augment,
                        "none|geometric|photometric|combined");
  train_cmd->add_option("--epochs", tr.epochs, "override epoch count");
  train_cmd->add_option("--seed", tr.seed, "override run seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a dataset");
  eval_cmd->add_option("--model", ev.model, "model checkpoint")->required();
  eval_cmd->add_option("--data", ev.data_dir, "dataset dir")->required();
  eval_cmd->add_option("--out", ev.out, "output directory")->required();
  eval_cmd->add_option("--predictions", ev.predictions,
                       "score externally produced predictions instead of running the model");

  ExperimentArgs ex;
  auto* exp_cmd = app.add_subcommand("experiment", "run the full distillation comparison");
  exp_cmd->add_option("--config", ex.config_path, "config json");
  exp_cmd->add_option("--out", ex.out, "experiment directory")->required();

  KfoldArgs kf;
  auto* kfold_cmd = app.add_subcommand("kfold", "augmentation k-fold sweep");
  kfold_cmd->add_option("--data", kf.data_dir, "dataset dir")->required();
  kfold_cmd->add_option("--out", kf.out, "output directory")->required();
  kfold_cmd->add_option("--k", kf.k, "fold count");
  kfold_cmd->add_option("--config", kf.config_path, "config json");
  kfold_cmd->add_option("--seed", kf.seed, "override run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0)
      std::cerr << json{{"error", e.what()}}.dump() << '\n';
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (exp_cmd->parsed()) return cmd_experiment(ex);
    if (kfold_cmd->parsed()) return cmd_kfold(kf);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
