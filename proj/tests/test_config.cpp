#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ddet/config.hpp"
#include "ddet/experiment.hpp"

using namespace ddet;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("empty config document yields all defaults") {
  const ExperimentConfig parsed = ExperimentConfig::from_json(json::object());
  const ExperimentConfig defaults;
  CHECK(parsed.to_json() == defaults.to_json());
  CHECK(parsed.data_seed == 1);
  CHECK(parsed.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  CHECK(parsed.teacher_epochs == 60);
  CHECK(parsed.student_epochs == 60);
  CHECK(parsed.kfold_epochs == 20);
  CHECK(parsed.augment == "combined");
  CHECK(parsed.kd.lambda_polyp == doctest::Approx(0.33));
}

TEST_CASE("config round trips through its own serialization") {
  ExperimentConfig c;
  c.data_seed = 9;
  c.seeds = {4, 8};
  c.teacher_epochs = 3;
  c.student_epochs = 7;
  c.kfold_epochs = 2;
  c.lr = 0.5;
  c.augment = "photometric";
  c.grid.scales = {30, 42, 60, 85, 120};
  c.kd.lambda_ndbe = 0.25;
  c.detect.post_nms_total = 17;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.grid.scales == c.grid.scales);
  CHECK(back.kd.lambda_ndbe == 0.25);
  CHECK(back.detect.post_nms_total == 17);
}

TEST_CASE("unknown keys are rejected with their location") {
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(json{{"lr", 0.1}, {"bogus", 1}}),
      "unknown key 'bogus' in config", std::runtime_error);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(json{{"grid", {{"strids", 5.0}}}}),
      "unknown key 'strids' in config.grid", std::runtime_error);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(json{{"kd", {{"lambda", 1.0}}}}),
      "unknown key 'lambda' in config.kd", std::runtime_error);
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json(json{{"detect", {{"nms", 0.5}}}}),
      "unknown key 'nms' in config.detect", std::runtime_error);
}

TEST_CASE("nested blocks may be partial") {
  const auto c = ExperimentConfig::from_json(json{{"grid", {{"stride", 25.0}}}});
  CHECK(c.grid.stride == 25.0);
  CHECK(c.grid.scales == GridConfig{}.scales);
  CHECK(c.grid.frame_width == GridConfig{}.frame_width);
}

TEST_CASE("config validation rejects degenerate settings") {
  ExperimentConfig c;
  c.seeds.clear();
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c = ExperimentConfig{};
  c.kfold_epochs = 0;
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  c = ExperimentConfig{};
  c.augment = "mixup";
  CHECK_THROWS_AS(c.validate(), std::runtime_error);
  CHECK_THROWS_WITH_AS(augment_variant("mixup", 1),
                       "unknown augmentation variant 'mixup'",
                       std::runtime_error);
}

TEST_CASE("derived train configs carry roles and seeds") {
  ExperimentConfig c;
  c.teacher_epochs = 11;
  c.student_epochs = 13;
  c.data_seed = 5;
  const TrainConfig teacher = c.teacher_train_config();
  CHECK(teacher.epochs == 11);
  CHECK(teacher.seed == 5);
  CHECK_FALSE(teacher.kd.enabled);

  const TrainConfig on = c.student_train_config(42, true);
  CHECK(on.epochs == 13);
  CHECK(on.seed == 42);
  CHECK(on.kd.enabled);
  CHECK(on.kd.lambda_polyp == c.kd.lambda_polyp);
  const TrainConfig off = c.student_train_config(42, false);
  CHECK_FALSE(off.kd.enabled);
}

TEST_CASE("config load reports unreadable paths") {
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.json"),
                  std::runtime_error);
  TempDir dir("ddet-config-load");
  const auto path = dir.path / "config.json";
  ExperimentConfig c;
  c.lr = 0.25;
  {
    std::ofstream out(path);
    out << c.to_json().dump(2) << '\n';
  }
  const ExperimentConfig back = ExperimentConfig::load(path.string());
  CHECK(back.lr == 0.25);
}

namespace {

// One perfectly detected polyp, or nothing at all, depending on the arm.
void write_fake_eval(const std::filesystem::path& run, const std::string& tag,
                     bool perfect) {
  const auto catalog = ClassCatalog::edd();
  const int polyp = catalog.merged_index("polyp");
  const Box box{40, 40, 120, 120};
  std::vector<EvalBox> gts = {{0, polyp, box}};
  std::vector<EvalDetection> dets;
  if (perfect) dets.push_back({0, polyp, 0.9, box});
  const auto report = evaluate(dets, gts, catalog.merged_classes);
  std::filesystem::create_directories(run);
  save_report_json((run / ("eval_" + tag + ".json")).string(), report);
}

}  // namespace

TEST_CASE("comparison report is rebuilt from per-run evaluation files") {
  TempDir dir("ddet-comparison");
  ExperimentConfig cfg;
  cfg.seeds = {1, 2};
  for (std::uint64_t seed : cfg.seeds) {
    for (bool kd_on : {false, true}) {
      const auto run = dir.path / "students" /
                       (std::string("kd-") + (kd_on ? "on" : "off") + "-s" +
                        std::to_string(seed));
      write_fake_eval(run, "held_out", kd_on);
      write_fake_eval(run, "unseen", kd_on);
    }
  }
  const json cmp = build_comparison(dir.path.string(), cfg);
  CHECK(cmp.at("mean").at("held_out").at("kd-on").at("map25").get<double>() ==
        1.0);
  CHECK(cmp.at("mean").at("held_out").at("kd-off").at("map25").get<double>() ==
        0.0);
  CHECK(cmp.at("delta").at("held_out_map25").get<double>() == 1.0);
  CHECK(cmp.at("delta").at("unseen_map25").get<double>() == 1.0);
  CHECK(cmp.at("delta").at("unseen_polyp_ap50").get<double>() == 1.0);
  CHECK(cmp.at("held_out").at("kd-on").at("map50").size() == 2);
  // Only the polyp class has ground truth, so the other AP50 entries are 0.
  CHECK(cmp.at("mean")
            .at("unseen")
            .at("kd-on")
            .at("ap50")
            .at("ndbe")
            .get<double>() == 0.0);
}
