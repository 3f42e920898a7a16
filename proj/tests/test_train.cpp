#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddet/synthdata.hpp"
#include "ddet/train.hpp"

using namespace ddet;

namespace {

// A small three-class dataset cut from the generated corpus.
DataSet tiny_dataset(std::size_t offset, std::size_t count) {
  static const DataSet full = generate_unseen_test(404);
  DataSet out;
  out.name = "tiny";
  out.catalog = full.catalog;
  out.seed = full.seed;
  for (std::size_t i = offset; i < offset + count; ++i)
    out.samples.push_back(full.samples.at(i));
  return out;
}

TrainConfig tiny_config(std::uint64_t seed, int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  cfg.batch_images = 2;
  cfg.anchors_per_image = 16;
  cfg.max_positives_per_image = 8;
  cfg.grid.stride = 45;
  cfg.grid.scales = {60, 120};
  cfg.grid.ratios = {0.5, 1.0, 2.0};
  return cfg;
}

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

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.validate();
  cfg.epochs = 0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.momentum = 1.0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.max_positives_per_image = 100;  // exceeds anchors_per_image
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.neg_iou = 0.6;  // above pos_iou
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("frozen teacher accepts only single-class models") {
  CHECK_THROWS(FrozenTeacher(DetectorModel::init(3, GridConfig{}, 1)));
  FrozenTeacher t(DetectorModel::init(1, GridConfig{}, 1));
  CHECK(t.hash() == param_hash(t.model()));
  t.verify();
}

TEST_CASE("training runs, logs metrics and reports epoch summaries") {
  auto train = tiny_dataset(0, 8);
  auto val = tiny_dataset(8, 3);
  TempDir dir("ddet-train-smoke");
  auto cfg = tiny_config(5, 2);
  auto result = train_detector(train, val, cfg, nullptr, dir.path.string());
  CHECK(result.epochs.size() == 2);
  CHECK(result.best_epoch >= 0);
  CHECK(result.best_epoch < 2);
  CHECK(result.best_val_map50 >= 0.0);
  CHECK(result.best_val_map50 <= 1.0);
  CHECK(result.final_model.num_classes == 3);

  std::ifstream metrics(dir.path / "metrics.jsonl");
  REQUIRE(metrics.good());
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("iter"));
    CHECK(j.contains("loss"));
    CHECK(j.contains("ce"));
    CHECK(j.contains("kd"));
    CHECK(j.contains("reg"));
    CHECK(j.at("lr").get<double>() == cfg.lr);
    CHECK(j.at("kd").get<double>() == 0.0);  // no teacher attached
    ++lines;
  }
  CHECK(lines == 2 * 4);  // 8 images, 2 per batch, 2 epochs
  CHECK(std::filesystem::exists(dir.path / "state.json"));
}

TEST_CASE("training is deterministic in the seed") {
  auto train = tiny_dataset(0, 6);
  auto val = tiny_dataset(6, 2);
  auto cfg = tiny_config(9, 2);
  auto a = train_detector(train, val, cfg);
  auto b = train_detector(train, val, cfg);
  CHECK(param_hash(a.final_model) == param_hash(b.final_model));
  CHECK(a.best_epoch == b.best_epoch);
  cfg.seed = 10;
  auto c = train_detector(train, val, cfg);
  CHECK(param_hash(a.final_model) != param_hash(c.final_model));
}

TEST_CASE("disabled distillation never evaluates the teacher") {
  auto train = tiny_dataset(0, 6);
  auto val = tiny_dataset(6, 2);
  auto cfg = tiny_config(11, 2);
  cfg.kd.enabled = false;
  FrozenTeacher teacher(DetectorModel::init(1, cfg.grid, 77));
  auto without = train_detector(train, val, cfg, nullptr);
  auto with = train_detector(train, val, cfg, &teacher);
  CHECK(param_hash(without.final_model) == param_hash(with.final_model));
}

TEST_CASE("enabled distillation changes the trajectory and logs its term") {
  auto train = tiny_dataset(0, 6);
  auto val = tiny_dataset(6, 2);
  auto cfg = tiny_config(12, 1);
  FrozenTeacher teacher(DetectorModel::init(1, cfg.grid, 78));
  TempDir dir("ddet-train-kd");
  cfg.kd.enabled = true;
  auto kd_on = train_detector(train, val, cfg, &teacher, dir.path.string());
  cfg.kd.enabled = false;
  auto kd_off = train_detector(train, val, cfg, &teacher);
  CHECK(param_hash(kd_on.final_model) != param_hash(kd_off.final_model));

  std::ifstream metrics(dir.path / "metrics.jsonl");
  std::string line;
  bool kd_seen = false;
  while (std::getline(metrics, line))
    if (nlohmann::json::parse(line).at("kd").get<double>() > 0.0) kd_seen = true;
  CHECK(kd_seen);
}

TEST_CASE("resume from an epoch checkpoint reproduces the full run") {
  auto train = tiny_dataset(0, 6);
  auto val = tiny_dataset(6, 2);
  TempDir one_shot("ddet-train-oneshot");
  TempDir resumed("ddet-train-resumed");

  auto full_cfg = tiny_config(21, 4);
  auto full = train_detector(train, val, full_cfg, nullptr, one_shot.path.string());

  auto half_cfg = tiny_config(21, 2);
  train_detector(train, val, half_cfg, nullptr, resumed.path.string());
  auto cont = train_detector(train, val, full_cfg, nullptr, resumed.path.string());

  CHECK(param_hash(full.final_model) == param_hash(cont.final_model));
  CHECK(param_hash(full.best_model) == param_hash(cont.best_model));
  CHECK(full.best_epoch == cont.best_epoch);
  CHECK(full.best_val_map50 == cont.best_val_map50);
  REQUIRE(cont.epochs.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(full.epochs[e].mean_loss == cont.epochs[e].mean_loss);
    CHECK(full.epochs[e].val_map50 == cont.epochs[e].val_map50);
  }

  // A finished run resumes into a no-op.
  auto again = train_detector(train, val, full_cfg, nullptr, resumed.path.string());
  CHECK(param_hash(again.final_model) == param_hash(full.final_model));

  // Metrics files agree line for line.
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(one_shot.path / "metrics.jsonl") ==
        slurp(resumed.path / "metrics.jsonl"));
}

TEST_CASE("an exploding learning rate aborts with a diagnostic") {
  auto train = tiny_dataset(0, 4);
  auto val = tiny_dataset(4, 2);
  auto cfg = tiny_config(31, 3);
  cfg.lr = 1e14;
  try {
    train_detector(train, val, cfg);
    FAIL("expected divergence");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("kfold row fixture: 82.4 85.5 85.1 averages to 84.3") {
  auto row = make_kfold_row("combined", {82.4, 85.5, 85.1});
  const double expected = (82.4 + 85.5 + 85.1) / 3.0;
  CHECK(std::abs(row.average - expected) < 1e-12);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1f", row.average);
  CHECK(std::string(buf) == "84.3");

  KfoldTable table;
  table.k = 3;
  table.rows = {row};
  const std::string md = format_kfold_markdown(table);
  CHECK(md ==
        "| Augmentation | K1 | K2 | K3 | Average |\n"
        "|---|---|---|---|---|\n"
        "| combined | 82.4 | 85.5 | 85.1 | 84.3 |\n");
}

TEST_CASE("kfold sweep trains every variant on every fold") {
  auto data = tiny_dataset(0, 9);
  auto cfg = tiny_config(41, 1);
  auto table = run_kfold(data, 3, cfg);
  CHECK(table.k == 3);
  REQUIRE(table.rows.size() == 4);
  CHECK(table.rows[0].variant == "none");
  CHECK(table.rows[1].variant == "geometric");
  CHECK(table.rows[2].variant == "photometric");
  CHECK(table.rows[3].variant == "combined");
  for (const auto& row : table.rows) {
    REQUIRE(row.fold_map50.size() == 3);
    double total = 0.0;
    for (double v : row.fold_map50) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
      total += v;
    }
    CHECK(std::abs(row.average - total / 3.0) < 1e-12);
  }
}
