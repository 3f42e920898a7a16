#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddet/eval.hpp"
#include "ddet/rng.hpp"
#include "support/oracles.hpp"

using namespace ddet;

TEST_CASE("evaluation thresholds run 0.25 to 0.75 in steps of 0.05") {
  auto t = eval_thresholds();
  REQUIRE(t.size() == 11);
  CHECK(t.front() == doctest::Approx(0.25));
  CHECK(t[5] == doctest::Approx(0.5));
  CHECK(t.back() == doctest::Approx(0.75));
}

TEST_CASE("matching marks duplicates as false positives") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}},
                              {0, 0, Box{20, 20, 30, 30}}};
  std::vector<EvalDetection> dets = {
      {0, 0, 0.9, Box{0, 0, 10, 10}},
      {0, 0, 0.8, Box{0, 0, 10, 10}},   // same gt already taken
      {0, 0, 0.7, Box{20, 20, 30, 30}},
  };
  auto m = match_detections(dets, gts, 0, 0.5);
  REQUIRE(m.tp.size() == 3);
  CHECK(m.gt_count == 2);
  CHECK(m.tp[0] == 1);
  CHECK(m.tp[1] == 0);
  CHECK(m.tp[2] == 1);
  // AP: precision (1, 1/2, 2/3) at recall (1/2, 1/2, 1).
  CHECK(average_precision(m.tp, m.gt_count) ==
        doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)));
}

TEST_CASE("detections only match ground truth of their own image and class") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}},
                              {1, 1, Box{0, 0, 10, 10}}};
  std::vector<EvalDetection> dets = {
      {1, 0, 0.9, Box{0, 0, 10, 10}},  // right box, wrong image for class 0
      {0, 1, 0.9, Box{0, 0, 10, 10}},  // class 1 lives in image 1
  };
  auto m0 = match_detections(dets, gts, 0, 0.5);
  CHECK(m0.tp == std::vector<char>{0});
  auto m1 = match_detections(dets, gts, 1, 0.5);
  CHECK(m1.tp == std::vector<char>{0});
}

TEST_CASE("greedy matching prefers the highest-IoU free ground truth") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}},
                              {0, 0, Box{0, 0, 12, 12}}};
  std::vector<EvalDetection> dets = {
      {0, 0, 0.9, Box{0, 0, 11, 11}},  // closer to the 12x12 ground truth
      {0, 0, 0.8, Box{0, 0, 10, 10}},
  };
  auto m = match_detections(dets, gts, 0, 0.5);
  CHECK(m.tp == std::vector<char>{1, 1});
}

TEST_CASE("rank order breaks score ties by image then input position") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}}};
  // Equal scores; the detection in the lower image id ranks first and takes
  // the only ground truth.
  std::vector<EvalDetection> dets = {
      {5, 0, 0.9, Box{0, 0, 10, 10}},
      {0, 0, 0.9, Box{0, 0, 10, 10}},
  };
  auto m = match_detections(dets, gts, 0, 0.5);
  CHECK(m.tp == std::vector<char>{1, 0});
}

TEST_CASE("average precision edge cases") {
  CHECK(average_precision({1, 1}, 0) == 0.0);
  CHECK(average_precision({}, 5) == 0.0);
  CHECK(average_precision({0, 0, 0}, 2) == 0.0);
  CHECK(average_precision({1}, 1) == doctest::Approx(1.0));
  CHECK(average_precision({1, 1, 1}, 3) == doctest::Approx(1.0));
  // A leading false positive caps precision below 1 everywhere.
  CHECK(average_precision({0, 1}, 1) == doctest::Approx(0.5));
}

TEST_CASE("evaluate splits quality by threshold and skips absent classes") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}}};
  // IoU with the ground truth is exactly (10*6)/(100+60-60) = 0.6.
  std::vector<EvalDetection> dets = {{0, 0, 0.9, Box{0, 0, 10, 6}}};
  auto report = evaluate(dets, gts, {"polyp", "other"});
  REQUIRE(report.classes.size() == 2);
  CHECK(report.classes[0].gt_count == 1);
  CHECK(report.classes[1].gt_count == 0);
  CHECK(report.ap_at_iou("polyp", 0.5) == doctest::Approx(1.0));
  CHECK(report.ap_at_iou("polyp", 0.6) == doctest::Approx(1.0));
  CHECK(report.ap_at_iou("polyp", 0.65) == doctest::Approx(0.0));
  CHECK(report.ap_at_iou("other", 0.5) == 0.0);
  // The class with no ground truth is excluded from the mean, so the mean
  // equals the single present class.
  CHECK(report.map_at_iou(0.5) == doctest::Approx(1.0));
  CHECK(report.map_at_iou(0.75) == doctest::Approx(0.0));
  // 8 of 11 thresholds (0.25..0.60) score 1, the rest 0.
  CHECK(report.map_25_75 == doctest::Approx(8.0 / 11.0));
  CHECK_THROWS(report.map_at_iou(0.37));
  CHECK_THROWS(report.ap_at_iou("nope", 0.5));
}

TEST_CASE("evaluate with no ground truth at all reports zero means") {
  std::vector<EvalDetection> dets = {{0, 0, 0.9, Box{0, 0, 10, 10}}};
  auto report = evaluate(dets, {}, {"polyp"});
  CHECK(report.map_at_iou(0.5) == 0.0);
  CHECK(report.map_25_75 == 0.0);
}

namespace {

// Random matching scenes with clusters so duplicate/overlap cases occur.
void random_scene(std::uint64_t seed, std::vector<EvalDetection>& dets,
                  std::vector<EvalBox>& gts, int classes) {
  Rng rng(seed, 0);
  dets.clear();
  gts.clear();
  const int images = 1 + static_cast<int>(rng.uniform_u64(4));
  for (int img = 0; img < images; ++img) {
    const int n_gt = static_cast<int>(rng.uniform_u64(5));
    for (int g = 0; g < n_gt; ++g) {
      const double x = rng.uniform(0.0, 80.0), y = rng.uniform(0.0, 80.0);
      const Box b{x, y, x + rng.uniform(5.0, 30.0), y + rng.uniform(5.0, 30.0)};
      gts.push_back({img, static_cast<int>(rng.uniform_u64(classes)), b});
      const int n_det = static_cast<int>(rng.uniform_u64(4));
      for (int d = 0; d < n_det; ++d) {
        Box db{b.x_min + rng.uniform(-8.0, 8.0), b.y_min + rng.uniform(-8.0, 8.0),
               b.x_max + rng.uniform(-8.0, 8.0), b.y_max + rng.uniform(-8.0, 8.0)};
        if (!db.valid()) continue;
        dets.push_back({img, static_cast<int>(rng.uniform_u64(classes)),
                        rng.uniform(), db});
      }
    }
    // A few background false positives.
    for (int d = 0; d < 2; ++d) {
      const double x = rng.uniform(0.0, 90.0), y = rng.uniform(0.0, 90.0);
      dets.push_back({img, static_cast<int>(rng.uniform_u64(classes)),
                      rng.uniform(),
                      Box{x, y, x + rng.uniform(4.0, 20.0), y + rng.uniform(4.0, 20.0)}});
    }
  }
}

}  // namespace

TEST_CASE("average precision agrees with the score-cut oracle") {
  std::vector<EvalDetection> dets;
  std::vector<EvalBox> gts;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    random_scene(seed, dets, gts, 2);
    for (double t : {0.25, 0.5, 0.75}) {
      for (int c = 0; c < 2; ++c) {
        auto m = match_detections(dets, gts, c, t);
        const double fast = average_precision(m.tp, m.gt_count);
        const double slow = oracles::reference_ap(dets, gts, c, t);
        CHECK(std::abs(fast - slow) <= 1e-12);
      }
    }
  }
}

TEST_CASE("report round-trips through json and prints a stable csv row") {
  std::vector<EvalBox> gts = {{0, 0, Box{0, 0, 10, 10}},
                              {0, 0, Box{20, 20, 30, 30}}};
  std::vector<EvalDetection> dets = {
      {0, 0, 0.9, Box{0, 0, 10, 10}},
      {0, 0, 0.8, Box{0, 0, 10, 10}},
      {0, 0, 0.7, Box{20, 20, 30, 30}},
  };
  auto report = evaluate(dets, gts, {"polyp"});
  save_report_json("report_rt.json", report);
  auto loaded = load_report_json("report_rt.json");
  CHECK(loaded.map_25_75 == report.map_25_75);
  CHECK(loaded.map_at == report.map_at);
  REQUIRE(loaded.classes.size() == 1);
  CHECK(loaded.classes[0].ap == report.classes[0].ap);
  CHECK(loaded.classes[0].gt_count == 2);
  CHECK(loaded.classes[0].pr.size() == 11);
  CHECK(loaded.classes[0].pr[0].size() == 3);
  std::remove("report_rt.json");

  save_report_csv("report_rt.csv", report);
  std::ifstream in("report_rt.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  in.close();
  CHECK(header == "mAP25,mAP50,mAP25:75,AP50:polyp");
  CHECK(row == "0.833333,0.833333,0.833333,0.833333");
  std::remove("report_rt.csv");
}

TEST_CASE("prediction files round-trip and reject unknown classes") {
  const auto catalog = ClassCatalog::edd();
  std::vector<EvalDetection> dets = {
      {0, 0, 0.75, Box{1.5, 2.5, 10.25, 12.0}},
      {3, 2, 0.25, Box{0, 0, 5, 5}},
  };
  write_predictions("preds_rt.jsonl", dets, catalog);
  auto loaded = read_predictions("preds_rt.jsonl", catalog);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].image == 0);
  CHECK(loaded[0].class_index == 0);
  CHECK(loaded[0].score == 0.75);
  CHECK(loaded[0].box.x_max == 10.25);
  CHECK(loaded[1].class_index == 2);
  std::remove("preds_rt.jsonl");

  std::ofstream bad("preds_bad.jsonl");
  bad << R"({"image":0,"class":"polyp","score":0.5,"x_min":0,"y_min":0,"x_max":5,"y_max":5})" << '\n';
  bad << R"({"image":0,"class":"dragon","score":0.5,"x_min":0,"y_min":0,"x_max":5,"y_max":5})" << '\n';
  bad.close();
  try {
    read_predictions("preds_bad.jsonl", ClassCatalog::edd());
    FAIL("expected an unknown-class error");
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dragon") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  std::remove("preds_bad.jsonl");
}

TEST_CASE("dataset ground truth flattens sample annotations") {
  DataSet ds;
  ds.catalog = ClassCatalog::edd();
  ImageSample s1;
  s1.annotations = {{Box{0, 0, 5, 5}, 0}, {Box{10, 10, 20, 20}, 2}};
  ImageSample s2;
  s2.annotations = {{Box{1, 1, 4, 4}, 1}};
  ds.samples = {s1, s2};
  auto gt = dataset_ground_truth(ds);
  REQUIRE(gt.size() == 3);
  CHECK(gt[0].image == 0);
  CHECK(gt[1].class_index == 2);
  CHECK(gt[2].image == 1);
  CHECK(gt[2].class_index == 1);
}
