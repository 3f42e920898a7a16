#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "ddet/detector.hpp"
#include "ddet/rng.hpp"

using namespace ddet;

namespace {

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * 8) == 0);
}

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img{w, h, {}};
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  Rng rng(seed, 0);
  for (auto& p : img.pixels) p = static_cast<unsigned char>(rng.uniform_u64(256));
  return img;
}

}  // namespace

TEST_CASE("default grid enumerates 15x15 centers x 9 shapes") {
  auto grid = build_grid(GridConfig{});
  CHECK(grid.anchors.size() == 2025);
  // First center (7.5, 7.5); first shape scale 30, ratio 0.5:
  // 30*sqrt(0.5) x 30/sqrt(0.5), clipped at the frame edge.
  const double w = 30.0 * std::sqrt(0.5), h = 30.0 / std::sqrt(0.5);
  CHECK(grid.anchors[0].x_min == doctest::Approx(0.0));  // 7.5 - w/2 < 0
  CHECK(grid.anchors[0].x_max == doctest::Approx(7.5 + w / 2));
  CHECK(grid.anchors[0].y_max == doctest::Approx(7.5 + h / 2));
  // Second anchor: same center, ratio 1.0.
  CHECK(grid.anchors[1].x_max == doctest::Approx(22.5));
  CHECK(grid.anchors[1].y_max == doctest::Approx(22.5));
  // Row-major centers: anchor 9 moves one stride in x, same shape slot.
  CHECK(grid.anchors[9].center_x() == doctest::Approx(22.5));
  CHECK(grid.anchors[9].y_max == doctest::Approx(grid.anchors[0].y_max));
  for (const Box& b : grid.anchors) {
    CHECK(b.valid());
    CHECK(b.x_min >= 0.0);
    CHECK(b.y_min >= 0.0);
    CHECK(b.x_max <= 225.0);
    CHECK(b.y_max <= 225.0);
  }
}

TEST_CASE("single coarse cell gives one centered anchor") {
  GridConfig cfg;
  cfg.stride = 225;
  cfg.scales = {100};
  cfg.ratios = {1.0};
  auto grid = build_grid(cfg);
  REQUIRE(grid.anchors.size() == 1);
  CHECK(grid.anchors[0].x_min == doctest::Approx(62.5));
  CHECK(grid.anchors[0].y_min == doctest::Approx(62.5));
  CHECK(grid.anchors[0].x_max == doctest::Approx(162.5));
  CHECK(grid.anchors[0].y_max == doctest::Approx(162.5));
}

TEST_CASE("grid config validation") {
  GridConfig cfg;
  cfg.stride = 0;
  CHECK_THROWS(build_grid(cfg));
  cfg = GridConfig{};
  cfg.scales.clear();
  CHECK_THROWS(build_grid(cfg));
  cfg = GridConfig{};
  cfg.ratios = {-1.0};
  CHECK_THROWS(build_grid(cfg));
}

TEST_CASE("softmax worked example and invariants") {
  const double logits[2] = {0.0, std::log(3.0)};
  double p[2];
  softmax(logits, 2, p);
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));

  // Shifting all logits leaves probabilities unchanged (max subtraction).
  const double big[3] = {1000.0, 1001.0, 999.0};
  const double small[3] = {0.0, 1.0, -1.0};
  double pb[3], ps[3];
  softmax(big, 3, pb);
  softmax(small, 3, ps);
  double total = 0;
  for (int i = 0; i < 3; ++i) {
    CHECK(pb[i] == doctest::Approx(ps[i]));
    total += pb[i];
  }
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("model init is seeded, bounded and zero-biased") {
  auto m1 = DetectorModel::init(3, GridConfig{}, 42);
  auto m2 = DetectorModel::init(3, GridConfig{}, 42);
  auto m3 = DetectorModel::init(3, GridConfig{}, 43);
  CHECK(m1.cls_w.size() == 4 * 38);
  CHECK(m1.cls_b.size() == 4);
  CHECK(m1.reg_w.size() == 12 * 38);
  CHECK(m1.reg_b.size() == 12);
  CHECK(m1.param_count() == 4 * 38 + 4 + 12 * 38 + 12);
  CHECK(bits_equal(m1.cls_w, m2.cls_w));
  CHECK(bits_equal(m1.reg_w, m2.reg_w));
  CHECK_FALSE(bits_equal(m1.cls_w, m3.cls_w));
  for (double w : m1.cls_w) {
    CHECK(w >= -0.01);
    CHECK(w <= 0.01);
  }
  for (double b : m1.cls_b) CHECK(b == 0.0);
  for (double b : m1.reg_b) CHECK(b == 0.0);
}

TEST_CASE("forward computes the linear heads") {
  DetectorModel m;
  m.num_classes = 1;
  m.dim = 2;
  m.cls_w = {1.0, 0.0,   // background row
             0.5, -1.0}; // class row
  m.cls_b = {0.25, 0.0};
  m.reg_w = {0.0, 1.0,
             1.0, 0.0,
             2.0, 2.0,
             0.0, 0.0};
  m.reg_b = {0.0, 0.1, 0.0, -3.0};
  const double phi[2] = {2.0, 3.0};
  double logits[2], deltas[4];
  m.forward(phi, logits, deltas);
  CHECK(logits[0] == doctest::Approx(2.25));
  CHECK(logits[1] == doctest::Approx(-2.0));
  CHECK(deltas[0] == doctest::Approx(3.0));
  CHECK(deltas[1] == doctest::Approx(2.1));
  CHECK(deltas[2] == doctest::Approx(10.0));
  CHECK(deltas[3] == doctest::Approx(-3.0));
}

TEST_CASE("parameter hash tracks every tensor") {
  auto m = DetectorModel::init(2, GridConfig{}, 5);
  const auto h0 = param_hash(m);
  CHECK(param_hash(m) == h0);
  m.cls_b[1] += 1e-12;
  CHECK(param_hash(m) != h0);
  m.cls_b[1] -= 1e-12;
  // -= does not round-trip exactly for arbitrary values, so rebuild instead.
  m = DetectorModel::init(2, GridConfig{}, 5);
  CHECK(param_hash(m) == h0);
  m.reg_w[17] = -m.reg_w[17];
  CHECK(param_hash(m) != h0);
}

TEST_CASE("checkpoint round-trips weights bit-exactly") {
  auto m = DetectorModel::init(3, GridConfig{}, 1234);
  m.cls_w[5] = 0.1 + 0.2;          // a value with a long binary tail
  m.reg_w[7] = 1.0 / 3.0;
  m.cls_b[2] = -7.25e-19;
  m.grid_config.scales = {30, 42, 60, 85, 120};
  const std::string path = "ckpt_roundtrip.json";
  save_model(path, m);
  auto r = load_model(path);
  CHECK(r.num_classes == m.num_classes);
  CHECK(r.dim == m.dim);
  CHECK(r.descriptor_version == m.descriptor_version);
  CHECK(r.grid_config == m.grid_config);
  CHECK(bits_equal(r.cls_w, m.cls_w));
  CHECK(bits_equal(r.cls_b, m.cls_b));
  CHECK(bits_equal(r.reg_w, m.reg_w));
  CHECK(bits_equal(r.reg_b, m.reg_b));
  CHECK(param_hash(r) == param_hash(m));
  std::remove(path.c_str());

  CHECK_THROWS(load_model("no_such_model.json"));
  std::ofstream bad("ckpt_bad.json");
  bad << "{\"format\": \"ddet-model\", \"num_classes\": 2}";
  bad.close();
  CHECK_THROWS(load_model("ckpt_bad.json"));
  std::remove("ckpt_bad.json");
}

TEST_CASE("target assignment bands") {
  ProposalGrid grid;
  grid.config = GridConfig{};
  grid.anchors = {Box{0, 0, 10, 10}, Box{20, 0, 30, 10}, Box{5, 0, 15, 10}};
  std::vector<Annotation> gts = {{Box{0, 0, 10, 10}, 0}};
  auto t = assign_targets(grid, gts);
  REQUIRE(t.size() == 3);
  CHECK(t[0].label == 1);  // IoU 1.0
  CHECK(t[0].gt == 0);
  CHECK(t[1].label == 0);  // IoU 0.0
  CHECK(t[1].gt == -1);
  CHECK(t[2].label == -1); // IoU 1/3 sits between the bands
  CHECK(t[2].gt == 0);     // the overlapped annotation is still recorded
}

TEST_CASE("no annotations means all background") {
  ProposalGrid grid;
  grid.anchors = {Box{0, 0, 10, 10}, Box{20, 0, 30, 10}};
  auto t = assign_targets(grid, {});
  for (const auto& a : t) {
    CHECK(a.label == 0);
    CHECK(a.gt == -1);
  }
}

TEST_CASE("every annotation claims its best anchor") {
  ProposalGrid grid;
  grid.anchors = {Box{0, 0, 10, 10}, Box{100, 100, 140, 140}};
  // Overlaps anchor 1 at IoU (20*20)/(1600+400-400) = 0.25: below both
  // bands, but the claim still forces one positive.
  std::vector<Annotation> gts = {{Box{120, 120, 140, 140}, 2}};
  auto t = assign_targets(grid, gts);
  CHECK(t[1].label == 3);
  CHECK(t[1].gt == 0);
  CHECK(t[0].label == 0);
}

TEST_CASE("contested claims resolve by IoU then annotation order") {
  ProposalGrid grid;
  grid.anchors = {Box{0, 0, 10, 10}};
  std::vector<Annotation> both = {{Box{1, 1, 11, 11}, 0}, {Box{0, 0, 10, 10}, 1}};
  auto t = assign_targets(grid, both);
  CHECK(t[0].label == 2);  // the exact match wins
  CHECK(t[0].gt == 1);

  std::vector<Annotation> tied = {{Box{0, 0, 10, 10}, 1}, {Box{0, 0, 10, 10}, 2}};
  t = assign_targets(grid, tied);
  CHECK(t[0].label == 2);  // equal IoU keeps the earlier annotation
  CHECK(t[0].gt == 0);
}

TEST_CASE("claim ties across anchors go to the lower anchor index") {
  ProposalGrid grid;
  grid.anchors = {Box{0, 0, 10, 10}, Box{0, 0, 10, 10}, Box{50, 50, 60, 60}};
  std::vector<Annotation> gts = {{Box{2, 2, 12, 12}, 0}};
  auto t = assign_targets(grid, gts);
  CHECK(t[0].label == 1);
  CHECK(t[1].label != 1);  // duplicate anchor falls back to its band label
}

TEST_CASE("detect returns clipped, thresholded, deduplicated output") {
  GridConfig cfg;
  cfg.stride = 45;
  cfg.scales = {60};
  cfg.ratios = {1.0};
  auto grid = build_grid(cfg);
  REQUIRE(grid.anchors.size() == 25);
  auto model = DetectorModel::init(2, cfg, 99);
  Image img = noise_image(225, 225, 4);

  DetectConfig dc;
  auto dets = detect(model, img, grid, dc);
  auto again = detect(model, img, grid, dc);
  REQUIRE(dets.size() == again.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(dets[i].score == again[i].score);
    CHECK(dets[i].anchor == again[i].anchor);
  }

  CHECK(dets.size() <= static_cast<std::size_t>(dc.post_nms_total));
  CHECK(!dets.empty());  // near-uniform heads clear a 0.05 floor
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& det = dets[i];
    CHECK(det.box.valid());
    CHECK(det.box.x_min >= 0.0);
    CHECK(det.box.y_min >= 0.0);
    CHECK(det.box.x_max <= 225.0);
    CHECK(det.box.y_max <= 225.0);
    CHECK(det.score >= dc.score_floor);
    CHECK(det.class_index >= 0);
    CHECK(det.class_index < 2);
    if (i > 0) {
      CHECK((dets[i - 1].score > det.score ||
             (dets[i - 1].score == det.score && dets[i - 1].anchor < det.anchor)));
    }
    for (std::size_t k = 0; k < i; ++k)
      if (dets[k].class_index == det.class_index)
        CHECK(iou(dets[k].box, det.box) < dc.nms_iou);
  }

  DetectConfig strict = dc;
  strict.score_floor = 0.999;
  CHECK(detect(model, img, grid, strict).empty());

  DetectConfig capped = dc;
  capped.post_nms_total = 3;
  CHECK(detect(model, img, grid, capped).size() <= 3);
}

TEST_CASE("zero regression deltas reproduce the anchor box") {
  GridConfig cfg;
  cfg.stride = 225;
  cfg.scales = {100};
  cfg.ratios = {1.0};
  auto grid = build_grid(cfg);
  DetectorModel m;
  m.num_classes = 1;
  m.dim = kDescriptorDim;
  m.grid_config = cfg;
  m.cls_w.assign(2 * kDescriptorDim, 0.0);
  m.cls_b = {0.0, 4.0};  // foreground wins
  m.reg_w.assign(4 * kDescriptorDim, 0.0);
  m.reg_b.assign(4, 0.0);
  Image img = noise_image(225, 225, 11);
  auto dets = detect(m, img, grid);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].box.x_min == doctest::Approx(62.5));
  CHECK(dets[0].box.y_max == doctest::Approx(162.5));
  CHECK(dets[0].class_index == 0);
  CHECK(dets[0].score > 0.9);
}
