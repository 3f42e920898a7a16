#include "ddet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ddet/eval.hpp"
#include "ddet/kernels.hpp"
#include "ddet/rng.hpp"

namespace ddet {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("momentum must be in [0,1)");
  if (weight_decay < 0.0)
    throw std::invalid_argument("weight_decay must be nonnegative");
  if (batch_images < 1 || anchors_per_image < 1 ||
      max_positives_per_image < 1 ||
      max_positives_per_image > anchors_per_image)
    throw std::invalid_argument("bad batch shape");
  if (!(reg_weight >= 0.0))
    throw std::invalid_argument("reg_weight must be nonnegative");
  if (!(neg_iou <= pos_iou) || !(neg_iou >= 0.0) || !(pos_iou <= 1.0))
    throw std::invalid_argument("bad assignment bands");
  if (!augment.empty()) augment.validate();
  if (kd.enabled) kd.validate();
}

FrozenTeacher::FrozenTeacher(DetectorModel model)
    : model_(std::move(model)), hash_(param_hash(model_)) {
  if (model_.num_classes != 1)
    throw std::invalid_argument("teacher must be single-class");
}

void FrozenTeacher::verify() const {
  if (param_hash(model_) != hash_)
    throw std::runtime_error("frozen teacher parameters changed");
}

namespace {

nlohmann::json velocity_to_json(const ModelGrads& v) {
  return {{"cls_w", v.cls_w},
          {"cls_b", v.cls_b},
          {"reg_w", v.reg_w},
          {"reg_b", v.reg_b}};
}

ModelGrads velocity_from_json(const nlohmann::json& j) {
  ModelGrads v;
  v.cls_w = j.at("cls_w").get<std::vector<double>>();
  v.cls_b = j.at("cls_b").get<std::vector<double>>();
  v.reg_w = j.at("reg_w").get<std::vector<double>>();
  v.reg_b = j.at("reg_b").get<std::vector<double>>();
  return v;
}

struct TrainState {
  int epoch_completed = -1;
  DetectorModel model;
  DetectorModel best_model;
  int best_epoch = -1;
  double best_val_map50 = 0.0;
  ModelGrads velocity;
  std::vector<EpochSummary> epochs;
};

void save_state(const std::string& path, const TrainState& s) {
  nlohmann::json j;
  j["format"] = "ddet-train-state";
  j["epoch_completed"] = s.epoch_completed;
  j["best_epoch"] = s.best_epoch;
  j["best_val_map50"] = s.best_val_map50;
  auto& hist = j["epochs"] = nlohmann::json::array();
  for (const auto& e : s.epochs)
    hist.push_back({{"epoch", e.epoch},
                    {"mean_loss", e.mean_loss},
                    {"val_map50", e.val_map50}});
  j["model"] = model_to_json(s.model);
  j["best_model"] = model_to_json(s.best_model);
  j["velocity"] = velocity_to_json(s.velocity);
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write train state: " + path);
  out << j.dump() << '\n';
  out.close();
  if (!out) throw std::runtime_error("failed writing train state: " + path);
  std::filesystem::rename(tmp, path);
}

TrainState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read train state: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.value("format", std::string{}) != "ddet-train-state")
    throw std::runtime_error("not a train state file: " + path);
  TrainState s;
  s.epoch_completed = j.at("epoch_completed").get<int>();
  s.best_epoch = j.at("best_epoch").get<int>();
  s.best_val_map50 = j.at("best_val_map50").get<double>();
  for (const auto& e : j.at("epochs"))
    s.epochs.push_back({e.at("epoch").get<int>(),
                        e.at("mean_loss").get<double>(),
                        e.at("val_map50").get<double>()});
  s.model = model_from_json(j.at("model"));
  s.best_model = model_from_json(j.at("best_model"));
  s.velocity = velocity_from_json(j.at("velocity"));
  return s;
}

// Descriptors, labels and targets for one image visit. The anchor stream is
// keyed by the visit index, so a resumed run redraws identical samples; the
// hard-negative half depends only on the current parameters, which a resume
// restores bit-exactly.
void append_image_anchors(TrainBatch& batch, const ImageSample& sample,
                          const ProposalGrid& grid, const TrainConfig& config,
                          const DetectorModel& model,
                          const FrozenTeacher* teacher, bool use_kd,
                          std::uint64_t visit) {
  RegionDescriptors rd(sample.image);
  const auto targets =
      assign_targets(grid, sample.annotations, config.pos_iou, config.neg_iou);
  std::vector<std::size_t> pos, neg, band;
  for (std::size_t a = 0; a < targets.size(); ++a) {
    if (targets[a].label > 0)
      pos.push_back(a);
    else if (targets[a].label == 0)
      neg.push_back(a);
    else if (targets[a].gt >= 0)
      band.push_back(a);
  }
  Rng rng = stream(config.seed, "anchors", visit);
  rng.shuffle(pos);
  rng.shuffle(neg);
  rng.shuffle(band);
  const std::size_t npos =
      std::min<std::size_t>(pos.size(),
                            static_cast<std::size_t>(config.max_positives_per_image));
  // Intermediate-overlap anchors ride along as regression-only rows: their
  // decoded boxes otherwise drift just off the object and survive NMS as
  // near-duplicates that the classifier cannot outrank.
  const std::size_t nband = std::min(band.size(), npos);
  const std::size_t nneg = std::min<std::size_t>(
      neg.size(),
      static_cast<std::size_t>(config.anchors_per_image) - npos - nband);

  // Random negatives alone almost never hit the confusable windows (lesion
  // interiors, straddling offsets), so half the negative budget goes to the
  // highest-foreground-score members of a scored pool. Pool order comes from
  // the shuffle above; ties keep pool order, so the draw stays deterministic.
  const std::size_t pool =
      std::min<std::size_t>(neg.size(), std::max<std::size_t>(4 * nneg, 128));
  const std::size_t nhard = nneg / 2;
  if (nhard > 0 && pool > nneg) {
    const std::size_t d = static_cast<std::size_t>(batch.dim);
    std::vector<double> phi(d), logits(model.num_classes + 1);
    std::vector<double> probs(model.num_classes + 1);
    std::vector<double> reg(4 * static_cast<std::size_t>(model.num_classes));
    std::vector<std::pair<double, std::size_t>> scored(pool);
    for (std::size_t i = 0; i < pool; ++i) {
      rd.describe(grid.anchors[neg[i]], phi.data());
      model.forward(phi.data(), logits.data(), reg.data());
      softmax(logits.data(), model.num_classes + 1, probs.data());
      scored[i] = {1.0 - probs[0], i};
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> picked;
    picked.reserve(nneg);
    std::vector<char> used(pool, 0);
    for (std::size_t i = 0; i < nhard; ++i) {
      picked.push_back(neg[scored[i].second]);
      used[scored[i].second] = 1;
    }
    for (std::size_t i = 0; i < pool && picked.size() < nneg; ++i)
      if (!used[i]) picked.push_back(neg[i]);
    std::copy(picked.begin(), picked.end(), neg.begin());
  }

  std::vector<std::size_t> chosen(pos.begin(), pos.begin() + npos);
  chosen.insert(chosen.end(), neg.begin(), neg.begin() + nneg);
  chosen.insert(chosen.end(), band.begin(), band.begin() + nband);

  const std::size_t d = static_cast<std::size_t>(batch.dim);
  std::vector<double> phi(d);
  std::vector<double> tlogits(2), tprobs(2);
  for (std::size_t a : chosen) {
    rd.describe(grid.anchors[a], phi.data());
    batch.descriptors.insert(batch.descriptors.end(), phi.begin(), phi.end());
    if (targets[a].label != 0 && targets[a].gt >= 0) {
      const auto& gt = sample.annotations[static_cast<std::size_t>(targets[a].gt)];
      // Ignored rows carry -(slot): box head trains, the CE/KD terms skip.
      batch.labels.push_back(targets[a].label > 0 ? targets[a].label
                                                  : -(gt.class_index + 1));
      const BoxDelta delta = encode_box(grid.anchors[a], gt.box);
      batch.reg_targets.insert(batch.reg_targets.end(),
                               {delta.tx, delta.ty, delta.tw, delta.th});
    } else {
      batch.labels.push_back(0);
      batch.reg_targets.insert(batch.reg_targets.end(), {0.0, 0.0, 0.0, 0.0});
    }
    if (use_kd) {
      if (batch.labels.back() < 0) {
        batch.teacher_fg.push_back(0.0);  // outside the distillation series
      } else {
        double dummy[4];
        teacher->model().forward(phi.data(), tlogits.data(), dummy);
        softmax(tlogits.data(), 2, tprobs.data());
        batch.teacher_fg.push_back(tprobs[1]);
      }
    }
    ++batch.n;
  }
}

}  // namespace

std::vector<EvalDetection> run_inference(const DetectorModel& model,
                                         const DataSet& data,
                                         const DetectConfig& config) {
  const auto grid = build_grid(model.grid_config);
  std::vector<EvalDetection> out;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    for (const auto& det : detect(model, data.samples[i].image, grid, config))
      out.push_back({static_cast<int>(i), det.class_index, det.score, det.box});
  }
  return out;
}

double validation_map50(const DetectorModel& model, const DataSet& data,
                        const DetectConfig& config) {
  const auto dets = run_inference(model, data, config);
  const auto gts = dataset_ground_truth(data);
  return evaluate(dets, gts, data.catalog.merged_classes).map_at_iou(0.5);
}

TrainResult train_detector(const DataSet& train_data, const DataSet& val_data,
                           const TrainConfig& config,
                           const FrozenTeacher* teacher,
                           const std::string& run_dir) {
  config.validate();
  if (train_data.samples.empty()) throw std::invalid_argument("no training data");
  if (train_data.catalog.merged_classes.empty())
    throw std::invalid_argument("empty catalog");
  const bool use_kd = config.kd.enabled && teacher != nullptr;
  if (use_kd) teacher->verify();

  const int num_classes =
      static_cast<int>(train_data.catalog.merged_classes.size());
  const auto grid = build_grid(config.grid);
  AugmentPolicy policy = config.augment;
  policy.seed = config.seed;

  const std::string state_path =
      run_dir.empty() ? std::string{} : run_dir + "/state.json";
  const std::string metrics_path =
      run_dir.empty() ? std::string{} : run_dir + "/metrics.jsonl";
  if (!run_dir.empty()) std::filesystem::create_directories(run_dir);

  TrainState state;
  if (!state_path.empty() && std::filesystem::exists(state_path)) {
    state = load_state(state_path);
    if (state.model.num_classes != num_classes ||
        !(state.model.grid_config == config.grid))
      throw std::runtime_error("train state does not match this run's config");
  } else {
    state.model =
        DetectorModel::init(num_classes, config.grid, config.seed);
    state.best_model = state.model;
    state.velocity = ModelGrads::zeros_like(state.model);
  }

  const std::size_t n_train = train_data.samples.size();
  std::vector<std::size_t> order(n_train);

  for (int epoch = state.epoch_completed + 1; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = stream(config.seed, "shuffle",
                             static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    std::ostringstream metrics;
    double loss_sum = 0.0;
    int iters = 0;
    for (std::size_t start = 0; start < n_train;
         start += static_cast<std::size_t>(config.batch_images)) {
      const std::size_t stop = std::min(
          n_train, start + static_cast<std::size_t>(config.batch_images));
      TrainBatch batch;
      batch.dim = state.model.dim;
      for (std::size_t p = start; p < stop; ++p) {
        const std::uint64_t visit =
            static_cast<std::uint64_t>(epoch) * n_train + p;
        const ImageSample& raw = train_data.samples[order[p]];
        if (policy.empty()) {
          append_image_anchors(batch, raw, grid, config, state.model, teacher,
                               use_kd, visit);
        } else {
          append_image_anchors(batch, apply_augment(raw, policy, visit), grid,
                               config, state.model, teacher, use_kd, visit);
        }
      }
      if (batch.n == 0) continue;

      auto grads = ModelGrads::zeros_like(state.model);
      const auto loss = total_student_loss(state.model, batch, config.kd,
                                           config.reg_weight, &grads);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " iter " << iters
            << ": loss=" << loss.total << " ce=" << loss.ce
            << " kd=" << loss.kd << " reg=" << loss.reg;
        throw std::runtime_error(msg.str());
      }

      auto params = param_tensors(state.model);
      auto gtensors = param_tensors(grads);
      auto vtensors = param_tensors(state.velocity);
      for (int t = 0; t < 4; ++t)
        kernels::sgd_update(params[t].data, gtensors[t].data, vtensors[t].data,
                            params[t].size, config.lr, config.momentum,
                            config.weight_decay);

      if (!metrics_path.empty()) {
        nlohmann::json m = {{"epoch", epoch},    {"iter", iters},
                            {"loss", loss.total}, {"ce", loss.ce},
                            {"kd", loss.kd},      {"reg", loss.reg},
                            {"lr", config.lr}};
        metrics << m.dump() << '\n';
      }
      loss_sum += loss.total;
      ++iters;
    }

    for (const ParamView& t : param_tensors(state.model))
      for (std::size_t i = 0; i < t.size; ++i)
        if (!std::isfinite(t.data[i]))
          throw std::runtime_error("training diverged: non-finite parameters after epoch " +
                                   std::to_string(epoch));

    const double val_map =
        val_data.samples.empty()
            ? 0.0
            : validation_map50(state.model, val_data, config.val_detect);
    state.epochs.push_back(
        {epoch, iters > 0 ? loss_sum / iters : 0.0, val_map});
    if (state.best_epoch < 0 || val_map > state.best_val_map50) {
      state.best_epoch = epoch;
      state.best_val_map50 = val_map;
      state.best_model = state.model;
    }
    state.epoch_completed = epoch;

    if (!run_dir.empty()) {
      std::ofstream mf(metrics_path, std::ios::binary | std::ios::app);
      if (!mf) throw std::runtime_error("cannot append metrics: " + metrics_path);
      mf << metrics.str();
      mf.close();
      save_state(state_path, state);
    }
  }

  TrainResult result;
  result.final_model = std::move(state.model);
  result.best_model = std::move(state.best_model);
  result.best_epoch = state.best_epoch;
  result.best_val_map50 = state.best_val_map50;
  result.epochs = std::move(state.epochs);
  return result;
}

KfoldRow make_kfold_row(const std::string& variant,
                        const std::vector<double>& fold_map50) {
  if (fold_map50.empty()) throw std::invalid_argument("no fold values");
  KfoldRow row;
  row.variant = variant;
  row.fold_map50 = fold_map50;
  row.average = std::accumulate(fold_map50.begin(), fold_map50.end(), 0.0) /
                static_cast<double>(fold_map50.size());
  return row;
}

KfoldTable run_kfold(const DataSet& data, int k, const TrainConfig& base,
                     const FrozenTeacher* teacher, const std::string& run_dir) {
  if (k < 2) throw std::invalid_argument("need at least two folds");
  const auto folds = kfold_partitions(data, k, base.seed);
  const std::vector<std::pair<std::string, AugmentPolicy>> variants = {
      {"none", AugmentPolicy::none(base.seed)},
      {"geometric", AugmentPolicy::geometric_only(base.seed)},
      {"photometric", AugmentPolicy::photometric_only(base.seed)},
      {"combined", AugmentPolicy::combined(base.seed)},
  };
  KfoldTable table;
  table.k = k;
  for (const auto& [name, policy] : variants) {
    std::vector<double> scores;
    for (int f = 0; f < k; ++f) {
      TrainConfig cfg = base;
      cfg.augment = policy;
      std::string fold_dir;
      if (!run_dir.empty())
        fold_dir = run_dir + "/" + name + "-fold" + std::to_string(f);
      const auto& [fold_train, fold_val] = folds[static_cast<std::size_t>(f)];
      auto result = train_detector(fold_train, fold_val, cfg, teacher, fold_dir);
      scores.push_back(result.best_val_map50 * 100.0);
    }
    table.rows.push_back(make_kfold_row(name, scores));
  }
  return table;
}

std::string format_kfold_markdown(const KfoldTable& table) {
  std::ostringstream out;
  out << "| Augmentation |";
  for (int f = 1; f <= table.k; ++f) out << " K" << f << " |";
  out << " Average |\n|---|";
  for (int f = 0; f <= table.k; ++f) out << "---|";
  out << '\n';
  char buf[32];
  for (const auto& row : table.rows) {
    out << "| " << row.variant << " |";
    for (double v : row.fold_map50) {
      std::snprintf(buf, sizeof(buf), "%.1f", v);
      out << ' ' << buf << " |";
    }
    std::snprintf(buf, sizeof(buf), "%.1f", row.average);
    out << ' ' << buf << " |\n";
  }
  return out.str();
}

}  // namespace ddet
