#include "ddet/dataset.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ddet/rng.hpp"

using nlohmann::json;

namespace ddet {

ClassCatalog ClassCatalog::edd() {
  ClassCatalog c;
  c.raw_classes = {"NDBE", "suspicious", "HGD", "cancer", "polyp"};
  c.merged_classes = {"ndbe", "neoplasia", "polyp"};
  c.merge_map = {{"NDBE", "ndbe"},
                 {"suspicious", "neoplasia"},
                 {"HGD", "neoplasia"},
                 {"cancer", "neoplasia"},
                 {"polyp", "polyp"}};
  return c;
}

ClassCatalog ClassCatalog::polyp_only() {
  ClassCatalog c;
  c.raw_classes = {"polyp"};
  c.merged_classes = {"polyp"};
  c.merge_map = {{"polyp", "polyp"}};
  return c;
}

int ClassCatalog::merged_index(const std::string& name) const {
  for (std::size_t i = 0; i < merged_classes.size(); ++i)
    if (merged_classes[i] == name) return static_cast<int>(i);
  return -1;
}

int ClassCatalog::merged_index_of_raw(const std::string& raw) const {
  auto it = merge_map.find(raw);
  if (it == merge_map.end()) return -1;
  return merged_index(it->second);
}

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

std::vector<std::size_t> DataSet::class_instance_counts() const {
  std::vector<std::size_t> counts(catalog.merged_classes.size(), 0);
  for (const auto& s : samples)
    for (const auto& a : s.annotations) {
      if (a.class_index < 0 || a.class_index >= static_cast<int>(counts.size()))
        throw std::runtime_error("annotation class index out of catalog range");
      ++counts[a.class_index];
    }
  return counts;
}

namespace {

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::runtime_error("unknown split name: " + s);
}

std::string image_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

json catalog_to_json(const ClassCatalog& c) {
  return json{{"raw_classes", c.raw_classes},
              {"merged_classes", c.merged_classes},
              {"merge_map", c.merge_map}};
}

ClassCatalog catalog_from_json(const json& j) {
  ClassCatalog c;
  c.raw_classes = j.at("raw_classes").get<std::vector<std::string>>();
  c.merged_classes = j.at("merged_classes").get<std::vector<std::string>>();
  c.merge_map = j.at("merge_map").get<std::map<std::string, std::string>>();
  return c;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const DataSet& ds) {
  std::filesystem::create_directories(dir);

  json counts = json::object();
  auto per_class = ds.class_instance_counts();
  for (std::size_t i = 0; i < per_class.size(); ++i)
    counts[ds.catalog.merged_classes[i]] = per_class[i];

  json manifest{{"name", ds.name},
                {"split", split_name(ds.split)},
                {"seed", ds.seed},
                {"generator_version", 1},
                {"catalog", catalog_to_json(ds.catalog)},
                {"image_count", ds.samples.size()},
                {"instance_counts", counts},
                {"gen_params", ds.gen_params}};
  json ids = json::array();
  for (const auto& s : ds.samples) ids.push_back(s.source_id);
  manifest["source_ids"] = ids;

  {
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest in " + dir.string());
    f << manifest.dump(2) << "\n";
  }

  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    write_ppm(dir / (image_stem(i) + ".ppm"), s.image);
    json anns = json::array();
    for (const auto& a : s.annotations) {
      anns.push_back(json{{"x_min", a.box.x_min},
                          {"y_min", a.box.y_min},
                          {"x_max", a.box.x_max},
                          {"y_max", a.box.y_max},
                          {"class", ds.catalog.merged_classes.at(a.class_index)}});
    }
    std::ofstream f(dir / (image_stem(i) + ".json"), std::ios::binary);
    if (!f) throw std::runtime_error("cannot write annotations in " + dir.string());
    f << anns.dump(2) << "\n";
  }
}

DataSet load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("no manifest in " + dir.string());
  json manifest = json::parse(mf);

  DataSet ds;
  ds.name = manifest.at("name").get<std::string>();
  ds.split = parse_split(manifest.at("split").get<std::string>());
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.catalog = catalog_from_json(manifest.at("catalog"));
  if (manifest.contains("gen_params"))
    ds.gen_params = manifest.at("gen_params").get<std::map<std::string, double>>();

  std::size_t n = manifest.at("image_count").get<std::size_t>();
  std::vector<std::string> ids;
  if (manifest.contains("source_ids"))
    ids = manifest.at("source_ids").get<std::vector<std::string>>();

  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ImageSample s;
    s.image = read_ppm(dir / (image_stem(i) + ".ppm"));
    std::ifstream af(dir / (image_stem(i) + ".json"), std::ios::binary);
    if (!af) throw std::runtime_error("missing annotation file " + image_stem(i));
    json anns = json::parse(af);
    for (const auto& a : anns) {
      Annotation ann;
      ann.box = Box{a.at("x_min").get<double>(), a.at("y_min").get<double>(),
                    a.at("x_max").get<double>(), a.at("y_max").get<double>()};
      ann.class_index = ds.catalog.merged_index(a.at("class").get<std::string>());
      if (ann.class_index < 0)
        throw std::runtime_error("annotation class not in catalog: " +
                                 a.at("class").get<std::string>());
      s.annotations.push_back(ann);
    }
    s.source_id = i < ids.size() ? ids[i] : image_stem(i);
    ds.samples.push_back(std::move(s));
  }

  // manifest counts are normative; verify on load
  auto per_class = ds.class_instance_counts();
  for (std::size_t i = 0; i < per_class.size(); ++i) {
    auto recorded = manifest.at("instance_counts")
                        .at(ds.catalog.merged_classes[i])
                        .get<std::size_t>();
    if (recorded != per_class[i])
      throw std::runtime_error("manifest instance count mismatch for " +
                               ds.catalog.merged_classes[i]);
  }
  return ds;
}

std::array<DataSet, 3> split_dataset(const std::vector<ImageSample>& samples,
                                     const ClassCatalog& catalog,
                                     SplitRatios ratios, std::uint64_t seed,
                                     const std::string& name) {
  std::size_t n = samples.size();
  std::size_t n_val = static_cast<std::size_t>(ratios.val * static_cast<double>(n));
  std::size_t n_test = static_cast<std::size_t>(ratios.test * static_cast<double>(n));
  if (n_val + n_test >= n)
    throw std::runtime_error("split leaves no training samples");
  std::size_t n_train = n - n_val - n_test;
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw std::runtime_error("split produces an empty subset");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng r = stream(seed, "split", 0);
  r.shuffle(order);

  std::array<DataSet, 3> out;
  Split kinds[3] = {Split::train, Split::val, Split::test};
  std::size_t sizes[3] = {n_train, n_val, n_test};
  std::size_t pos = 0;
  for (int s = 0; s < 3; ++s) {
    out[s].name = name;
    out[s].split = kinds[s];
    out[s].catalog = catalog;
    out[s].seed = seed;
    for (std::size_t i = 0; i < sizes[s]; ++i)
      out[s].samples.push_back(samples[order[pos++]]);
  }
  return out;
}

std::vector<std::pair<DataSet, DataSet>> kfold_partitions(const DataSet& data,
                                                          int k,
                                                          std::uint64_t seed) {
  std::size_t n = data.samples.size();
  if (k < 2) throw std::runtime_error("k must be at least 2");
  if (n < static_cast<std::size_t>(k))
    throw std::runtime_error("dataset smaller than k");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng r = stream(seed, "kfold", 0);
  r.shuffle(order);

  std::size_t base = n / k, extra = n % k;
  std::vector<std::pair<DataSet, DataSet>> out;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    std::size_t fold_size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    std::pair<DataSet, DataSet> pair;
    pair.first.name = data.name;
    pair.first.split = Split::train;
    pair.first.catalog = data.catalog;
    pair.first.seed = seed;
    pair.second.name = data.name;
    pair.second.split = Split::val;
    pair.second.catalog = data.catalog;
    pair.second.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
      bool in_fold = i >= pos && i < pos + fold_size;
      (in_fold ? pair.second : pair.first).samples.push_back(data.samples[order[i]]);
    }
    pos += fold_size;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace ddet
