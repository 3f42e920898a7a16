#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ddet/geometry.hpp"
#include "ddet/image.hpp"

namespace ddet {

// Label vocabulary. merged_classes order is fixed; annotation class indices
// index into it. Model heads reserve logit slot 0 for background and place
// merged class c at slot c + 1.
struct ClassCatalog {
  std::vector<std::string> raw_classes;
  std::vector<std::string> merged_classes;
  std::map<std::string, std::string> merge_map;

  static ClassCatalog edd();
  static ClassCatalog polyp_only();

  int merged_index(const std::string& name) const;  // -1 when unknown
  int merged_index_of_raw(const std::string& raw) const;
};

struct Annotation {
  Box box;
  int class_index = -1;  // into catalog.merged_classes
};

struct ImageSample {
  Image image;
  std::vector<Annotation> annotations;
  std::string source_id;
};

enum class Split { train, val, test };
std::string split_name(Split s);

struct DataSet {
  std::string name;
  Split split = Split::train;
  ClassCatalog catalog;
  std::vector<ImageSample> samples;
  std::uint64_t seed = 0;
  // Generator parameter echo; key order is the serialization order.
  std::map<std::string, double> gen_params;

  std::vector<std::size_t> class_instance_counts() const;
};

// On-disk layout: <dir>/manifest.json plus NNNNNN.ppm / NNNNNN.json pairs.
// The per-image json is a flat array of {x_min, y_min, x_max, y_max, class}.
void save_dataset(const std::filesystem::path& dir, const DataSet& ds);
DataSet load_dataset(const std::filesystem::path& dir);

// Deterministic shuffle then contiguous partition; val and test take the
// floors of their ratios, train absorbs the remainder. Any empty resulting
// split is an error.
struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;
};
std::array<DataSet, 3> split_dataset(const std::vector<ImageSample>& samples,
                                     const ClassCatalog& catalog,
                                     SplitRatios ratios, std::uint64_t seed,
                                     const std::string& name);

// Shuffles, cuts k near-equal folds (first size%k folds one larger), and
// returns (train, val) per fold; val folds partition the input.
std::vector<std::pair<DataSet, DataSet>> kfold_partitions(const DataSet& data,
                                                          int k,
                                                          std::uint64_t seed);

}  // namespace ddet
