#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "ddet/config.hpp"

namespace ddet {

// Stage-by-stage orchestration under one output directory:
//   data/      both corpora plus the shifted test set
//   teacher/   single-class run, best checkpoint frozen as teacher.json
//   students/  kd-off / kd-on per seed, each evaluated on held-out + unseen
//   reports/   comparison tables and plots, rebuilt from the eval files
// Completed stages are marked DONE and skipped on rerun; interrupted
// training resumes from its own epoch checkpoints. A failure writes a
// FAILED marker file with the error and stage before rethrowing.
struct ExperimentSummary {
  double teacher_best_val_map50 = 0.0;
  double delta_held_out_map25 = 0.0;    // mean(kd-on) - mean(kd-off)
  double delta_unseen_map25 = 0.0;
  double delta_unseen_polyp_ap50 = 0.0;
  std::string comparison_path;
};

ExperimentSummary run_experiment(const std::string& out_dir,
                                 const ExperimentConfig& config,
                                 std::ostream& log);

// Aggregates every student EvalReport on disk into the comparison document;
// callable on its own against a finished (or partially finished) directory.
nlohmann::json build_comparison(const std::string& out_dir,
                                const ExperimentConfig& config);

}  // namespace ddet
