#pragma once

#include "casim/experiment/models.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace casim::experiment {

struct RunOptions {
  bool ablation = false;      // run the {ar, diff} x {casim, cls} grid instead of one cell
  int attention_samples = 3;  // test prompts whose attention is exported per model
  int eval_repeats = -1;      // override config.eval.repeats when >= 0
  bool resume = false;        // load checkpoints already present instead of retraining
};

struct CellResult {
  std::string family;
  std::string inject;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
  std::filesystem::path report_file;
  eval::EvalReport report;
};

struct RunResult {
  std::filesystem::path dir;  // <output root>/<config hash>
  std::string config_hash;
  std::vector<CellResult> cells;
  std::optional<std::string> failed_stage;
  std::string error;

  bool ok() const { return !failed_stage; }
  // Cells of one family/injection, one per seed.
  std::vector<const CellResult*> find(const std::string& family, const std::string& inject) const;
};

std::string cell_name(const std::string& family, const std::string& inject, std::uint64_t seed);

// Generates (or reuses) the dataset, trains the shared VQ-VAE and matcher,
// then trains and evaluates every cell for every seed. Outputs land under
// <output root>/<config hash>/ and manifest.json lists each of them with its
// stage. A failing stage is recorded by name; earlier outputs stay on disk.
RunResult run_experiment(const io::ExperimentConfig& config, const RunOptions& options = {},
                         const ProgressFn& progress = {});

}  // namespace casim::experiment
