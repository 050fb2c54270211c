#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace casim::io {

struct DataSection {
  int count = 2000;
  std::uint64_t seed = 1;
  int min_actions = 1;
  int max_actions = 3;
  int min_duration = 16;
  int max_duration = 40;
};

struct TextSection {
  int width = 64;
  int blocks = 2;
  int heads = 4;
  int ff_hidden = 128;
  std::string tap = "pre_projection";
};

struct VqSection {
  int hidden = 64;
  int latent = 64;
  int codes = 64;
  int downsample = 4;
  int steps = 6000;
  int batch = 16;
  int crop = 64;
  double lr = 2e-3;
};

struct ArSection {
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ff_hidden = 128;
  int steps = 4000;
  int batch = 16;
  double lr = 1e-3;
  std::string teacher_forcing = "0.5";
  std::string sampler = "greedy";
  int top_k = 5;
  double temperature = 1.0;
};

struct DiffSection {
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ff_hidden = 128;
  std::string variant = "dec";
  int steps = 50;
  double guidance = 2.5;
  double cond_drop = 0.1;
  int train_steps = 4000;
  int batch = 16;
  double lr = 1e-3;
};

struct MatcherSection {
  int width = 64;
  int steps = 3000;
  int batch = 32;
  int eval_every = 100;
  int patience = 8;
  double lr = 1e-3;
};

struct EvalSection {
  int repeats = 20;
  int pool = 32;
  int diversity_pairs = 100;
  int max_entries = 0;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string family = "ar";    // ar | diff
  std::string inject = "casim"; // casim | cls
  std::vector<std::uint64_t> seeds = {0};
  std::string out;              // empty: $CASIM_OUT or ./casim_out
  DataSection data;
  TextSection text;
  VqSection vqvae;
  ArSection ar;
  DiffSection diff;
  MatcherSection matcher;
  EvalSection eval;
};

// Canonical JSON (sorted keys, every field present).
std::string config_to_json(const ExperimentConfig& config);
// Missing keys take defaults; unknown keys and wrongly typed values throw.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Applies "section.key=value" overrides; the value is parsed as JSON when
// possible and as a bare string otherwise.
void apply_override(ExperimentConfig& config, const std::string& assignment);
// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);
std::uint64_t fnv1a64(const std::string& bytes);

// Output root: the config value, else $CASIM_OUT, else "casim_out".
std::filesystem::path output_root(const ExperimentConfig& config);

}  // namespace casim::io
