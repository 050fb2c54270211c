#pragma once

#include "casim/data/motion.hpp"
#include "casim/data/synth.hpp"
#include "casim/text/vocab.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace casim::data {

enum class Split { train, valid, test };
std::string_view to_string(Split s);

// Per-channel standardization; divisor is max(std, 1e-6) so constant
// channels map to exactly 0.
struct Normalizer {
  nn::RowVec mean;
  nn::RowVec std;

  static Normalizer fit(const std::vector<const Mat*>& motions);
  static Normalizer identity(int channels = kNumChannels);
  Mat normalize(const Mat& frames) const;
  Mat denormalize(const Mat& frames) const;
};

struct DatasetEntry {
  std::string id;
  std::string motion_file;  // relative to the dataset root
  std::vector<std::string> prompts;
  ActionScript script;
  Split split = Split::train;
};

struct DatasetManifest {
  int version = 1;
  std::uint64_t seed = 0;
  ScriptSampler sampler;
  std::vector<DatasetEntry> entries;
  Normalizer stats;
  std::string vocab_file = "vocab.txt";

  std::vector<const DatasetEntry*> split(Split s) const;
};

struct DatasetOptions {
  int count = 2000;
  std::uint64_t seed = 0;
  ScriptSampler sampler;
};

// Writes motions/<id>.mot, vocab.txt and manifest.json under out_dir. Split
// ratios are 0.8/0.05/0.15 by entry count. Normalization stats and the
// vocabulary come from the train split only. The output directory is probed
// for writability before anything is written; the manifest is written last.
DatasetManifest generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Script <-> JSON-compatible text, also used by the CLI.
std::string script_to_json(const ActionScript& script);
ActionScript script_from_json(const std::string& json);

struct Sample {
  std::string id;
  std::vector<std::string> prompts;
  ActionScript script;
  MotionSequence motion;  // raw channels
  Mat normalized;         // T x 16 standardized frames
};

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  text::Vocabulary vocab;
  std::vector<Sample> train, valid, test;

  const std::vector<Sample>& split(Split s) const;
};

Dataset load_dataset(const std::filesystem::path& root);

}  // namespace casim::data
