#pragma once

#include "casim/experiment/train.hpp"
#include "casim/io/checkpoint.hpp"

#include <filesystem>
#include <memory>

namespace casim::experiment {

// Everything needed to rebuild a model and interpret its inputs/outputs.
struct Snapshot {
  io::ExperimentConfig config;
  std::string inject = "casim";
  std::vector<std::string> vocab;  // content words
  data::Normalizer stats;
  std::uint64_t seed = 0;
};

Snapshot make_snapshot(const data::Dataset& ds, const io::ExperimentConfig& c, std::string inject, std::uint64_t seed);

struct LoadedModel {
  std::string kind;  // "vqvae", "ar", "diff", "matcher"
  Snapshot snapshot;
  std::uint64_t step = 0;
  std::unique_ptr<text::Vocabulary> vocab;
  std::unique_ptr<vq::MotionVqvae> vqvae;  // present for "vqvae" and "ar"
  std::unique_ptr<ar::ArModel> ar;
  std::unique_ptr<diffusion::DiffusionModel> diffusion;
  std::unique_ptr<eval::Matcher> matcher;
};

void save_vqvae(const vq::MotionVqvae& model, const Snapshot& snap, const std::filesystem::path& path);
// AR checkpoints embed their VQ-VAE so they decode on their own.
void save_ar(const ar::ArModel& model, const vq::MotionVqvae& vq, const Snapshot& snap,
             const std::filesystem::path& path);
void save_diffusion(const diffusion::DiffusionModel& model, const Snapshot& snap, const std::filesystem::path& path);
void save_matcher(const eval::Matcher& model, const Snapshot& snap, const std::filesystem::path& path);

LoadedModel load_model(const std::filesystem::path& path);
// Throws unless the checkpoint holds the expected kind.
LoadedModel load_model(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace casim::experiment
