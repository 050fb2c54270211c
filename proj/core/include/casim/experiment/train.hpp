#pragma once

#include "casim/ar/generator.hpp"
#include "casim/data/dataset.hpp"
#include "casim/diffusion/diffusion.hpp"
#include "casim/eval/matcher.hpp"
#include "casim/io/config.hpp"
#include "casim/vq/vqvae.hpp"

namespace casim::experiment {

using nn::Mat;

using eval::ProgressFn;

vq::VqvaeConfig vqvae_config(const io::ExperimentConfig& c);
text::TextEncoderConfig text_config(const io::ExperimentConfig& c, int vocab_size);
ar::ArConfig ar_config(const io::ExperimentConfig& c, int downsample);
diffusion::DiffusionConfig diffusion_config(const io::ExperimentConfig& c);
eval::MatcherConfig matcher_config(const io::ExperimentConfig& c, int vocab_size);
eval::MatcherTrainConfig matcher_train_config(const io::ExperimentConfig& c, std::uint64_t seed);
ar::SamplerConfig sampler_config(const io::ExperimentConfig& c);

// Random fixed-length crops (motions shorter than the crop are padded by
// repeating their last frame).
vq::MotionVqvae train_vqvae(const data::Dataset& ds, const io::ExperimentConfig& c, std::uint64_t seed,
                            const ProgressFn& progress = {});

std::vector<std::vector<int>> tokenize_split(const vq::MotionVqvae& vq, const std::vector<data::Sample>& samples);

ar::ArModel train_ar(const data::Dataset& ds, const vq::MotionVqvae& vq, const io::ExperimentConfig& c,
                     text::Injection inject, std::uint64_t seed, const ProgressFn& progress = {});

diffusion::DiffusionModel train_diffusion(const data::Dataset& ds, const io::ExperimentConfig& c,
                                          text::Injection inject, std::uint64_t seed,
                                          const ProgressFn& progress = {});

eval::Matcher train_matcher(const data::Dataset& ds, const io::ExperimentConfig& c, std::uint64_t seed,
                            eval::MatcherTrainResult* result = nullptr, const ProgressFn& progress = {});

// Generator handles for evaluate_model. Outputs are normalized frames.
eval::MotionGenerator ar_generator(const ar::ArModel& model, const vq::MotionVqvae& vq,
                                   const text::Vocabulary& vocab, const ar::SamplerConfig& sampler);
// Samples the ground-truth length of the entry.
eval::MotionGenerator diffusion_generator(const diffusion::DiffusionModel& model, const text::Vocabulary& vocab,
                                          std::optional<double> guidance = std::nullopt);
eval::MotionGenerator ground_truth_generator();

// Seed mixing used wherever one seed must fan out into several streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace casim::experiment
