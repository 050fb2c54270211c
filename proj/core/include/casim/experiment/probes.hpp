#pragma once

#include "casim/attn/attention.hpp"
#include "casim/experiment/train.hpp"

namespace casim::experiment {

// Two scripts that differ only in one side word or in the order of two actions.
struct ProbePair {
  std::string kind;  // "side" or "order"
  data::ActionScript first, second;
  std::string first_prompt, second_prompt;
};

// Builds up to `count` pairs from held-out scripts, alternating side and
// order swaps while both kinds are available.
std::vector<ProbePair> compositional_pairs(const std::vector<data::Sample>& held_out, int count, std::uint64_t seed);

// Linear resampling of a motion to `frames` rows.
Mat resample(const Mat& motion, int frames);

// True when `generated` (normalized) is closer in MSE to the noise-free
// reference of `intended` than to that of `alternative`.
bool matches_reference(const Mat& generated, const data::ActionScript& intended, const data::ActionScript& alternative,
                       const data::Normalizer& stats);

struct ProbeScore {
  int correct = 0;
  int total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

// Generates both prompts of every pair (script length as the target length)
// and checks each motion against its own and its partner's reference.
ProbeScore compositional_probe(const eval::MotionGenerator& generator, const std::vector<ProbePair>& pairs,
                               const data::Normalizer& stats, std::uint64_t seed);

struct AlignmentScore {
  int passed = 0;
  int total = 0;
  std::vector<double> early, late;  // second-action mass per prompt
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(passed) / total; }
};

// Over two-action held-out scripts: share of the mean-heads last-layer
// attention on the second action's words, first vs last third of frames.
AlignmentScore attention_alignment_probe(const diffusion::DiffusionModel& model,
                                         const std::vector<data::Sample>& held_out, const text::Vocabulary& vocab,
                                         int max_prompts, std::uint64_t seed);

}  // namespace casim::experiment
