#pragma once

#include "casim/data/motion.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace casim::data {

// Procedural motion for a script. Each action renders a fixed parametric
// pattern over its segment (see synth.cpp for the per-action definitions).
// Speed scales the pattern frequency by 0.5 / 1.0 / 1.5 and leaves the
// duration alone. Seeded jitter is bounded by 5% of each channel's range:
// locomotion and root-height channels get a per-segment gain in [0.95, 1.05]
// (sign and monotonicity preserving), limb channels a smooth additive wobble.
// Throws std::invalid_argument naming the violated constraint.
MotionSequence synthesize_motion(const ActionScript& script, std::uint64_t seed);

// Noise-free variant used as the reference when checking generated motions
// against the procedural definitions.
MotionSequence synthesize_reference(const ActionScript& script);

// Natural-language rendering; actions in script order joined by connectives
// drawn from {", then ", " and then ", ", "}. The subject phrase is selected
// by template_seed % 4 and the remaining choices by an RNG seeded with it.
std::string render_text(const ActionScript& script, std::uint64_t template_seed);

// Same text plus, for each script step, the [first, last) word positions of
// its phrase in split_words(text).
struct RenderedText {
  std::string text;
  std::vector<std::pair<int, int>> step_words;
};
RenderedText render_text_spans(const ActionScript& script, std::uint64_t template_seed);

// Words that carry script content (verbs, sides, directions, speeds).
bool is_content_word(const std::string& word);

struct ScriptSampler {
  int min_actions = 1;
  int max_actions = 3;
  int min_duration = 16;
  int max_duration = 40;

  ActionScript sample(std::mt19937_64& rng) const;
};

}  // namespace casim::data
