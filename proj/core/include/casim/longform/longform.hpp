#pragma once

#include "casim/diffusion/diffusion.hpp"
#include "casim/eval/matcher.hpp"

#include <optional>
#include <string>
#include <vector>

namespace casim::longform {

using nn::Mat;

struct LongformPlan {
  std::vector<std::string> prompts;
  std::vector<int> lengths;   // frames per clip
  int handshake = 20;         // H
  std::optional<int> refine;  // R; default half the model's step count
  std::uint64_t seed = 0;
  std::optional<double> guidance;
};

// Throws std::invalid_argument describing the first violated constraint:
// >= 2 prompts, one length per prompt, every length > 2H and within the
// model's frame limit, and transition windows that do not overlap (every
// inner clip at least 3H frames).
void validate_plan(const LongformPlan& plan, int max_frames = data::kMaxFrames);

struct Window {
  int start = 0;  // inclusive timeline frame
  int end = 0;    // exclusive
};

struct LongMotion {
  Mat frames;  // normalized, timeline x D
  std::vector<Window> clips;    // timeline span of each clip
  std::vector<Window> windows;  // one 2H transition window per boundary
};

int timeline_length(const std::vector<int>& lengths, int handshake);

// Stage one: each clip sampled from its own prompt, independently seeded.
std::vector<Mat> generate_clips(const LongformPlan& plan, const diffusion::DiffusionModel& model,
                                const text::Vocabulary& vocab);

// Linear cross-fade over each H-frame overlap: weight t / H on the right clip.
LongMotion blend_handshake(const std::vector<Mat>& clips, int handshake);

// Stage two: each window plus up to H frames of context on either side is
// re-noised to step R and denoised with the right-hand prompt; context frames
// are replaced by their re-noised originals after every step and only the
// window frames are written back.
LongMotion refine_transitions(const LongMotion& motion, const diffusion::DiffusionModel& model,
                              const LongformPlan& plan, const text::Vocabulary& vocab);

LongMotion generate_longform(const LongformPlan& plan, const diffusion::DiffusionModel& model,
                             const text::Vocabulary& vocab);

std::vector<Mat> transition_windows(const LongMotion& motion);

// Random `length`-frame crops from motions at least that long.
std::vector<Mat> random_crops(const std::vector<const Mat*>& motions, int count, int length, std::uint64_t seed);

// Windows of 2H frames centered on every action boundary of the given motions.
std::vector<Mat> boundary_crops(const std::vector<const data::Sample*>& samples, int handshake);

struct TransitionMetrics {
  double fid = 0.0;
  bool fid_regularized = false;
  double diversity = 0.0;
  int windows = 0;
};

TransitionMetrics transition_metrics(const std::vector<Mat>& windows, const std::vector<Mat>& reference,
                                     const eval::Matcher& matcher, std::uint64_t seed);

// Largest frame-to-frame L2 step inside the transition windows.
double max_window_delta(const LongMotion& motion);
// 95th percentile of frame-to-frame L2 steps outside the windows.
double clip_delta_p95(const LongMotion& motion);

}  // namespace casim::longform
