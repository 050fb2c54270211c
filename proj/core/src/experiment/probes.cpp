#include "casim/experiment/probes.hpp"

#include "casim/data/synth.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

namespace casim::experiment {

namespace {

// Flips the first left/right word of the script; false when there is none.
bool flip_side(data::ActionScript& script) {
  for (auto& s : script.steps) {
    if (s.side == data::Side::left || s.side == data::Side::right) {
      s.side = s.side == data::Side::left ? data::Side::right : data::Side::left;
      return true;
    }
    if (s.direction == data::Direction::left || s.direction == data::Direction::right) {
      s.direction = s.direction == data::Direction::left ? data::Direction::right : data::Direction::left;
      return true;
    }
  }
  return false;
}

bool swap_order(data::ActionScript& script) {
  if (script.steps.size() < 2 || script.steps[0].action == script.steps[1].action) return false;
  std::swap(script.steps[0], script.steps[1]);
  return true;
}

double mse(const Mat& a, const Mat& b) { return (a - b).array().square().mean(); }

}  // namespace

std::vector<ProbePair> compositional_pairs(const std::vector<data::Sample>& held_out, int count, std::uint64_t seed) {
  std::vector<std::size_t> order(held_out.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ProbePair> side, swap;
  for (std::size_t idx : order) {
    const auto& script = held_out[idx].script;
    const std::uint64_t tseed = rng();
    auto flipped = script;
    if (flip_side(flipped)) {
      side.push_back({"side", script, flipped, data::render_text(script, tseed), data::render_text(flipped, tseed)});
      continue;
    }
    auto swapped = script;
    if (swap_order(swapped)) {
      swap.push_back({"order", script, swapped, data::render_text(script, tseed), data::render_text(swapped, tseed)});
    }
  }
  std::vector<ProbePair> out;
  std::size_t i = 0, j = 0;
  while (static_cast<int>(out.size()) < count && (i < side.size() || j < swap.size())) {
    const bool take_side = (out.size() % 2 == 0 && i < side.size()) || j >= swap.size();
    out.push_back(take_side ? side[i++] : swap[j++]);
  }
  return out;
}

Mat resample(const Mat& motion, int frames) {
  if (motion.rows() < 1 || frames < 1) throw std::invalid_argument("resample: empty motion");
  if (motion.rows() == frames) return motion;
  Mat out(frames, motion.cols());
  const double scale = frames == 1 ? 0.0 : static_cast<double>(motion.rows() - 1) / (frames - 1);
  for (int t = 0; t < frames; ++t) {
    const double pos = t * scale;
    const auto lo = static_cast<Eigen::Index>(pos);
    const auto hi = std::min<Eigen::Index>(lo + 1, motion.rows() - 1);
    const double w = pos - static_cast<double>(lo);
    out.row(t) = (1.0 - w) * motion.row(lo) + w * motion.row(hi);
  }
  return out;
}

bool matches_reference(const Mat& generated, const data::ActionScript& intended, const data::ActionScript& alternative,
                       const data::Normalizer& stats) {
  const Mat a = stats.normalize(data::synthesize_reference(intended).frames);
  const Mat b = stats.normalize(data::synthesize_reference(alternative).frames);
  return mse(resample(generated, static_cast<int>(a.rows())), a) < mse(resample(generated, static_cast<int>(b.rows())), b);
}

ProbeScore compositional_probe(const eval::MotionGenerator& generator, const std::vector<ProbePair>& pairs,
                               const data::Normalizer& stats, std::uint64_t seed) {
  ProbeScore score;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    for (int side = 0; side < 2; ++side) {
      const auto& script = side == 0 ? p.first : p.second;
      const auto& other = side == 0 ? p.second : p.first;
      data::Sample probe;
      probe.script = script;
      probe.normalized = Mat::Zero(script.total_frames(), data::kNumChannels);
      ++score.total;
      try {
        const Mat m = generator(probe, side == 0 ? p.first_prompt : p.second_prompt, mix_seed(seed, 2 * i + side));
        if (matches_reference(m, script, other, stats)) ++score.correct;
      } catch (const std::exception&) {
        // A failed generation counts as incorrect.
      }
    }
  }
  return score;
}

AlignmentScore attention_alignment_probe(const diffusion::DiffusionModel& model,
                                         const std::vector<data::Sample>& held_out, const text::Vocabulary& vocab,
                                         int max_prompts, std::uint64_t seed) {
  AlignmentScore score;
  for (std::size_t i = 0; i < held_out.size() && score.total < max_prompts; ++i) {
    const auto& script = held_out[i].script;
    if (script.steps.size() != 2) continue;
    const auto rendered = data::render_text_spans(script, mix_seed(seed, i));
    const auto tokens = text::tokenize(rendered.text, vocab);
    if (tokens.truncated) continue;
    diffusion::SampleOptions opt;
    opt.seed = mix_seed(seed ^ 0xA77ULL, i);
    const auto trace = attn::record_attention(model, tokens, vocab, script.total_frames(), opt);
    const auto map = attn::aggregate(trace);
    if (map.values.cols() != tokens.valid_count()) {
      throw std::logic_error("attention probe needs token-level conditioning");
    }
    // Word w of the prompt is token w + 1 (after BOS).
    const auto [first, last] = rendered.step_words[1];
    const auto rows = map.values.rows();
    const auto third = rows / 3;
    if (third < 1) continue;
    const auto mass = [&](Eigen::Index r0, Eigen::Index r1) {
      double total = 0.0;
      for (auto r = r0; r < r1; ++r) {
        for (int w = first; w < last; ++w) total += map.values(r, w + 1);
      }
      return total / static_cast<double>(r1 - r0);
    };
    const double early = mass(0, third);
    const double late = mass(rows - third, rows);
    score.early.push_back(early);
    score.late.push_back(late);
    ++score.total;
    if (late > early) ++score.passed;
  }
  return score;
}

}  // namespace casim::experiment
