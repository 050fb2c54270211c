#include "casim/longform/longform.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace casim::longform {

namespace {

std::uint64_t clip_seed(std::uint64_t seed, std::size_t i) { return seed * 0x9E3779B97F4A7C15ULL + 1000003ULL * (i + 1); }

Mat gaussian(Eigen::Index rows, Eigen::Index cols, nn::Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

std::vector<Window> clip_spans(const std::vector<int>& lengths, int h) {
  std::vector<Window> spans;
  int start = 0;
  for (int len : lengths) {
    spans.push_back({start, start + len});
    start += len - h;
  }
  return spans;
}

std::vector<Window> windows_for(const std::vector<Window>& spans, int h) {
  std::vector<Window> out;
  if (h == 0) return out;
  for (std::size_t i = 0; i + 1 < spans.size(); ++i) {
    const int center = spans[i + 1].start + h / 2;
    out.push_back({center - h, center + h});
  }
  return out;
}

}  // namespace

int timeline_length(const std::vector<int>& lengths, int handshake) {
  int total = 0;
  for (int len : lengths) total += len;
  return total - handshake * (static_cast<int>(lengths.size()) - 1);
}

void validate_plan(const LongformPlan& plan, int max_frames) {
  const int h = plan.handshake;
  if (plan.prompts.size() < 2) throw std::invalid_argument("longform plan needs at least 2 prompts");
  if (plan.lengths.size() != plan.prompts.size()) {
    throw std::invalid_argument("longform plan has " + std::to_string(plan.lengths.size()) + " lengths for " +
                                std::to_string(plan.prompts.size()) + " prompts");
  }
  if (h < 0) throw std::invalid_argument("longform handshake must be >= 0");
  for (std::size_t i = 0; i < plan.lengths.size(); ++i) {
    const int len = plan.lengths[i];
    if (len <= 2 * h) {
      throw std::invalid_argument("clip " + std::to_string(i) + " length " + std::to_string(len) +
                                  " must exceed twice the handshake (" + std::to_string(2 * h) + ")");
    }
    if (len > max_frames) {
      throw std::invalid_argument("clip " + std::to_string(i) + " length " + std::to_string(len) + " exceeds " +
                                  std::to_string(max_frames) + " frames");
    }
    const bool inner = i > 0 && i + 1 < plan.lengths.size();
    if (inner && len < 3 * h) {
      throw std::invalid_argument("inner clip " + std::to_string(i) + " length " + std::to_string(len) +
                                  " makes transition windows overlap (need >= " + std::to_string(3 * h) + ")");
    }
  }
  if (plan.refine && *plan.refine < 0) throw std::invalid_argument("longform refine steps must be >= 0");
}

std::vector<Mat> generate_clips(const LongformPlan& plan, const diffusion::DiffusionModel& model,
                                const text::Vocabulary& vocab) {
  validate_plan(plan, model.denoiser().config().max_frames);
  std::vector<Mat> clips;
  for (std::size_t i = 0; i < plan.prompts.size(); ++i) {
    diffusion::SampleOptions opt;
    opt.seed = clip_seed(plan.seed, i);
    opt.guidance = plan.guidance;
    clips.push_back(model.sample(text::tokenize(plan.prompts[i], vocab), plan.lengths[i], opt).frames);
  }
  return clips;
}

LongMotion blend_handshake(const std::vector<Mat>& clips, int handshake) {
  if (clips.empty()) throw std::invalid_argument("blend_handshake: no clips");
  const int h = handshake;
  std::vector<int> lengths;
  for (const auto& c : clips) {
    if (c.rows() < h) throw std::invalid_argument("blend_handshake: clip shorter than the handshake");
    if (c.cols() != clips.front().cols()) throw std::invalid_argument("blend_handshake: channel counts differ");
    lengths.push_back(static_cast<int>(c.rows()));
  }
  LongMotion out;
  out.clips = clip_spans(lengths, h);
  out.windows = windows_for(out.clips, h);
  out.frames = Mat::Zero(timeline_length(lengths, h), clips.front().cols());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const int start = out.clips[i].start;
    const int skip = i == 0 ? 0 : h;  // overlap rows are written by the blend below
    out.frames.middleRows(start + skip, lengths[i] - skip) = clips[i].bottomRows(lengths[i] - skip);
    if (i == 0 || h == 0) continue;
    const Mat& left = clips[i - 1];
    const Mat& right = clips[i];
    for (int t = 0; t < h; ++t) {
      const double w = static_cast<double>(t) / h;
      out.frames.row(start + t) = (1.0 - w) * left.row(left.rows() - h + t) + w * right.row(t);
    }
  }
  return out;
}

LongMotion refine_transitions(const LongMotion& motion, const diffusion::DiffusionModel& model,
                              const LongformPlan& plan, const text::Vocabulary& vocab) {
  const int n_steps = model.schedule().steps;
  const int r = plan.refine.value_or(n_steps / 2);
  if (r > n_steps) throw std::invalid_argument("refine steps exceed the model's step count");
  LongMotion out = motion;
  if (r <= 0 || out.windows.empty()) return out;
  const int h = plan.handshake;
  const int total = static_cast<int>(out.frames.rows());
  const int max_frames = model.denoiser().config().max_frames;
  const double guidance = plan.guidance.value_or(model.denoiser().config().guidance);

  for (std::size_t k = 0; k < out.windows.size(); ++k) {
    const Window w = out.windows[k];
    int lo = std::max(0, w.start - h);
    int hi = std::min(total, w.end + h);
    while (hi - lo > max_frames) {
      if (w.start - lo > hi - w.end) {
        ++lo;
      } else {
        --hi;
      }
    }
    const Mat original = out.frames.middleRows(lo, hi - lo);
    nn::Rng rng(clip_seed(plan.seed ^ 0x7E41ULL, k));
    const auto cond = model.condition(text::tokenize(plan.prompts[std::min(k + 1, plan.prompts.size() - 1)], vocab));
    Mat x = diffusion::q_sample(original, r, gaussian(original.rows(), original.cols(), rng), model.schedule());
    const int ws = w.start - lo;
    const int we = w.end - lo;
    for (int step = r; step >= 1; --step) {
      x = model.p_sample_step(x, step, cond, guidance, rng);
      const Mat renoised =
          diffusion::q_sample(original, step - 1, gaussian(original.rows(), original.cols(), rng), model.schedule());
      x.topRows(ws) = renoised.topRows(ws);
      x.bottomRows(x.rows() - we) = renoised.bottomRows(x.rows() - we);
    }
    out.frames.middleRows(w.start, w.end - w.start) = x.middleRows(ws, we - ws);
  }
  return out;
}

LongMotion generate_longform(const LongformPlan& plan, const diffusion::DiffusionModel& model,
                             const text::Vocabulary& vocab) {
  const auto clips = generate_clips(plan, model, vocab);
  return refine_transitions(blend_handshake(clips, plan.handshake), model, plan, vocab);
}

std::vector<Mat> transition_windows(const LongMotion& motion) {
  std::vector<Mat> out;
  for (const auto& w : motion.windows) out.push_back(motion.frames.middleRows(w.start, w.end - w.start));
  return out;
}

std::vector<Mat> random_crops(const std::vector<const Mat*>& motions, int count, int length, std::uint64_t seed) {
  std::vector<const Mat*> eligible;
  for (const Mat* m : motions) {
    if (m->rows() >= length) eligible.push_back(m);
  }
  if (eligible.empty()) throw std::invalid_argument("random_crops: no motion has " + std::to_string(length) + " frames");
  nn::Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<Mat> out;
  for (int i = 0; i < count; ++i) {
    const Mat& m = *eligible[pick(rng)];
    const int start = std::uniform_int_distribution<int>(0, static_cast<int>(m.rows()) - length)(rng);
    out.push_back(m.middleRows(start, length));
  }
  return out;
}

std::vector<Mat> boundary_crops(const std::vector<const data::Sample*>& samples, int handshake) {
  std::vector<Mat> out;
  const int h = handshake;
  for (const auto* s : samples) {
    const auto& segs = s->motion.segments;
    const int t = static_cast<int>(s->normalized.rows());
    for (std::size_t i = 1; i < segs.size(); ++i) {
      const int start = segs[i].start - h;
      if (start < 0 || start + 2 * h > t) continue;
      out.push_back(s->normalized.middleRows(start, 2 * h));
    }
  }
  return out;
}

TransitionMetrics transition_metrics(const std::vector<Mat>& windows, const std::vector<Mat>& reference,
                                     const eval::Matcher& matcher, std::uint64_t seed) {
  if (windows.size() < 2 || reference.size() < 2) throw std::invalid_argument("transition_metrics: need >= 2 windows");
  const Mat wf = matcher.motion_features(windows);
  const Mat rf = matcher.motion_features(reference);
  TransitionMetrics m;
  const auto f = eval::fid(wf, rf);
  m.fid = f.value;
  m.fid_regularized = f.regularized;
  m.windows = static_cast<int>(windows.size());
  m.diversity = eval::diversity(wf, std::min(100, m.windows / 2), seed);
  return m;
}

double max_window_delta(const LongMotion& motion) {
  double best = 0.0;
  for (const auto& w : motion.windows) {
    for (int t = w.start + 1; t < w.end; ++t) best = std::max(best, (motion.frames.row(t) - motion.frames.row(t - 1)).norm());
  }
  return best;
}

double clip_delta_p95(const LongMotion& motion) {
  std::vector<double> deltas;
  for (int t = 1; t < motion.frames.rows(); ++t) {
    bool inside = false;
    for (const auto& w : motion.windows) inside = inside || (t >= w.start && t <= w.end);
    if (!inside) deltas.push_back((motion.frames.row(t) - motion.frames.row(t - 1)).norm());
  }
  if (deltas.empty()) return 0.0;
  const auto k = static_cast<std::size_t>(std::floor(0.95 * static_cast<double>(deltas.size() - 1)));
  std::nth_element(deltas.begin(), deltas.begin() + static_cast<std::ptrdiff_t>(k), deltas.end());
  return deltas[k];
}

}  // namespace casim::longform
