#include "casim/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace casim::diffusion {

DiffusionSchedule make_schedule(int steps, double offset) {
  if (steps < 2) throw std::invalid_argument("make_schedule: need at least 2 steps");
  const auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  DiffusionSchedule s;
  s.steps = steps;
  const auto n = static_cast<std::size_t>(steps) + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.posterior_variance.assign(n, 0.0);
  s.posterior_c0.assign(n, 1.0);
  s.posterior_ct.assign(n, 0.0);
  const double f0 = f(0.0);
  for (int t = 1; t <= steps; ++t) {
    const double ab = f(t) / f0;
    const double ab_prev = f(t - 1) / f0;
    const auto i = static_cast<std::size_t>(t);
    s.beta[i] = std::clamp(1.0 - ab / ab_prev, 1e-5, 0.999);
    s.alpha[i] = 1.0 - s.beta[i];
    s.alpha_bar[i] = s.alpha_bar[i - 1] * s.alpha[i];
    const double ab_t = s.alpha_bar[i];
    const double ab_p = s.alpha_bar[i - 1];
    s.posterior_variance[i] = s.beta[i] * (1.0 - ab_p) / (1.0 - ab_t);
    s.posterior_c0[i] = s.beta[i] * std::sqrt(ab_p) / (1.0 - ab_t);
    s.posterior_ct[i] = std::sqrt(s.alpha[i]) * (1.0 - ab_p) / (1.0 - ab_t);
  }
  return s;
}

Mat q_sample(const Mat& x0, double alpha_bar, const Mat& noise) {
  if (x0.rows() != noise.rows() || x0.cols() != noise.cols()) throw std::invalid_argument("q_sample: noise shape mismatch");
  if (!(alpha_bar >= 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("q_sample: alpha_bar outside [0, 1]");
  if (alpha_bar == 1.0) return x0;
  if (alpha_bar == 0.0) return noise;
  return std::sqrt(alpha_bar) * x0 + std::sqrt(1.0 - alpha_bar) * noise;
}

Mat q_sample(const Mat& x0, int step, const Mat& noise, const DiffusionSchedule& schedule) {
  if (step < 0 || step > schedule.steps) {
    throw std::out_of_range("q_sample: step " + std::to_string(step) + " outside [0, " + std::to_string(schedule.steps) + "]");
  }
  return q_sample(x0, schedule.alpha_bar[static_cast<std::size_t>(step)], noise);
}

Mat posterior_mean(const Mat& x0_hat, const Mat& x_t, int step, const DiffusionSchedule& schedule) {
  const auto i = static_cast<std::size_t>(step);
  return schedule.posterior_c0[i] * x0_hat + schedule.posterior_ct[i] * x_t;
}

std::string to_string(Variant v) { return v == Variant::encoder ? "enc" : "dec"; }

Variant parse_variant(const std::string& s) {
  if (s == "enc" || s == "encoder") return Variant::encoder;
  if (s == "dec" || s == "decoder") return Variant::decoder;
  throw std::invalid_argument("unknown denoiser variant '" + s + "' (expected enc or dec)");
}

Denoiser::Denoiser(const DiffusionConfig& config, std::uint64_t seed) : final_norm(config.width), config_(config) {
  if (config.heads < 1 || config.width % config.heads != 0) {
    throw std::invalid_argument("Denoiser: head count must divide width");
  }
  nn::Rng rng(seed);
  frame_in = nn::Linear(config.channels, config.width, rng);
  text_proj = nn::Linear(config.text_width, config.width, rng);
  time_in = nn::Linear(config.width, config.width, rng);
  time_out = nn::Linear(config.width, config.width, rng);
  null_embedding = Var(nn::randn(1, config.width, 0.02, rng), true);
  for (int b = 0; b < config.blocks; ++b) {
    if (config.variant == Variant::encoder) {
      encoder_blocks.emplace_back(config.width, config.heads, config.ff_hidden, rng);
    } else {
      decoder_blocks.emplace_back(config.width, config.heads, config.ff_hidden, rng);
    }
  }
  frame_out = nn::Linear(config.width, config.channels, rng);
  positions_ = nn::sinusoidal_table(config.max_frames, config.width);
}

nn::ParamList Denoiser::params() const {
  nn::ParamList p;
  frame_in.register_params(p, "frame_in");
  text_proj.register_params(p, "text_proj");
  time_in.register_params(p, "time_in");
  time_out.register_params(p, "time_out");
  p.add("null_embedding", null_embedding);
  for (std::size_t b = 0; b < encoder_blocks.size(); ++b) encoder_blocks[b].register_params(p, "enc_blocks." + std::to_string(b));
  for (std::size_t b = 0; b < decoder_blocks.size(); ++b) decoder_blocks[b].register_params(p, "dec_blocks." + std::to_string(b));
  final_norm.register_params(p, "final_norm");
  frame_out.register_params(p, "frame_out");
  return p;
}

DenoiserCondition Denoiser::project(const text::TextEmbeddingSeq& text) const {
  if (text.embeddings.cols() != config_.text_width) {
    throw std::invalid_argument("denoise: text width " + std::to_string(text.embeddings.cols()) + " != configured " +
                                std::to_string(config_.text_width));
  }
  return {nn::mask_rows(text_proj(text.embeddings), text.valid), text.valid};
}

DenoiserCondition Denoiser::null_condition() const { return {null_embedding, {true}}; }

Var Denoiser::timestep_embedding(int step) const {
  Mat te = nn::sinusoidal_row(static_cast<double>(step), config_.width);
  return time_out(nn::gelu(time_in(nn::constant(te))));
}

Var Denoiser::denoise(const Var& x_t, int step, const DenoiserCondition& cond,
                      std::vector<nn::LayerAttention>* capture) const {
  const auto t = x_t.rows();
  if (x_t.cols() != config_.channels) {
    std::ostringstream os;
    os << "denoise: motion is " << t << " x " << x_t.cols() << ", expected T x " << config_.channels;
    throw std::invalid_argument(os.str());
  }
  if (t < 1 || t > config_.max_frames) {
    throw std::invalid_argument("denoise: " + std::to_string(t) + " frames outside [1, " + std::to_string(config_.max_frames) + "]");
  }
  const auto l = cond.rows.rows();
  if (l < 1 || cond.rows.cols() != config_.width || static_cast<Eigen::Index>(cond.valid.size()) != l) {
    std::ostringstream os;
    os << "denoise: condition is " << l << " x " << cond.rows.cols() << " with " << cond.valid.size()
       << " validity flags, expected L x " << config_.width;
    throw std::invalid_argument(os.str());
  }
  if (step < 0) throw std::invalid_argument("denoise: negative step");

  Var memory = nn::mask_rows(nn::add_row(cond.rows, timestep_embedding(step)), cond.valid);
  Var h = nn::add(frame_in(x_t), nn::constant(positions_.topRows(t)));

  if (config_.variant == Variant::encoder) {
    const auto n = l + t;
    nn::BoolMat mask(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool ok = j >= l || cond.valid[static_cast<std::size_t>(j)];
      mask.col(j).setConstant(ok);
    }
    Var seq = nn::concat_rows({memory, h});
    for (const auto& block : encoder_blocks) {
      nn::LayerAttention full;
      seq = block(seq, &mask, capture ? &full : nullptr);
      if (capture) {
        nn::LayerAttention cut;
        for (const auto& p : full.heads) cut.heads.push_back(p.block(l, 0, t, l));
        capture->push_back(std::move(cut));
      }
    }
    h = nn::slice_rows(seq, l, t);
  } else {
    nn::BoolMat cross(t, l);
    for (Eigen::Index j = 0; j < l; ++j) cross.col(j).setConstant(static_cast<bool>(cond.valid[static_cast<std::size_t>(j)]));
    for (const auto& block : decoder_blocks) {
      nn::LayerAttention* cap = nullptr;
      if (capture) {
        capture->emplace_back();
        cap = &capture->back();
      }
      h = block(h, memory, nullptr, &cross, cap);
    }
  }
  return frame_out(final_norm(h));
}

DiffusionModel::DiffusionModel(const text::TextEncoderConfig& text_config, const DiffusionConfig& config,
                               text::Injection inject, std::uint64_t seed)
    : encoder_(text_config, seed), denoiser_(config, seed + 1), inject_(inject), schedule_(make_schedule(config.steps)) {
  if (config.text_width != text_config.width) {
    throw std::invalid_argument("DiffusionModel: denoiser text width does not match encoder width");
  }
}

nn::ParamList DiffusionModel::params() const {
  nn::ParamList p;
  p.extend(encoder_.params(), "text.");
  p.extend(denoiser_.params(), "diff.");
  return p;
}

DenoiserCondition DiffusionModel::condition(const text::TextTokenSeq& tokens) const {
  return denoiser_.project(text::condition(encoder_, tokens, inject_));
}

Var DiffusionModel::loss(const DiffusionExample& example, int step, const Mat& noise, bool drop_condition) const {
  const Mat x_t = q_sample(example.motion, step, noise, schedule_);
  const DenoiserCondition cond = drop_condition ? denoiser_.null_condition() : condition(example.text);
  Var x0_hat = denoiser_.denoise(nn::constant(x_t), step, cond);
  return nn::mse_loss(x0_hat, nn::constant(example.motion));
}

double DiffusionModel::train_step(const std::vector<DiffusionExample>& batch, nn::Adam& optimizer, nn::Rng& rng,
                                  std::optional<double> cond_drop) {
  if (batch.empty()) throw std::invalid_argument("diffusion train_step: empty batch");
  const double p = cond_drop.value_or(denoiser_.config().cond_drop);
  optimizer.zero_grad();
  std::uniform_int_distribution<int> pick_step(1, schedule_.steps);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  last_dropped_ = 0;
  double total = 0.0;
  for (const auto& ex : batch) {
    const int step = pick_step(rng);
    const bool drop = p > 0.0 && coin(rng) < p;
    last_dropped_ += drop ? 1 : 0;
    Mat noise(ex.motion.rows(), ex.motion.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    Var l = nn::scale(loss(ex, step, noise, drop), 1.0 / static_cast<double>(batch.size()));
    if (!std::isfinite(l.item())) {
      std::ostringstream os;
      os << "diffusion train_step: non-finite loss at step " << step << " (frames " << ex.motion.rows()
         << ", |x0|max " << ex.motion.cwiseAbs().maxCoeff() << ")";
      throw std::runtime_error(os.str());
    }
    l.backward();
    total += l.item();
  }
  params().check_finite("diffusion train_step (gradients applied next)");
  optimizer.step();
  return total;
}

Mat DiffusionModel::guided_x0(const Mat& x_t, int step, const DenoiserCondition& cond, double guidance,
                              std::vector<nn::LayerAttention>* capture) const {
  nn::NoGradGuard guard;
  const Var x = nn::constant(x_t);
  Mat cond_x0 = denoiser_.denoise(x, step, cond, capture).value();
  Mat out;
  if (guidance == 0.0) {
    out = std::move(cond_x0);
  } else {
    const Mat uncond_x0 = denoiser_.denoise(x, step, denoiser_.null_condition()).value();
    out = (1.0 + guidance) * cond_x0 - guidance * uncond_x0;
  }
  const double c = denoiser_.config().clip;
  return out.cwiseMax(-c).cwiseMin(c);
}

Mat DiffusionModel::p_sample_step(const Mat& x_t, int step, const DenoiserCondition& cond, double guidance,
                                  nn::Rng& rng, std::vector<nn::LayerAttention>* capture) const {
  if (step < 1 || step > schedule_.steps) throw std::out_of_range("p_sample_step: step out of range");
  if (guidance < 0.0) throw std::invalid_argument("p_sample_step: guidance must be >= 0");
  const Mat x0_hat = guided_x0(x_t, step, cond, guidance, capture);
  Mat mean = posterior_mean(x0_hat, x_t, step, schedule_);
  if (step == 1) return mean;
  const double sigma = std::sqrt(schedule_.posterior_variance[static_cast<std::size_t>(step)]);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < mean.size(); ++i) mean.data()[i] += sigma * normal(rng);
  return mean;
}

SampleResult DiffusionModel::sample(const text::TextTokenSeq& tokens, int frames, const SampleOptions& options,
                                    std::vector<nn::LayerAttention>* trace) const {
  nn::NoGradGuard guard;
  if (frames < 1 || frames > denoiser_.config().max_frames) {
    throw std::invalid_argument("sample: frame count " + std::to_string(frames) + " out of range");
  }
  const double guidance = options.guidance.value_or(denoiser_.config().guidance);
  nn::Rng rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const DenoiserCondition cond = condition(tokens);
  Mat x(frames, denoiser_.config().channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  SampleResult result;
  for (int step = schedule_.steps; step >= 1; --step) {
    x = p_sample_step(x, step, cond, guidance, rng, step == options.capture_step ? trace : nullptr);
    ++result.steps_run;
  }
  result.frames = std::move(x);
  return result;
}

}  // namespace casim::diffusion
