#include "casim/experiment/train.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace casim::experiment {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 29;
  return x;
}

vq::VqvaeConfig vqvae_config(const io::ExperimentConfig& c) {
  vq::VqvaeConfig v;
  v.hidden = c.vqvae.hidden;
  v.latent = c.vqvae.latent;
  v.codes = c.vqvae.codes;
  v.downsample = c.vqvae.downsample;
  return v;
}

text::TextEncoderConfig text_config(const io::ExperimentConfig& c, int vocab_size) {
  text::TextEncoderConfig t;
  t.vocab_size = vocab_size;
  t.width = c.text.width;
  t.blocks = c.text.blocks;
  t.heads = c.text.heads;
  t.ff_hidden = c.text.ff_hidden;
  t.tap = text::parse_tap_point(c.text.tap);
  return t;
}

ar::ArConfig ar_config(const io::ExperimentConfig& c, int downsample) {
  ar::ArConfig a;
  a.codes = c.vqvae.codes;
  a.text_width = c.text.width;
  a.width = c.ar.width;
  a.blocks = c.ar.blocks;
  a.heads = c.ar.heads;
  a.ff_hidden = c.ar.ff_hidden;
  a.max_motion_tokens = data::kMaxFrames / downsample;
  return a;
}

diffusion::DiffusionConfig diffusion_config(const io::ExperimentConfig& c) {
  diffusion::DiffusionConfig d;
  d.text_width = c.text.width;
  d.width = c.diff.width;
  d.blocks = c.diff.blocks;
  d.heads = c.diff.heads;
  d.ff_hidden = c.diff.ff_hidden;
  d.variant = diffusion::parse_variant(c.diff.variant);
  d.steps = c.diff.steps;
  d.guidance = c.diff.guidance;
  d.cond_drop = c.diff.cond_drop;
  return d;
}

eval::MatcherConfig matcher_config(const io::ExperimentConfig& c, int vocab_size) {
  eval::MatcherConfig m;
  m.vocab_size = vocab_size;
  m.width = c.matcher.width;
  m.ff_hidden = 2 * c.matcher.width;
  return m;
}

eval::MatcherTrainConfig matcher_train_config(const io::ExperimentConfig& c, std::uint64_t seed) {
  eval::MatcherTrainConfig t;
  t.steps = c.matcher.steps;
  t.batch = c.matcher.batch;
  t.lr = c.matcher.lr;
  t.eval_every = c.matcher.eval_every;
  t.patience = c.matcher.patience;
  t.seed = seed;
  return t;
}

ar::SamplerConfig sampler_config(const io::ExperimentConfig& c) {
  ar::SamplerConfig s;
  if (c.ar.sampler == "greedy") {
    s.kind = ar::SamplerConfig::Kind::greedy;
  } else if (c.ar.sampler == "topk") {
    s.kind = ar::SamplerConfig::Kind::top_k;
  } else {
    throw std::invalid_argument("ar.sampler must be greedy or topk");
  }
  s.top_k = c.ar.top_k;
  s.temperature = c.ar.temperature;
  return s;
}

namespace {

long warmup_steps(int total) { return std::max(1, std::min(200, total / 10)); }

void report(const ProgressFn& progress, const std::string& what, int step, int total, double loss) {
  if (!progress) return;
  std::ostringstream os;
  os << what << " step " << step << "/" << total << " loss " << loss;
  progress(os.str());
}

Mat crop_or_pad(const Mat& m, int length, nn::Rng& rng) {
  if (m.rows() >= length) {
    const int start = std::uniform_int_distribution<int>(0, static_cast<int>(m.rows()) - length)(rng);
    return m.middleRows(start, length);
  }
  Mat out(length, m.cols());
  out.topRows(m.rows()) = m;
  for (Eigen::Index i = m.rows(); i < length; ++i) out.row(i) = m.row(m.rows() - 1);
  return out;
}

const std::string& random_prompt(const data::Sample& s, nn::Rng& rng) {
  return s.prompts[std::uniform_int_distribution<std::size_t>(0, s.prompts.size() - 1)(rng)];
}

}  // namespace

vq::MotionVqvae train_vqvae(const data::Dataset& ds, const io::ExperimentConfig& c, std::uint64_t seed,
                            const ProgressFn& progress) {
  if (ds.train.empty()) throw std::invalid_argument("train_vqvae: empty training split");
  const auto cfg = vqvae_config(c);
  vq::MotionVqvae model(cfg, seed);
  nn::AdamConfig ac;
  ac.lr = c.vqvae.lr;
  nn::Adam opt(model.params(), ac);
  nn::Rng rng(mix_seed(seed, 11));
  const int crop = c.vqvae.crop / cfg.downsample * cfg.downsample;
  if (crop < cfg.downsample) throw std::invalid_argument("vqvae.crop must be at least the downsample factor");
  std::uniform_int_distribution<std::size_t> pick(0, ds.train.size() - 1);
  const int steps = c.vqvae.steps;
  for (int step = 1; step <= steps; ++step) {
    opt.set_lr(nn::warmup_cosine_lr(c.vqvae.lr, step, steps, warmup_steps(steps)));
    std::vector<Mat> batch;
    for (int b = 0; b < c.vqvae.batch; ++b) batch.push_back(crop_or_pad(ds.train[pick(rng)].normalized, crop, rng));
    const auto losses = model.train_step(batch, opt, rng);
    if (step % 200 == 0 || step == steps) report(progress, "vqvae", step, steps, losses.reconstruction);
  }
  return model;
}

std::vector<std::vector<int>> tokenize_split(const vq::MotionVqvae& vq, const std::vector<data::Sample>& samples) {
  nn::NoGradGuard guard;
  std::vector<std::vector<int>> out;
  for (const auto& s : samples) out.push_back(vq.tokenize(s.normalized).ids);
  return out;
}

ar::ArModel train_ar(const data::Dataset& ds, const vq::MotionVqvae& vq, const io::ExperimentConfig& c,
                     text::Injection inject, std::uint64_t seed, const ProgressFn& progress) {
  if (ds.train.empty()) throw std::invalid_argument("train_ar: empty training split");
  ar::ArModel model(text_config(c, ds.vocab.size()), ar_config(c, vq.config().downsample), inject, seed);
  const auto tokens = tokenize_split(vq, ds.train);
  const auto tf = ar::parse_teacher_forcing(c.ar.teacher_forcing);
  nn::AdamConfig ac;
  ac.lr = c.ar.lr;
  nn::Adam opt(model.params(), ac);
  nn::Rng rng(mix_seed(seed, 22));
  std::uniform_int_distribution<std::size_t> pick(0, ds.train.size() - 1);
  const int steps = c.ar.steps;
  for (int step = 1; step <= steps; ++step) {
    opt.set_lr(nn::warmup_cosine_lr(c.ar.lr, step, steps, warmup_steps(steps)));
    std::vector<ar::ArExample> batch;
    for (int b = 0; b < c.ar.batch; ++b) {
      const auto i = pick(rng);
      batch.push_back({text::tokenize(random_prompt(ds.train[i], rng), ds.vocab), tokens[i]});
    }
    const double loss = model.train_step(batch, tf, opt, rng);
    if (step % 200 == 0 || step == steps) report(progress, "ar", step, steps, loss);
  }
  return model;
}

diffusion::DiffusionModel train_diffusion(const data::Dataset& ds, const io::ExperimentConfig& c,
                                          text::Injection inject, std::uint64_t seed, const ProgressFn& progress) {
  if (ds.train.empty()) throw std::invalid_argument("train_diffusion: empty training split");
  diffusion::DiffusionModel model(text_config(c, ds.vocab.size()), diffusion_config(c), inject, seed);
  nn::AdamConfig ac;
  ac.lr = c.diff.lr;
  nn::Adam opt(model.params(), ac);
  nn::Rng rng(mix_seed(seed, 33));
  std::uniform_int_distribution<std::size_t> pick(0, ds.train.size() - 1);
  const int steps = c.diff.train_steps;
  for (int step = 1; step <= steps; ++step) {
    opt.set_lr(nn::warmup_cosine_lr(c.diff.lr, step, steps, warmup_steps(steps)));
    std::vector<diffusion::DiffusionExample> batch;
    for (int b = 0; b < c.diff.batch; ++b) {
      const auto& s = ds.train[pick(rng)];
      batch.push_back({text::tokenize(random_prompt(s, rng), ds.vocab), s.normalized});
    }
    const double loss = model.train_step(batch, opt, rng);
    if (step % 200 == 0 || step == steps) report(progress, "diffusion", step, steps, loss);
  }
  return model;
}

eval::Matcher train_matcher(const data::Dataset& ds, const io::ExperimentConfig& c, std::uint64_t seed,
                            eval::MatcherTrainResult* result, const ProgressFn& progress) {
  eval::Matcher matcher(matcher_config(c, ds.vocab.size()), seed);
  auto r = eval::train_matcher(matcher, ds, matcher_train_config(c, seed), progress);
  if (result) *result = r;
  return matcher;
}

eval::MotionGenerator ar_generator(const ar::ArModel& model, const vq::MotionVqvae& vq,
                                   const text::Vocabulary& vocab, const ar::SamplerConfig& sampler) {
  return [&model, &vq, &vocab, sampler](const data::Sample&, const std::string& prompt, std::uint64_t seed) {
    ar::SamplerConfig s = sampler;
    s.seed = seed;
    const auto result = model.sample(text::tokenize(prompt, vocab), s);
    if (result.empty) throw std::runtime_error("empty motion (END emitted first)");
    nn::NoGradGuard guard;
    return vq.decode_tokens(result.tokens);
  };
}

eval::MotionGenerator diffusion_generator(const diffusion::DiffusionModel& model, const text::Vocabulary& vocab,
                                          std::optional<double> guidance) {
  return [&model, &vocab, guidance](const data::Sample& entry, const std::string& prompt, std::uint64_t seed) {
    diffusion::SampleOptions opt;
    opt.seed = seed;
    opt.guidance = guidance;
    return model.sample(text::tokenize(prompt, vocab), static_cast<int>(entry.normalized.rows()), opt).frames;
  };
}

eval::MotionGenerator ground_truth_generator() {
  return [](const data::Sample& entry, const std::string&, std::uint64_t) { return entry.normalized; };
}

}  // namespace casim::experiment
