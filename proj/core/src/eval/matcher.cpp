#include "casim/eval/matcher.hpp"

#include "casim/nn/optim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace casim::eval {

namespace {

text::TextEncoderConfig text_config(const MatcherConfig& c) {
  text::TextEncoderConfig t;
  t.vocab_size = c.vocab_size;
  t.width = c.width;
  t.blocks = c.text_blocks;
  t.heads = c.heads;
  t.ff_hidden = c.ff_hidden;
  t.max_length = c.max_length;
  t.tap = text::TapPoint::final_layer;
  return t;
}

// Pads by repeating the last frame up to a multiple of `patch`.
Mat pad_to_patch(const Mat& frames, int patch) {
  const auto t = frames.rows();
  const auto padded = (t + patch - 1) / patch * patch;
  if (padded == t) return frames;
  Mat out(padded, frames.cols());
  out.topRows(t) = frames;
  for (auto i = t; i < padded; ++i) out.row(i) = frames.row(t - 1);
  return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 29;
  return x;
}

}  // namespace

Matcher::Matcher(const MatcherConfig& config, std::uint64_t seed)
    : text_encoder(text_config(config), seed), motion_norm(config.width), config_(config) {
  nn::Rng rng(seed + 7);
  text_head = nn::Linear(config.width, config.embed, rng);
  motion_in = nn::Linear(config.patch * data::kNumChannels, config.width, rng);
  for (int b = 0; b < config.motion_blocks; ++b) motion_blocks.emplace_back(config.width, config.heads, config.ff_hidden, rng);
  motion_head = nn::Linear(config.width, config.embed, rng);
  log_scale = Var(Mat::Constant(1, 1, std::log(1.0 / config.temperature)), true);
  positions_ = nn::sinusoidal_table(data::kMaxFrames / config.patch + 2, config.width);
}

nn::ParamList Matcher::params() const {
  nn::ParamList p;
  p.extend(text_encoder.params(), "text.");
  text_head.register_params(p, "text_head");
  motion_in.register_params(p, "motion_in");
  for (std::size_t b = 0; b < motion_blocks.size(); ++b) motion_blocks[b].register_params(p, "motion_blocks." + std::to_string(b));
  motion_norm.register_params(p, "motion_norm");
  motion_head.register_params(p, "motion_head");
  p.add("log_scale", log_scale);
  return p;
}

double Matcher::temperature() const { return std::exp(-log_scale.value()(0, 0)); }

Var Matcher::embed_text(const text::TextTokenSeq& tokens) const {
  auto seq = text_encoder.encode(tokens);
  Mat weights = Mat::Zero(1, tokens.length());
  const double n = static_cast<double>(tokens.valid_count());
  for (int i = 0; i < tokens.length(); ++i) {
    if (tokens.valid[static_cast<std::size_t>(i)]) weights(0, i) = 1.0 / n;
  }
  return text_head(nn::matmul(nn::constant(weights), seq.embeddings));
}

Var Matcher::embed_motion(const Mat& normalized_frames) const {
  if (normalized_frames.rows() < 1 || normalized_frames.cols() != data::kNumChannels) {
    throw std::invalid_argument("matcher: motion must be T x " + std::to_string(data::kNumChannels));
  }
  if (!normalized_frames.allFinite()) throw std::invalid_argument("matcher: non-finite motion");
  Mat padded = pad_to_patch(normalized_frames, config_.patch);
  if (padded.rows() / config_.patch > positions_.rows()) throw std::invalid_argument("matcher: motion too long");
  Var x = nn::unfold1d(nn::constant(std::move(padded)), config_.patch, config_.patch, 0);
  Var h = nn::add(motion_in(x), nn::constant(positions_.topRows(x.rows())));
  for (const auto& block : motion_blocks) h = block(h, nullptr);
  return motion_head(nn::mean_rows(motion_norm(h)));
}

Mat Matcher::text_features(const std::vector<text::TextTokenSeq>& tokens) const {
  nn::NoGradGuard guard;
  Mat out(static_cast<Eigen::Index>(tokens.size()), config_.embed);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = nn::l2_normalize_rows(embed_text(tokens[i])).value();
  }
  return out;
}

Mat Matcher::motion_features(const std::vector<Mat>& motions) const {
  nn::NoGradGuard guard;
  Mat out(static_cast<Eigen::Index>(motions.size()), config_.embed);
  for (std::size_t i = 0; i < motions.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = nn::l2_normalize_rows(embed_motion(motions[i])).value();
  }
  return out;
}

Var Matcher::contrastive_loss(const std::vector<text::TextTokenSeq>& texts, const std::vector<const Mat*>& motions) const {
  if (texts.size() != motions.size() || texts.size() < 2) throw std::invalid_argument("contrastive_loss: need >= 2 matched pairs");
  std::vector<Var> t, m;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    t.push_back(embed_text(texts[i]));
    m.push_back(embed_motion(*motions[i]));
  }
  Var tn = nn::l2_normalize_rows(nn::concat_rows(t));
  Var mn = nn::l2_normalize_rows(nn::concat_rows(m));
  Var logits = nn::mul_scalar(nn::matmul_nt(tn, mn), nn::exp(log_scale));
  std::vector<int> diag(texts.size());
  std::iota(diag.begin(), diag.end(), 0);
  return nn::scale(nn::add(nn::cross_entropy(logits, diag), nn::cross_entropy(nn::transpose(logits), diag)), 0.5);
}

double mean_pairwise_distance(const Mat& features) {
  const auto n = features.rows();
  if (n < 2) return 0.0;
  double total = 0.0;
  long count = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      total += (features.row(i) - features.row(j)).norm();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MatcherTrainResult train_matcher(Matcher& matcher, const data::Dataset& dataset, const MatcherTrainConfig& config,
                                 const ProgressFn& progress) {
  const auto& train = dataset.train;
  const auto& valid = dataset.valid.size() >= 32 ? dataset.valid : dataset.test;
  if (train.size() < 2) throw std::invalid_argument("train_matcher: training split too small");
  if (valid.size() < 32) throw std::invalid_argument("train_matcher: need >= 32 validation entries");

  std::vector<text::TextTokenSeq> valid_text;
  std::vector<Mat> valid_motion;
  for (const auto& s : valid) {
    valid_text.push_back(text::tokenize(s.prompts.front(), dataset.vocab));
    valid_motion.push_back(s.normalized);
  }
  const auto validate = [&](int step) {
    const Mat tf = matcher.text_features(valid_text);
    const Mat mf = matcher.motion_features(valid_motion);
    const double spread = mean_pairwise_distance(mf);
    if (spread < 1e-3) {
      throw std::runtime_error("train_matcher: embedding collapse at step " + std::to_string(step) +
                               " (mean pairwise distance " + std::to_string(spread) + ")");
    }
    return r_precision(tf, mf, 32, config.seed ^ 0x7A11ULL).top1;
  };

  nn::ParamList params = matcher.params();
  nn::AdamConfig ac;
  ac.lr = config.lr;
  nn::Adam opt(params, ac);
  nn::Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);

  MatcherTrainResult result;
  std::vector<Mat> best;
  const auto snapshot = [&] {
    best.clear();
    for (const auto& [name, p] : params.entries()) best.push_back(p.value());
  };
  result.best_valid_top1 = validate(0);
  snapshot();
  int stale = 0;
  const double max_log_scale = std::log(100.0);
  for (int step = 1; step <= config.steps; ++step) {
    opt.set_lr(nn::warmup_cosine_lr(config.lr, step, config.steps, std::min(200, config.steps / 10)));
    std::vector<text::TextTokenSeq> texts;
    std::vector<const Mat*> motions;
    for (int b = 0; b < config.batch; ++b) {
      const auto& s = train[pick(rng)];
      const auto& prompt = s.prompts[std::uniform_int_distribution<std::size_t>(0, s.prompts.size() - 1)(rng)];
      texts.push_back(text::tokenize(prompt, dataset.vocab));
      motions.push_back(&s.normalized);
    }
    opt.zero_grad();
    Var loss = matcher.contrastive_loss(texts, motions);
    if (!std::isfinite(loss.item())) throw std::runtime_error("train_matcher: non-finite loss at step " + std::to_string(step));
    loss.backward();
    opt.step();
    auto& ls = matcher.log_scale.mutable_value()(0, 0);
    ls = std::min(ls, max_log_scale);
    result.steps_run = step;

    if (step % config.eval_every == 0 || step == config.steps) {
      const double top1 = validate(step);
      result.history.emplace_back(step, top1);
      if (progress) {
        std::ostringstream os;
        os << "matcher step " << step << " loss " << loss.item() << " valid top1 " << top1;
        progress(os.str());
      }
      if (top1 > result.best_valid_top1) {
        result.best_valid_top1 = top1;
        snapshot();
        stale = 0;
      } else if (++stale >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < best.size(); ++i) params.entries()[i].second.mutable_value() = best[i];
  return result;
}

EvalReport evaluate_model(const MotionGenerator& generator, const Matcher& matcher,
                          const std::vector<data::Sample>& test, const text::Vocabulary& vocab,
                          const EvalOptions& options, const std::string& label) {
  if (options.repeats < 1) throw std::invalid_argument("evaluate_model: repeats must be >= 1");
  std::size_t n = test.size();
  if (options.max_entries > 0) n = std::min(n, static_cast<std::size_t>(options.max_entries));
  if (static_cast<int>(n) < options.pool) {
    throw std::invalid_argument("evaluate_model: " + std::to_string(n) + " entries is fewer than the pool size");
  }
  std::vector<Mat> gt;
  for (std::size_t i = 0; i < n; ++i) gt.push_back(test[i].normalized);
  const Mat gt_features = matcher.motion_features(gt);

  EvalReport report;
  report.label = label;
  report.pool = options.pool;
  report.seed = options.seed;
  report.entries = static_cast<int>(n);
  report.diversity_pairs = options.diversity_pairs;

  for (int r = 0; r < options.repeats; ++r) {
    const std::uint64_t rs = mix(options.seed, static_cast<std::uint64_t>(r));
    nn::Rng rng(rs);
    std::vector<text::TextTokenSeq> texts;
    std::vector<Mat> motions;
    RepeatMetrics m;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = test[i];
      const auto& prompt = s.prompts[std::uniform_int_distribution<std::size_t>(0, s.prompts.size() - 1)(rng)];
      try {
        Mat out = generator(s, prompt, mix(rs, i));
        if (out.rows() < 1 || out.cols() != data::kNumChannels || !out.allFinite()) {
          throw std::runtime_error("generator returned an invalid motion");
        }
        motions.push_back(std::move(out));
        texts.push_back(text::tokenize(prompt, vocab));
      } catch (const std::exception& e) {
        ++m.skipped;
        if (report.skip_reasons.size() < 20) report.skip_reasons.push_back(s.id + ": " + e.what());
      }
    }
    if (static_cast<int>(motions.size()) < options.pool) {
      throw std::runtime_error("evaluate_model: only " + std::to_string(motions.size()) + " motions generated in repeat " +
                               std::to_string(r));
    }
    const Mat tf = matcher.text_features(texts);
    const Mat mf = matcher.motion_features(motions);
    const auto rp = r_precision(tf, mf, options.pool, rs ^ 0xA5A5ULL);
    m.top1 = rp.top1;
    m.top2 = rp.top2;
    m.top3 = rp.top3;
    const auto f = fid(mf, gt_features);
    m.fid = f.value;
    m.fid_regularized = f.regularized;
    m.mm_dist = mm_distance(tf, mf);
    const int pairs = std::min(options.diversity_pairs, static_cast<int>(mf.rows()) / 2);
    report.diversity_pairs = std::min(report.diversity_pairs, pairs);
    m.diversity = diversity(mf, pairs, rs ^ 0xD1DULL);
    report.skipped_total += m.skipped;
    report.repeats.push_back(m);
  }
  const auto summarize = [&](auto get) {
    std::vector<double> v;
    for (const auto& m : report.repeats) v.push_back(get(m));
    const auto [mean, ci] = mean_ci95(v);
    return MetricSummary{mean, ci};
  };
  report.top1 = summarize([](const RepeatMetrics& m) { return m.top1; });
  report.top2 = summarize([](const RepeatMetrics& m) { return m.top2; });
  report.top3 = summarize([](const RepeatMetrics& m) { return m.top3; });
  report.fid = summarize([](const RepeatMetrics& m) { return m.fid; });
  report.mm_dist = summarize([](const RepeatMetrics& m) { return m.mm_dist; });
  report.diversity = summarize([](const RepeatMetrics& m) { return m.diversity; });
  return report;
}

namespace {

nlohmann::json summary_json(const MetricSummary& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  if (std::isnan(s.ci95)) {
    j["ci95"] = nullptr;
  } else {
    j["ci95"] = s.ci95;
  }
  return j;
}

MetricSummary summary_from(const nlohmann::json& j) {
  MetricSummary s;
  s.mean = j.at("mean").get<double>();
  s.ci95 = j.at("ci95").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("ci95").get<double>();
  return s;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["protocol"] = {{"r_precision_pool", r.pool},
                   {"diversity_pairs", r.diversity_pairs},
                   {"note", "pool size and diversity pair count are protocol defaults"}};
  j["seed"] = r.seed;
  j["entries"] = r.entries;
  j["repeat_count"] = r.repeats.size();
  j["skipped_total"] = r.skipped_total;
  j["skip_reasons"] = r.skip_reasons;
  j["metrics"] = {{"top1", summary_json(r.top1)},         {"top2", summary_json(r.top2)},
                  {"top3", summary_json(r.top3)},         {"fid", summary_json(r.fid)},
                  {"mm_dist", summary_json(r.mm_dist)},   {"diversity", summary_json(r.diversity)}};
  nlohmann::json reps = nlohmann::json::array();
  for (const auto& m : r.repeats) {
    reps.push_back({{"top1", m.top1},
                    {"top2", m.top2},
                    {"top3", m.top3},
                    {"fid", m.fid},
                    {"fid_regularized", m.fid_regularized},
                    {"mm_dist", m.mm_dist},
                    {"diversity", m.diversity},
                    {"skipped", m.skipped}});
  }
  j["repeats"] = std::move(reps);
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.label = j.at("label").get<std::string>();
  r.pool = j.at("protocol").at("r_precision_pool").get<int>();
  r.diversity_pairs = j.at("protocol").at("diversity_pairs").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.entries = j.at("entries").get<int>();
  r.skipped_total = j.at("skipped_total").get<int>();
  r.skip_reasons = j.at("skip_reasons").get<std::vector<std::string>>();
  const auto& m = j.at("metrics");
  r.top1 = summary_from(m.at("top1"));
  r.top2 = summary_from(m.at("top2"));
  r.top3 = summary_from(m.at("top3"));
  r.fid = summary_from(m.at("fid"));
  r.mm_dist = summary_from(m.at("mm_dist"));
  r.diversity = summary_from(m.at("diversity"));
  for (const auto& x : j.at("repeats")) {
    RepeatMetrics rm;
    rm.top1 = x.at("top1").get<double>();
    rm.top2 = x.at("top2").get<double>();
    rm.top3 = x.at("top3").get<double>();
    rm.fid = x.at("fid").get<double>();
    rm.fid_regularized = x.at("fid_regularized").get<bool>();
    rm.mm_dist = x.at("mm_dist").get<double>();
    rm.diversity = x.at("diversity").get<double>();
    rm.skipped = x.at("skipped").get<int>();
    r.repeats.push_back(rm);
  }
  return r;
}

std::string report_table(const std::vector<EvalReport>& reports) {
  const auto cell = [](const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << s.mean;
    if (!std::isnan(s.ci95)) os << "±" << std::setprecision(3) << s.ci95;
    return os.str();
  };
  std::size_t label_w = 6;
  for (const auto& r : reports) label_w = std::max(label_w, r.label.size());
  const int w = 14;
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(label_w)) << "Method";
  for (const char* h : {"Top1", "Top2", "Top3", "FID", "MM-Dist", "Diversity"}) os << "  " << std::setw(w) << h;
  os << "  Repeats\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(label_w)) << r.label;
    for (const auto* s : {&r.top1, &r.top2, &r.top3, &r.fid, &r.mm_dist, &r.diversity}) {
      // "±" is two bytes in UTF-8; pad one extra so columns line up.
      const std::string c = cell(*s);
      const int pad = w + (c.find("±") != std::string::npos ? 1 : 0);
      os << "  " << std::setw(pad) << c;
    }
    os << "  " << r.repeats.size() << "\n";
  }
  return os.str();
}

}  // namespace casim::eval
