#include "casim/ar/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace casim::ar {

BoolMat build_ar_mask(int text_length, int motion_length, const std::vector<bool>& text_valid) {
  if (static_cast<int>(text_valid.size()) != text_length) {
    throw std::invalid_argument("build_ar_mask: validity vector does not match text length");
  }
  const int n = text_length + motion_length;
  BoolMat mask = BoolMat::Constant(n, n, false);
  for (int i = 0; i < n; ++i) {
    const bool row_is_text = i < text_length;
    if (row_is_text && !text_valid[static_cast<std::size_t>(i)]) continue;
    for (int j = 0; j < text_length; ++j) mask(i, j) = text_valid[static_cast<std::size_t>(j)];
    if (!row_is_text) {
      for (int j = text_length; j <= i; ++j) mask(i, j) = true;
    }
  }
  return mask;
}

int first_prediction_row(const std::vector<bool>& text_valid) {
  for (int i = static_cast<int>(text_valid.size()) - 1; i >= 0; --i) {
    if (text_valid[static_cast<std::size_t>(i)]) return i;
  }
  throw std::invalid_argument("first_prediction_row: text has no valid token");
}

ArTransformer::ArTransformer(const ArConfig& config, std::uint64_t seed)
    : final_norm(config.width), config_(config) {
  if (config.codes < 1) throw std::invalid_argument("ArTransformer: codebook size must be positive");
  if (config.heads < 1 || config.width % config.heads != 0) {
    throw std::invalid_argument("ArTransformer: head count must divide width");
  }
  nn::Rng rng(seed);
  text_proj = nn::Linear(config.text_width, config.width, rng);
  token_embedding = Var(nn::randn(config.codes + 2, config.width, 0.02, rng), true);
  segment_embedding = Var(nn::randn(2, config.width, 0.02, rng), true);
  position_embedding = Var(nn::randn(config.max_text + config.max_motion_tokens + 1, config.width, 0.02, rng), true);
  for (int b = 0; b < config.blocks; ++b) blocks.emplace_back(config.width, config.heads, config.ff_hidden, rng);
  head = nn::Linear(config.width, config.codes + 1, rng);
}

nn::ParamList ArTransformer::params() const {
  nn::ParamList p;
  text_proj.register_params(p, "text_proj");
  p.add("token_embedding", token_embedding);
  p.add("segment_embedding", segment_embedding);
  p.add("position_embedding", position_embedding);
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].register_params(p, "blocks." + std::to_string(b));
  final_norm.register_params(p, "final_norm");
  head.register_params(p, "head");
  return p;
}

Var ArTransformer::forward(const text::TextEmbeddingSeq& text, std::span<const int> motion_prefix,
                           std::vector<nn::LayerAttention>* capture) const {
  const int l = text.length();
  const int m = static_cast<int>(motion_prefix.size());
  if (l == 0) throw std::invalid_argument("ar forward: empty text");
  if (text.embeddings.cols() != config_.text_width) {
    throw std::invalid_argument("ar forward: text width " + std::to_string(text.embeddings.cols()) +
                                " does not match configured " + std::to_string(config_.text_width));
  }
  if (l + m > position_embedding.rows()) {
    throw std::invalid_argument("ar forward: sequence of " + std::to_string(l + m) + " exceeds position table");
  }
  for (int id : motion_prefix) {
    if (id < 0 || id > pad_id()) throw std::invalid_argument("ar forward: motion token " + std::to_string(id) + " out of range");
  }

  std::vector<int> text_seg(static_cast<std::size_t>(l), 0);
  Var text_rows = nn::add(text_proj(text.embeddings), nn::gather_rows(segment_embedding, text_seg));
  std::vector<Var> parts{text_rows};
  if (m > 0) {
    std::vector<int> motion_seg(static_cast<std::size_t>(m), 1);
    parts.push_back(nn::add(nn::gather_rows(token_embedding, motion_prefix), nn::gather_rows(segment_embedding, motion_seg)));
  }
  std::vector<int> pos(static_cast<std::size_t>(l + m));
  std::iota(pos.begin(), pos.end(), 0);
  Var h = nn::add(nn::concat_rows(parts), nn::gather_rows(position_embedding, pos));

  const BoolMat mask = build_ar_mask(l, m, text.valid);
  for (const auto& block : blocks) {
    nn::LayerAttention* cap = nullptr;
    if (capture) {
      capture->emplace_back();
      cap = &capture->back();
    }
    h = block(h, &mask, cap);
  }
  return head(final_norm(h));
}

double TeacherForcing::draw(nn::Rng& rng) const {
  if (kind == Kind::uniform) return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return rate;
}

TeacherForcing parse_teacher_forcing(const std::string& s) {
  TeacherForcing tf;
  if (s == "uniform") {
    tf.kind = TeacherForcing::Kind::uniform;
    return tf;
  }
  std::size_t used = 0;
  double r = 0.0;
  try {
    r = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument("teacher-forcing corruption must be a rate in [0, 1] or 'uniform', got '" + s + "'");
  }
  tf.rate = r;
  return tf;
}

std::vector<int> corrupt_tokens(std::span<const int> tokens, int codes, double rate, nn::Rng& rng) {
  std::vector<int> out(tokens.begin(), tokens.end());
  if (rate <= 0.0) return out;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> code(0, codes - 1);
  for (auto& t : out) {
    if (coin(rng) < rate) t = code(rng);
  }
  return out;
}

int pick_token(const nn::RowVec& logits, const SamplerConfig& sampler, nn::Rng& rng) {
  const Eigen::Index n = logits.size();
  if (sampler.kind == SamplerConfig::Kind::greedy) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<int>(best);
  }
  const int k = std::clamp(sampler.top_k, 1, static_cast<int>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](int a, int b) { return logits(a) > logits(b); });
  const double temp = std::max(sampler.temperature, 1e-6);
  std::vector<double> w(static_cast<std::size_t>(k));
  const double top = logits(order[0]);
  for (int i = 0; i < k; ++i) w[static_cast<std::size_t>(i)] = std::exp((logits(order[static_cast<std::size_t>(i)]) - top) / temp);
  std::discrete_distribution<int> dist(w.begin(), w.end());
  return order[static_cast<std::size_t>(dist(rng))];
}

ArModel::ArModel(const text::TextEncoderConfig& text_config, const ArConfig& config, text::Injection inject,
                 std::uint64_t seed)
    : encoder_(text_config, seed), transformer_(config, seed + 1), inject_(inject) {
  if (config.text_width != text_config.width) {
    throw std::invalid_argument("ArModel: transformer text width does not match encoder width");
  }
}

text::TextEmbeddingSeq ArModel::condition(const text::TextTokenSeq& tokens) const {
  return text::condition(encoder_, tokens, inject_);
}

nn::ParamList ArModel::params() const {
  nn::ParamList p;
  p.extend(encoder_.params(), "text.");
  p.extend(transformer_.params(), "ar.");
  return p;
}

Var ArModel::loss(const ArExample& example, double corruption_rate, nn::Rng& rng) const {
  if (example.motion.empty()) throw std::invalid_argument("ar loss: example has no motion tokens");
  const int cap = transformer_.config().max_motion_tokens;
  std::vector<int> gt = example.motion;
  if (static_cast<int>(gt.size()) > cap) gt.resize(static_cast<std::size_t>(cap));
  for (int id : gt) {
    if (id < 0 || id >= transformer_.config().codes) throw std::invalid_argument("ar loss: target code out of range");
  }
  const auto c = condition(example.text);
  const int l = c.length();
  const int m = static_cast<int>(gt.size());
  const auto input = corrupt_tokens(gt, transformer_.config().codes, corruption_rate, rng);
  Var logits = transformer_.forward(c, input);
  std::vector<int> targets(static_cast<std::size_t>(l + m), -1);
  targets[static_cast<std::size_t>(first_prediction_row(c.valid))] = gt[0];
  for (int j = 0; j + 1 < m; ++j) targets[static_cast<std::size_t>(l + j)] = gt[static_cast<std::size_t>(j + 1)];
  targets[static_cast<std::size_t>(l + m - 1)] = transformer_.end_id();
  return nn::cross_entropy(logits, targets);
}

double ArModel::train_step(const std::vector<ArExample>& batch, const TeacherForcing& tf, nn::Adam& optimizer,
                           nn::Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("ar train_step: empty batch");
  optimizer.zero_grad();
  const double rate = tf.draw(rng);
  double total = 0.0;
  for (const auto& ex : batch) {
    Var l = nn::scale(loss(ex, rate, rng), 1.0 / static_cast<double>(batch.size()));
    if (!std::isfinite(l.item())) throw std::runtime_error("ar train_step: non-finite loss");
    l.backward();
    total += l.item();
  }
  optimizer.step();
  return total;
}

SampleResult ArModel::sample(const text::TextTokenSeq& tokens, const SamplerConfig& sampler,
                             std::vector<std::vector<Mat>>* trace) const {
  nn::NoGradGuard guard;
  nn::Rng rng(sampler.seed);
  const auto c = condition(tokens);
  const int l = c.length();
  const int first_row = first_prediction_row(c.valid);
  const int cap = transformer_.config().max_motion_tokens;
  SampleResult result;
  result.tokens.end_id = transformer_.end_id();
  std::vector<int> prefix;
  while (true) {
    std::vector<nn::LayerAttention> capture;
    Var logits = transformer_.forward(c, prefix, trace ? &capture : nullptr);
    const int row = prefix.empty() ? first_row : l + static_cast<int>(prefix.size()) - 1;
    const int next = pick_token(logits.value().row(row), sampler, rng);
    if (next == transformer_.end_id()) {
      result.tokens.ids = prefix;
      result.tokens.ids.push_back(next);
      result.empty = prefix.empty();
      break;
    }
    if (trace) {
      if (trace->empty()) trace->resize(capture.size());
      for (std::size_t b = 0; b < capture.size(); ++b) {
        auto& layer = (*trace)[b];
        if (layer.empty()) layer.resize(capture[b].heads.size(), Mat(0, l));
        for (std::size_t h = 0; h < capture[b].heads.size(); ++h) {
          Mat& dst = layer[h];
          dst.conservativeResize(dst.rows() + 1, l);
          dst.row(dst.rows() - 1) = capture[b].heads[h].row(row).head(l);
        }
      }
    }
    prefix.push_back(next);
    if (static_cast<int>(prefix.size()) >= cap) {
      result.tokens.ids = prefix;
      result.hit_cap = true;
      break;
    }
  }
  return result;
}

}  // namespace casim::ar
