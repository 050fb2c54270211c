#include "casim/vq/vqvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace casim::vq {

Codebook::Codebook(int codes, int width)
    : codes_(Mat::Zero(codes, width)),
      ema_count_(Mat::Ones(codes, 1)),
      ema_sum_(Mat::Zero(codes, width)),
      usage_(Mat::Zero(codes, 1)),
      window_usage_(Mat::Zero(codes, 1)),
      window_steps_(Mat::Zero(1, 1)),
      initialized_(Mat::Zero(1, 1)) {
  if (codes < 1) throw std::invalid_argument("Codebook: empty codebook");
}

QuantizeResult Codebook::quantize(const nn::RowVec& z, double beta) const {
  const Mat& c = codes_.value();
  if (c.rows() == 0) throw std::invalid_argument("quantize: empty codebook");
  if (z.size() != c.cols()) throw std::invalid_argument("quantize: latent width differs from code width");
  if (!z.allFinite()) throw std::invalid_argument("quantize: non-finite latent");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const double d = (c.row(k) - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  QuantizeResult r;
  r.index = best;
  r.code = c.row(best);
  r.codebook_loss = best_d;
  r.commitment_loss = beta * best_d;
  return r;
}

void Codebook::initialize_from(const Mat& latents) {
  if (latents.rows() == 0) throw std::invalid_argument("Codebook::initialize_from: no latents");
  Mat& c = codes_.mutable_value();
  for (Eigen::Index k = 0; k < c.rows(); ++k) c.row(k) = latents.row(k % latents.rows());
  ema_count_.mutable_value().setOnes();
  ema_sum_.mutable_value() = c;
  initialized_.mutable_value()(0, 0) = 1.0;
}

void Codebook::ema_update(const Mat& latents, const std::vector<int>& assignment, double decay,
                          int dead_window, nn::Rng& rng) {
  const Eigen::Index k = codes_.rows();
  Mat counts = Mat::Zero(k, 1);
  Mat sums = Mat::Zero(k, codes_.cols());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    counts(assignment[i], 0) += 1.0;
    sums.row(assignment[i]) += latents.row(static_cast<Eigen::Index>(i));
  }
  Mat& ec = ema_count_.mutable_value();
  Mat& es = ema_sum_.mutable_value();
  ec = decay * ec + (1.0 - decay) * counts;
  es = decay * es + (1.0 - decay) * sums;
  Mat& c = codes_.mutable_value();
  for (Eigen::Index j = 0; j < k; ++j) c.row(j) = es.row(j) / std::max(ec(j, 0), 1e-5);
  usage_.mutable_value() += counts;
  window_usage_.mutable_value() += counts;

  double& steps = window_steps_.mutable_value()(0, 0);
  steps += 1.0;
  if (steps >= dead_window) {
    std::uniform_int_distribution<Eigen::Index> pick(0, latents.rows() - 1);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (window_usage_.value()(j, 0) < 1.0 && latents.rows() > 0) {
        c.row(j) = latents.row(pick(rng));
        ec(j, 0) = 1.0;
        es.row(j) = c.row(j);
      }
    }
    window_usage_.mutable_value().setZero();
    steps = 0.0;
  }
}

nn::ParamList Codebook::state() const {
  nn::ParamList p;
  p.add("codebook.codes", codes_);
  p.add("codebook.ema_count", ema_count_);
  p.add("codebook.ema_sum", ema_sum_);
  p.add("codebook.usage", usage_);
  p.add("codebook.window_usage", window_usage_);
  p.add("codebook.window_steps", window_steps_);
  p.add("codebook.initialized", initialized_);
  return p;
}

// Encoder: conv3 (D->h), log2(l) x [conv4 stride 2], conv3 (h->c), ReLU
// between layers. Receptive field of one latent row at l=4: 18 frames.
// Decoder mirrors it with nearest-neighbour x2 upsampling before each of the
// middle convolutions.
MotionVqvae::MotionVqvae(const VqvaeConfig& config, std::uint64_t seed)
    : config_(config), codebook_(config.codes, config.latent) {
  if (config.downsample < 1 || (config.downsample & (config.downsample - 1)) != 0) {
    throw std::invalid_argument("MotionVqvae: downsample must be a power of two");
  }
  nn::Rng rng(seed);
  int stages = 0;
  for (int l = config.downsample; l > 1; l /= 2) ++stages;

  encoder_layers.emplace_back(3 * config.channels, config.hidden, rng);
  encoder_specs_.push_back({3, 1, 1, false});
  for (int s = 0; s < stages; ++s) {
    encoder_layers.emplace_back(4 * config.hidden, config.hidden, rng);
    encoder_specs_.push_back({4, 2, 1, false});
  }
  encoder_layers.emplace_back(3 * config.hidden, config.latent, rng);
  encoder_specs_.push_back({3, 1, 1, false});

  decoder_layers.emplace_back(3 * config.latent, config.hidden, rng);
  decoder_specs_.push_back({3, 1, 1, false});
  for (int s = 0; s < stages; ++s) {
    decoder_layers.emplace_back(3 * config.hidden, config.hidden, rng);
    decoder_specs_.push_back({3, 1, 1, true});
  }
  decoder_layers.emplace_back(3 * config.hidden, config.channels, rng);
  decoder_specs_.push_back({3, 1, 1, false});
}

Var MotionVqvae::run_stack(const Var& x, const std::vector<nn::Linear>& layers,
                           const std::vector<ConvSpec>& specs) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (specs[i].upsample_before) h = nn::repeat_rows(h, 2);
    h = layers[i](nn::unfold1d(h, specs[i].kernel, specs[i].stride, specs[i].pad));
    if (i + 1 < layers.size()) h = nn::relu(h);
  }
  return h;
}

EncodedMotion MotionVqvae::encode(const Mat& frames) const {
  if (frames.rows() == 0) throw std::invalid_argument("encode_motion: empty motion");
  if (frames.cols() != config_.channels) {
    throw std::invalid_argument("encode_motion: expected " + std::to_string(config_.channels) + " channels, got " +
                                std::to_string(frames.cols()));
  }
  if (!frames.allFinite()) throw std::invalid_argument("encode_motion: non-finite input frames");
  const int l = config_.downsample;
  const int t = static_cast<int>(frames.rows());
  const int pad = (l - t % l) % l;
  Mat padded(t + pad, frames.cols());
  padded.topRows(t) = frames;
  for (int i = 0; i < pad; ++i) padded.row(t + i) = frames.row(t - 1);
  EncodedMotion out;
  out.latent = run_stack(nn::constant(std::move(padded)), encoder_layers, encoder_specs_);
  out.source_length = t;
  out.pad = pad;
  return out;
}

QuantizedLatents MotionVqvae::quantize(const Var& latent) const {
  QuantizedLatents out;
  const Mat& z = latent.value();
  Mat codes(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    auto r = codebook_.quantize(z.row(i), config_.beta);
    out.ids.push_back(r.index);
    codes.row(i) = r.code;
    out.codebook_loss += r.codebook_loss;
  }
  const double elems = static_cast<double>(z.size());
  out.codebook_loss /= elems;
  Var code_const = nn::constant(codes);
  out.quantized = nn::straight_through(latent, code_const);
  out.commitment = nn::scale(nn::mse_loss(latent, code_const), config_.beta);
  return out;
}

Var MotionVqvae::decode(const Var& quantized) const {
  return run_stack(quantized, decoder_layers, decoder_specs_);
}

MotionTokenSeq MotionVqvae::tokenize(const Mat& frames) const {
  nn::NoGradGuard guard;
  auto enc = encode(frames);
  MotionTokenSeq tokens;
  tokens.end_id = end_id();
  tokens.source_length = enc.source_length;
  for (Eigen::Index i = 0; i < enc.latent.rows(); ++i) {
    tokens.ids.push_back(codebook_.quantize(enc.latent.value().row(i), config_.beta).index);
  }
  return tokens;
}

Mat MotionVqvae::decode_tokens(const MotionTokenSeq& tokens) const {
  std::vector<int> ids = tokens.ids;
  if (!ids.empty() && ids.back() == end_id()) ids.pop_back();
  if (ids.empty()) throw std::invalid_argument("decode_tokens: empty motion");
  Mat codes(static_cast<Eigen::Index>(ids.size()), config_.latent);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id == end_id()) throw std::invalid_argument("decode_tokens: END token before the final position");
    if (id < 0 || id > end_id()) throw std::invalid_argument("decode_tokens: token id " + std::to_string(id) + " out of range");
    codes.row(static_cast<Eigen::Index>(i)) = codebook_.codes().row(id);
  }
  nn::NoGradGuard guard;
  Mat frames = decode(nn::constant(std::move(codes))).value();
  if (tokens.source_length > 0 && tokens.source_length < frames.rows()) {
    frames.conservativeResize(tokens.source_length, Eigen::NoChange);
  }
  return frames;
}

VqvaeLosses MotionVqvae::train_step(const std::vector<Mat>& batch, nn::Adam& optimizer, nn::Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("train_vqvae_step: empty batch");
  const Eigen::Index t = batch.front().rows();
  for (const auto& m : batch) {
    if (m.rows() != t) throw std::invalid_argument("train_vqvae_step: batch motions must share a length");
  }
  if (!codebook_.initialized()) {
    nn::NoGradGuard guard;
    std::vector<Mat> lat;
    Eigen::Index rows = 0;
    for (const auto& m : batch) {
      lat.push_back(encode(m).latent.value());
      rows += lat.back().rows();
    }
    Mat all(rows, config_.latent);
    Eigen::Index off = 0;
    for (const auto& l : lat) {
      all.middleRows(off, l.rows()) = l;
      off += l.rows();
    }
    // Shuffle rows so codes do not all come from the first motion.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(rows));
    for (Eigen::Index i = 0; i < rows; ++i) perm[static_cast<std::size_t>(i)] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Mat shuffled(rows, config_.latent);
    for (Eigen::Index i = 0; i < rows; ++i) shuffled.row(i) = all.row(perm[static_cast<std::size_t>(i)]);
    codebook_.initialize_from(shuffled);
  }

  VqvaeLosses losses;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<Mat> latents;
  std::vector<int> assignment;
  for (const auto& x : batch) {
    auto enc = encode(x);
    auto q = quantize(enc.latent);
    Var recon = decode(q.quantized);
    Var target = nn::constant(x);
    Var rec_loss = nn::smooth_l1_loss(recon, target);
    if (t >= 2) {
      rec_loss = nn::add(rec_loss, nn::scale(nn::smooth_l1_loss(nn::row_diff(recon), nn::row_diff(target)),
                                             config_.velocity_weight));
    }
    Var loss = nn::add(rec_loss, q.commitment);
    if (!std::isfinite(loss.item())) {
      throw std::runtime_error("train_vqvae_step: NaN loss at optimizer step " + std::to_string(optimizer.steps()) +
                               " (reconstruction " + std::to_string(rec_loss.item()) + ", commitment " +
                               std::to_string(q.commitment.item()) + ")");
    }
    nn::scale(loss, inv_b).backward();
    losses.reconstruction += rec_loss.item() * inv_b;
    losses.commitment += q.commitment.item() * inv_b;
    losses.codebook += q.codebook_loss * inv_b;
    latents.push_back(enc.latent.value());
    assignment.insert(assignment.end(), q.ids.begin(), q.ids.end());
  }
  optimizer.step();
  optimizer.zero_grad();

  Eigen::Index rows = 0;
  for (const auto& l : latents) rows += l.rows();
  Mat all(rows, config_.latent);
  Eigen::Index off = 0;
  for (const auto& l : latents) {
    all.middleRows(off, l.rows()) = l;
    off += l.rows();
  }
  codebook_.ema_update(all, assignment, config_.ema_decay, config_.dead_window, rng);
  return losses;
}

nn::ParamList MotionVqvae::params() const {
  nn::ParamList p;
  for (std::size_t i = 0; i < encoder_layers.size(); ++i) encoder_layers[i].register_params(p, "encoder." + std::to_string(i));
  for (std::size_t i = 0; i < decoder_layers.size(); ++i) decoder_layers[i].register_params(p, "decoder." + std::to_string(i));
  return p;
}

nn::ParamList MotionVqvae::buffers() const { return codebook_.state(); }

double reconstruction_mse(const MotionVqvae& model, const std::vector<Mat>& motions) {
  if (motions.empty()) return 0.0;
  Eigen::VectorXd per_channel = Eigen::VectorXd::Zero(model.config().channels);
  double frames = 0.0;
  for (const auto& m : motions) {
    Mat recon = model.decode_tokens(model.tokenize(m));
    per_channel += (recon - m).array().square().matrix().colwise().sum().transpose();
    frames += static_cast<double>(m.rows());
  }
  return (per_channel / frames).mean();
}

}  // namespace casim::vq
