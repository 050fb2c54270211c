#include "casim/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace casim::nn {

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

RowVec sinusoidal_row(double position, Eigen::Index width) {
  RowVec r(width);
  for (Eigen::Index j = 0; j < width; ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(width));
    r(j) = (j % 2 == 0) ? std::sin(position * freq) : std::cos(position * freq);
  }
  return r;
}

Mat sinusoidal_table(Eigen::Index rows, Eigen::Index width) {
  Mat t(rows, width);
  for (Eigen::Index i = 0; i < rows; ++i) t.row(i) = sinusoidal_row(static_cast<double>(i), width);
  return t;
}

Linear::Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias)
    : weight(randn(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), true) {
  if (with_bias) bias = Var(Mat::Zero(1, out), true);
}

void Linear::register_params(ParamList& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  if (bias.defined()) params.add(prefix + ".bias", bias);
}

void Linear::zero() {
  weight.mutable_value().setZero();
  if (bias.defined()) bias.mutable_value().setZero();
}

LayerNorm::LayerNorm(Eigen::Index width)
    : gamma(Mat::Ones(1, width), true), beta(Mat::Zero(1, width), true) {}

void LayerNorm::register_params(ParamList& params, const std::string& prefix) const {
  params.add(prefix + ".gamma", gamma);
  params.add(prefix + ".beta", beta);
}

FeedForward::FeedForward(Eigen::Index width, Eigen::Index hidden, Rng& rng)
    : up(width, hidden, rng), down(hidden, width, rng) {}

void FeedForward::register_params(ParamList& params, const std::string& prefix) const {
  up.register_params(params, prefix + ".up");
  down.register_params(params, prefix + ".down");
}

MultiHeadAttention::MultiHeadAttention(Eigen::Index width, int heads_, Rng& rng)
    : query(width, width, rng),
      key(width, width, rng),
      value(width, width, rng),
      out(width, width, rng),
      heads(heads_) {
  if (heads_ < 1 || width % heads_ != 0) {
    throw std::invalid_argument("MultiHeadAttention: head count must divide width");
  }
}

Var MultiHeadAttention::operator()(const Var& x, const Var& source, const BoolMat* mask,
                                   LayerAttention* capture) const {
  Var q = query(x);
  Var k = key(source);
  Var v = value(source);
  Var o = attention(q, k, v, heads, mask, capture ? &capture->heads : nullptr);
  return out(o);
}

void MultiHeadAttention::register_params(ParamList& params, const std::string& prefix) const {
  query.register_params(params, prefix + ".query");
  key.register_params(params, prefix + ".key");
  value.register_params(params, prefix + ".value");
  out.register_params(params, prefix + ".out");
}

SelfAttentionBlock::SelfAttentionBlock(Eigen::Index width, int heads, Eigen::Index ff_hidden,
                                       Rng& rng)
    : norm1(width), norm2(width), attn(width, heads, rng), ff(width, ff_hidden, rng) {}

Var SelfAttentionBlock::operator()(const Var& x, const BoolMat* mask,
                                   LayerAttention* capture) const {
  Var h = norm1(x);
  Var y = add(x, attn(h, h, mask, capture));
  return add(y, ff(norm2(y)));
}

void SelfAttentionBlock::register_params(ParamList& params, const std::string& prefix) const {
  norm1.register_params(params, prefix + ".norm1");
  norm2.register_params(params, prefix + ".norm2");
  attn.register_params(params, prefix + ".attn");
  ff.register_params(params, prefix + ".ff");
}

CrossAttentionBlock::CrossAttentionBlock(Eigen::Index width, int heads, Eigen::Index ff_hidden,
                                         Rng& rng)
    : norm_self(width),
      norm_cross(width),
      norm_memory(width),
      norm_ff(width),
      self_attn(width, heads, rng),
      cross_attn(width, heads, rng),
      ff(width, ff_hidden, rng) {}

Var CrossAttentionBlock::operator()(const Var& x, const Var& memory, const BoolMat* self_mask,
                                    const BoolMat* cross_mask, LayerAttention* cross_capture) const {
  Var h = norm_self(x);
  Var y = add(x, self_attn(h, h, self_mask));
  Var mem = norm_memory(memory);
  y = add(y, cross_attn(norm_cross(y), mem, cross_mask, cross_capture));
  return add(y, ff(norm_ff(y)));
}

void CrossAttentionBlock::register_params(ParamList& params, const std::string& prefix) const {
  norm_self.register_params(params, prefix + ".norm_self");
  norm_cross.register_params(params, prefix + ".norm_cross");
  norm_memory.register_params(params, prefix + ".norm_memory");
  norm_ff.register_params(params, prefix + ".norm_ff");
  self_attn.register_params(params, prefix + ".self_attn");
  cross_attn.register_params(params, prefix + ".cross_attn");
  ff.register_params(params, prefix + ".ff");
}

}  // namespace casim::nn
