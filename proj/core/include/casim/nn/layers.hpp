#pragma once

#include "casim/nn/ops.hpp"
#include "casim/nn/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace casim::nn {

using Rng = std::mt19937_64;

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
// rows x width table of interleaved sin/cos encodings of positions 0..rows-1.
Mat sinusoidal_table(Eigen::Index rows, Eigen::Index width);
// Encoding of a single (possibly fractional) position; matches one table row.
RowVec sinusoidal_row(double position, Eigen::Index width);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out, undefined when built without bias

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng, bool with_bias = true);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
  void register_params(ParamList& params, const std::string& prefix) const;
  void zero();
};

struct LayerNorm {
  Var gamma;
  Var beta;

  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index width);
  Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
  void register_params(ParamList& params, const std::string& prefix) const;
};

struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(Eigen::Index width, Eigen::Index hidden, Rng& rng);
  Var operator()(const Var& x) const { return down(gelu(up(x))); }
  void register_params(ParamList& params, const std::string& prefix) const;
};

// Per-layer attention probabilities, one matrix per head.
struct LayerAttention {
  std::vector<Mat> heads;
};

struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(Eigen::Index width, int heads, Rng& rng);
  // Self-attention when `source` is the same Var as `x`; cross-attention otherwise.
  Var operator()(const Var& x, const Var& source, const BoolMat* mask,
                 LayerAttention* capture = nullptr) const;
  void register_params(ParamList& params, const std::string& prefix) const;
};

// Pre-norm transformer block: x + MHSA(LN x), then x + FF(LN x).
struct SelfAttentionBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  FeedForward ff;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(Eigen::Index width, int heads, Eigen::Index ff_hidden, Rng& rng);
  Var operator()(const Var& x, const BoolMat* mask, LayerAttention* capture = nullptr) const;
  void register_params(ParamList& params, const std::string& prefix) const;
};

// Pre-norm decoder block: motion self-attention, cross-attention into a
// memory sequence, then feedforward.
struct CrossAttentionBlock {
  LayerNorm norm_self, norm_cross, norm_memory, norm_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

  CrossAttentionBlock() = default;
  CrossAttentionBlock(Eigen::Index width, int heads, Eigen::Index ff_hidden, Rng& rng);
  Var operator()(const Var& x, const Var& memory, const BoolMat* self_mask,
                 const BoolMat* cross_mask, LayerAttention* cross_capture = nullptr) const;
  void register_params(ParamList& params, const std::string& prefix) const;
};

}  // namespace casim::nn
