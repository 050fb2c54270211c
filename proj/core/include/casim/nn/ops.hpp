#pragma once

#include "casim/nn/tensor.hpp"

#include <span>
#include <vector>

namespace casim::nn {

Var constant(Mat value);

// Arithmetic
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcasts a 1xC row over a
Var mul_scalar(const Var& a, const Var& s);  // s is 1x1
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);
Var linear(const Var& x, const Var& weight, const Var& bias);  // x*W + b; bias may be undefined

// Pointwise
Var relu(const Var& x);
Var gelu(const Var& x);  // tanh approximation
Var exp(const Var& x);

// Normalization
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var l2_normalize_rows(const Var& x, double eps = 1e-8);

// Shape
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const int> ids);
Var repeat_rows(const Var& x, int factor);
// Zeroes rows where keep[i] is false.
Var mask_rows(const Var& x, const std::vector<bool>& keep);
// x[i+1] - x[i] for every consecutive pair of rows.
Var row_diff(const Var& x);
// Sliding windows over rows (1-D convolution input): output row t holds the
// concatenated rows [t*stride - pad, t*stride - pad + kernel), zero outside.
Var unfold1d(const Var& x, int kernel, int stride, int pad);
Eigen::Index unfold1d_length(Eigen::Index rows, int kernel, int stride, int pad);

// Reductions
Var sum(const Var& x);
Var mean(const Var& x);
Var mean_rows(const Var& x);  // 1 x C

// Losses (all return 1x1 means)
Var mse_loss(const Var& pred, const Var& target);
Var smooth_l1_loss(const Var& pred, const Var& target, double beta = 1.0);
// Mean cross-entropy over rows with target >= 0; rows with target < 0 ignored.
Var cross_entropy(const Var& logits, std::span<const int> targets);

// Forward value is `code`, gradient flows to `latent` unchanged.
Var straight_through(const Var& latent, const Var& code);

// Multi-head scaled dot-product attention. q: n x d, k/v: m x d. mask(i, j)
// true means query i may attend key j; a row with no allowed key yields a
// zero output row and an all-zero probability row. When `capture` is given,
// one n x m probability matrix per head is appended to it.
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              const BoolMat* mask = nullptr, std::vector<Mat>* capture = nullptr);

}  // namespace casim::nn
