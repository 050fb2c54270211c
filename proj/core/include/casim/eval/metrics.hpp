#pragma once

#include "casim/nn/tensor.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace casim::eval {

using nn::Mat;
using nn::RowVec;

struct FidResult {
  double value = 0.0;
  bool regularized = false;  // a covariance was sample-starved and got +1e-6 I
};

struct GaussianStats {
  RowVec mean;
  Mat cov;
};

// Sample mean and (n - 1)-normalized covariance of the rows.
GaussianStats gaussian_stats(const Mat& features);

// Frechet distance between two Gaussians.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// FID between feature sets (rows are samples). Sets with no more rows than
// columns get 1e-6 I added to their covariance and the result is flagged.
FidResult fid(const Mat& a, const Mat& b);

struct RPrecision {
  double top1 = 0.0;
  double top2 = 0.0;
  double top3 = 0.0;
};

// Each motion row i is a query; its true text is text row i and pool - 1
// distractor texts are drawn from the other rows. Rank is 1 + the number of
// distractors strictly closer (Euclidean) than the true text.
RPrecision r_precision(const Mat& text, const Mat& motion, int pool, std::uint64_t seed);

// Mean Euclidean distance between matched rows.
double mm_distance(const Mat& text, const Mat& motion);

// Mean distance between n_pairs random pairs. Two index lists of length
// n_pairs are drawn independently, each without replacement, and row
// first[k] is compared with row second[k].
double diversity(const Mat& features, int n_pairs, std::uint64_t seed);

// Mean and 95% half-width (normal approximation) of a set of repeat values.
// The half-width is NaN when fewer than two values are given.
std::pair<double, double> mean_ci95(const std::vector<double>& values);

}  // namespace casim::eval
