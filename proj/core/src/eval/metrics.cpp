#include "casim/eval/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace casim::eval {

namespace {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite features");
}

// Symmetric PSD square root with small negative eigenvalues clamped to 0.
Mat sqrt_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(0.5 * (m + m.transpose())));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

GaussianStats gaussian_stats(const Mat& features) {
  if (features.rows() < 2) throw std::invalid_argument("gaussian_stats: need at least 2 samples");
  GaussianStats s;
  s.mean = features.colwise().mean();
  const Mat centered = features.rowwise() - s.mean;
  s.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Mat sa = sqrt_psd(a.cov);
  const Mat inner = sa * b.cov * sa;
  const double cross = sqrt_psd(inner).trace();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(d, 0.0);
}

FidResult fid(const Mat& a, const Mat& b) {
  require_finite(a, "fid");
  require_finite(b, "fid");
  if (a.cols() != b.cols()) throw std::invalid_argument("fid: feature dimensions differ");
  FidResult r;
  GaussianStats sa = gaussian_stats(a);
  GaussianStats sb = gaussian_stats(b);
  const auto e = a.cols();
  if (a.rows() <= e) {
    sa.cov += 1e-6 * Mat::Identity(e, e);
    r.regularized = true;
  }
  if (b.rows() <= e) {
    sb.cov += 1e-6 * Mat::Identity(e, e);
    r.regularized = true;
  }
  r.value = frechet_distance(sa, sb);
  return r;
}

RPrecision r_precision(const Mat& text, const Mat& motion, int pool, std::uint64_t seed) {
  require_finite(text, "r_precision");
  require_finite(motion, "r_precision");
  const auto n = text.rows();
  if (motion.rows() != n) throw std::invalid_argument("r_precision: text and motion counts differ");
  if (pool < 2 || n < pool) {
    throw std::invalid_argument("r_precision: need at least " + std::to_string(pool) + " pairs, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  std::vector<int> others(static_cast<std::size_t>(n - 1));
  long hits[3] = {0, 0, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    int k = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) others[static_cast<std::size_t>(k++)] = static_cast<int>(j);
    }
    // Partial Fisher-Yates for pool - 1 distractors.
    for (int s = 0; s < pool - 1; ++s) {
      std::uniform_int_distribution<int> pick(s, static_cast<int>(n) - 2);
      std::swap(others[static_cast<std::size_t>(s)], others[static_cast<std::size_t>(pick(rng))]);
    }
    const double d_true = (motion.row(i) - text.row(i)).norm();
    int rank = 1;
    for (int s = 0; s < pool - 1; ++s) {
      if ((motion.row(i) - text.row(others[static_cast<std::size_t>(s)])).norm() < d_true) ++rank;
    }
    for (int t = 0; t < 3; ++t) hits[t] += rank <= t + 1 ? 1 : 0;
  }
  const double nn = static_cast<double>(n);
  return {hits[0] / nn, hits[1] / nn, hits[2] / nn};
}

double mm_distance(const Mat& text, const Mat& motion) {
  require_finite(text, "mm_distance");
  require_finite(motion, "mm_distance");
  if (text.rows() != motion.rows() || text.rows() == 0) throw std::invalid_argument("mm_distance: need matched nonempty sets");
  return (text - motion).rowwise().norm().mean();
}

double diversity(const Mat& features, int n_pairs, std::uint64_t seed) {
  require_finite(features, "diversity");
  const auto n = features.rows();
  if (n_pairs < 1 || n < 2 * static_cast<Eigen::Index>(n_pairs)) {
    throw std::invalid_argument("diversity: need at least " + std::to_string(2 * n_pairs) + " features, got " +
                                std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  const auto draw = [&] {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int s = 0; s < n_pairs; ++s) {
      std::uniform_int_distribution<int> pick(s, static_cast<int>(n) - 1);
      std::swap(idx[static_cast<std::size_t>(s)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(n_pairs));
    return idx;
  };
  const auto first = draw();
  const auto second = draw();
  double total = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    total += (features.row(first[static_cast<std::size_t>(k)]) - features.row(second[static_cast<std::size_t>(k)])).norm();
  }
  return total / n_pairs;
}

std::pair<double, double> mean_ci95(const std::vector<double>& values) {
  if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

}  // namespace casim::eval
