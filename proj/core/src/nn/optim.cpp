#include "casim/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace casim::nn {

Adam::Adam(const ParamList& params, AdamConfig config) : config_(config) {
  for (const auto& [_, p] : params.entries()) {
    params_.push_back(p);
    m_.push_back(Mat::Zero(p.rows(), p.cols()));
    v_.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

double Adam::step() {
  ++t_;
  double sq = 0.0;
  for (const auto& p : params_) {
    if (p.grad().size() != 0) sq += p.grad().squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) {
    throw std::runtime_error("Adam: non-finite gradient norm at step " + std::to_string(t_));
  }
  const double clip = (config_.clip_norm > 0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (p.grad().size() == 0) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * clip * p.grad();
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * (clip * p.grad()).cwiseAbs2();
    Mat& w = p.mutable_value();
    if (config_.weight_decay > 0) w *= (1.0 - config_.lr * config_.weight_decay);
    w.array() -= config_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
  return norm;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double warmup_cosine_lr(double base, long step, long total, long warmup, double floor) {
  if (warmup > 0 && step < warmup) {
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (total <= warmup) return base;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total - warmup));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base * (floor + (1.0 - floor) * cosine);
}

}  // namespace casim::nn
