#pragma once

#include "casim/nn/tensor.hpp"

#include <vector>

namespace casim::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double clip_norm = 1.0;  // <= 0 disables global-norm clipping
};

// Adam with decoupled weight decay. Parameters without a gradient this step
// are skipped (their moments are untouched).
class Adam {
 public:
  Adam(const ParamList& params, AdamConfig config);

  // Returns the pre-clipping global gradient norm.
  double step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_, v_;
  AdamConfig config_;
  long t_ = 0;
};

// Linear warmup followed by cosine decay to `floor * base`.
double warmup_cosine_lr(double base, long step, long total, long warmup, double floor = 0.1);

}  // namespace casim::nn
