#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace casim::testing {

GradCheckResult gradcheck(const std::function<nn::Var()>& loss, const nn::ParamList& params, int per_param, double h,
                          double floor) {
  return gradcheck(loss, [&] { return loss().item(); }, params, per_param, h, floor);
}

GradCheckResult gradcheck(const std::function<nn::Var()>& analytic, const std::function<double()>& numeric,
                          const nn::ParamList& params, int per_param, double h, double floor) {
  auto list = params;
  list.zero_grad();
  analytic().backward();

  GradCheckResult result;
  for (auto& [name, p] : list.entries()) {
    if (!p.requires_grad()) continue;
    const nn::Mat grad = p.grad().size() == 0 ? nn::Mat::Zero(p.rows(), p.cols()) : p.grad();
    const Eigen::Index n = p.value().size();
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / per_param);
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& x = p.mutable_value().data()[i];
      const double saved = x;
      x = saved + h;
      const double up = numeric();
      x = saved - h;
      const double down = numeric();
      x = saved;
      const double num = (up - down) / (2.0 * h);
      const double ana = grad.data()[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = name + "[" + std::to_string(i / p.cols()) + "," + std::to_string(i % p.cols()) + "]";
      }
    }
  }
  list.zero_grad();
  return result;
}

}  // namespace casim::testing
