#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace casim::nn {

// All model math is done on row-major double matrices; a sequence of N
// items with F features is an N x F matrix.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into the parents.
  std::function<void(const Mat&)> backward;

  void accumulate(const Mat& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (!requires_grad) return;
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

// Handle to a node in the dynamic computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);

  static Var from_node(std::shared_ptr<Node> node);

  const Mat& value() const { return node_->value; }
  // Direct mutation; only meaningful for leaves (parameters, inputs).
  Mat& mutable_value() { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  Mat& mutable_grad() { return node_->grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  double item() const;

  // Reverse-mode sweep from a 1x1 scalar. Gradients accumulate into every
  // reachable leaf that requires grad.
  void backward() const;
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds a result node. When gradient recording is disabled or no parent
// requires grad, the closure and parent links are dropped.
Var make_result(Mat value, const std::vector<Var>& parents,
                std::function<void(const Mat&)> backward);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Named parameter collection. Order is registration order; names are unique.
class ParamList {
 public:
  void add(const std::string& name, const Var& param);
  void extend(const ParamList& other, const std::string& prefix = "");

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Var>>& entries() { return entries_; }
  const Var* find(const std::string& name) const;

  void zero_grad();
  std::size_t num_scalars() const;
  // Throws std::runtime_error naming the first non-finite parameter.
  void check_finite(const std::string& context) const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

}  // namespace casim::nn
