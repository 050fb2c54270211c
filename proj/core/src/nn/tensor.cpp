#include "casim/nn/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace casim::nn {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

void Node::accumulate(const Mat& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw std::logic_error("Var::item on a non-scalar");
  }
  return node_->value(0, 0);
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw std::logic_error("backward() requires a 1x1 scalar");
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(n->grad);
    }
  }
  // Interior grads are no longer needed; leaves keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var make_result(Mat value, const std::vector<Var>& parents,
                std::function<void(const Mat&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
    }
  }
  return Var::from_node(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void ParamList::add(const std::string& name, const Var& param) {
  if (find(name) != nullptr) {
    throw std::logic_error("duplicate parameter name: " + name);
  }
  entries_.emplace_back(name, param);
}

void ParamList::extend(const ParamList& other, const std::string& prefix) {
  for (const auto& [name, v] : other.entries_) add(prefix + name, v);
}

const Var* ParamList::find(const std::string& name) const {
  for (const auto& [n, v] : entries_) {
    if (n == name) return &v;
  }
  return nullptr;
}

void ParamList::zero_grad() {
  for (auto& [_, v] : entries_) v.zero_grad();
}

std::size_t ParamList::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParamList::check_finite(const std::string& context) const {
  for (const auto& [name, v] : entries_) {
    if (!v.value().allFinite()) {
      throw std::runtime_error(context + ": non-finite value in parameter '" + name + "'");
    }
  }
}

}  // namespace casim::nn
