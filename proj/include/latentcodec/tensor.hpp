#pragma once

// Dense n-d arrays with reverse-mode autodiff over a per-forward-pass tape.
//
// A Tensor is a cheap handle onto a shared node. Nodes created by ops keep
// their parents alive through the backward closure, so holding the loss keeps
// the whole tape alive until backward() consumes it.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace latentcodec {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Always-on NaN/Inf assertion on every op output. Turning it off trades the
/// diagnostic for speed; the flag is process-wide.
inline std::atomic<bool>& finite_checks_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}
inline void set_finite_checks(bool on) { finite_checks_flag().store(on); }
inline bool finite_checks_enabled() { return finite_checks_flag().load(); }

namespace detail {

struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents.
  std::function<void(const std::vector<double>&)> backward;

  bool is_leaf() const { return !backward; }

  void accumulate(std::size_t i, double v) {
    if (grad.empty()) grad.assign(data->size(), 0.0);
    grad[i] += v;
  }
  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data->size(), 0.0);
    return grad;
  }
};

inline void check_finite(const std::vector<double>& v, const char* op) {
  if (!finite_checks_enabled()) return;
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) {
    auto n = latentcodec::numel(shape);
    init(std::move(shape), std::vector<double>(n, fill));
  }

  Tensor(Shape shape, std::vector<double> values) {
    if (latentcodec::numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    init(std::move(shape), std::move(values));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor vector(std::vector<double> values) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values));
  }
  /// Gradient-tracked leaf.
  static Tensor variable(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }
  static Tensor variable(const Tensor& value) {
    return variable(value.shape(), value.to_vector());
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data->size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  std::span<const double> data() const { return *node_->data; }
  std::vector<double> to_vector() const { return *node_->data; }
  double operator[](std::size_t i) const { return (*node_->data)[i]; }

  /// Writable view for leaves only (optimizers, initializers). Writing into
  /// an op output would desynchronize it from its tape.
  std::span<double> mutable_data() {
    if (!node_->is_leaf()) throw GraphError("mutable_data() on a non-leaf tensor");
    return *node_->data;
  }

  double item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return (*node_->data)[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw GraphError("set_requires_grad() on a non-leaf tensor");
    node_->requires_grad = on;
    return *this;
  }

  /// Same storage, no graph history, not tracked.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<detail::Node>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  /// Deep copy with fresh storage.
  Tensor clone() const { return Tensor(shape(), to_vector()); }

  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  const detail::Node* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  void init(Shape shape, std::vector<double> values) {
    node_ = std::make_shared<detail::Node>();
    node_->shape = std::move(shape);
    node_->data = std::make_shared<std::vector<double>>(std::move(values));
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds an op output, wiring the tape only when some input is tracked.
inline Tensor make_result(Shape shape, std::vector<double> values,
                          std::initializer_list<const Tensor*> inputs, const char* op,
                          std::function<void(const std::vector<double>&)> backward) {
  check_finite(values, op);
  Tensor out(std::move(shape), std::move(values));
  bool tracked = false;
  for (const Tensor* in : inputs) tracked = tracked || (in->defined() && in->requires_grad());
  if (tracked) {
    auto& n = *out.node();
    n.requires_grad = true;
    n.op = op;
    for (const Tensor* in : inputs) {
      if (in->defined() && in->requires_grad()) n.parents.push_back(in->node());
    }
    n.backward = std::move(backward);
  }
  return out;
}

}  // namespace detail

/// Gradients of tracked leaves, keyed by node identity.
class Gradients {
 public:
  const Tensor& operator[](const Tensor& leaf) const {
    auto it = map_.find(leaf.id());
    if (it == map_.end()) throw GraphError("no gradient recorded for tensor");
    return it->second;
  }
  bool contains(const Tensor& leaf) const { return map_.count(leaf.id()) != 0; }
  std::size_t size() const { return map_.size(); }

 private:
  friend Gradients backward(const Tensor& loss);
  std::unordered_map<const detail::Node*, Tensor> map_;
};

/// Runs reverse-mode accumulation from a scalar loss. Leaf gradients are also
/// accumulated on the leaf nodes themselves (see Tensor::grad()); the
/// intermediate tape is released afterwards.
inline Gradients backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) throw GraphError("backward() needs a scalar loss");
  if (!loss.requires_grad()) throw GraphError("backward() on a detached (untracked) loss");
  if (loss.node()->consumed) throw GraphError("backward() on an already consumed graph");

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, bool> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited[loss.node().get()] = true;
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (!visited[p]) {
        visited[p] = true;
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  Gradients out;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->is_leaf()) {
      out.map_.emplace(n, Tensor(n->shape, n->grad_buffer()));
      continue;
    }
    if (!n->grad.empty()) n->backward(n->grad);
  }
  for (detail::Node* n : order) {
    if (n->is_leaf()) continue;
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
  return out;
}

/// Max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// using central differences.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double eps) {
  Tensor x = Tensor::variable(point);
  Tensor y = f(x);
  if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite evaluation");
  Gradients g = backward(y);
  std::vector<double> analytic = g.contains(x) ? g[x].to_vector()
                                               : std::vector<double>(point.numel(), 0.0);

  double worst = 0.0;
  std::vector<double> base = point.to_vector();
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto eval = [&](double delta) {
      std::vector<double> p = base;
      p[i] += delta;
      double v = f(Tensor(point.shape(), std::move(p))).item();
      if (!std::isfinite(v)) throw NumericError("grad_check: non-finite evaluation");
      return v;
    };
    double numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
    double err = std::abs(analytic[i] - numeric) /
                 std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace latentcodec
