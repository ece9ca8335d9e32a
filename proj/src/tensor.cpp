#include "pat/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <unordered_set>

#include "pat/error.hpp"

namespace pat {
namespace {

thread_local bool t_grad_enabled = true;

bool env_check_finite() {
  const char* v = std::getenv("PAT_CHECK_FINITE");
  return v != nullptr && std::string(v) == "1";
}

bool& check_finite_flag() {
  static bool flag = env_check_finite();
  return flag;
}

const std::shared_ptr<detail::Node>& require(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw ContractError("operation on an undefined tensor");
  return n;
}

}  // namespace

std::size_t element_count(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

bool grad_enabled() noexcept { return t_grad_enabled; }
bool check_finite_enabled() noexcept { return check_finite_flag(); }
void set_check_finite(bool enabled) noexcept { check_finite_flag() = enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  if (element_count(shape) != values.size())
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(element_count(shape)) + " values, got " +
                         std::to_string(values.size()));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return require(node_)->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return require(node_)->data.size(); }

std::span<const double> Tensor::data() const { return require(node_)->data; }
std::span<double> Tensor::mutable_data() { return require(node_)->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw DimensionError("index out of range");
  return node_->data[i];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2 || i >= shape()[0] || j >= shape()[1])
    throw DimensionError("2-D index out of range for " + shape_string(shape()));
  return node_->data[i * shape()[1] + j];
}

bool Tensor::requires_grad() const { return require(node_)->requires_grad; }
void Tensor::set_requires_grad(bool value) { require(node_)->requires_grad = value; }
bool Tensor::has_grad() const { return !require(node_)->grad.empty(); }
std::span<const double> Tensor::grad() const { return require(node_)->grad; }
std::span<double> Tensor::mutable_grad() { return require(node_)->grad_buffer(); }

void Tensor::zero_grad() {
  auto& g = require(node_)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(shape(), node_->data, false);
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  // Iterative post-order DFS; post-order of a DAG is a topological order.
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    if (next_input < node->inputs.size()) {
      auto child = node->inputs[next_input++];
      if (child->requires_grad && visited.insert(child.get()).second)
        stack.emplace_back(std::move(child), 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tensor::backward() const {
  if (!defined()) throw ContractError("backward on an undefined tensor");
  if (numel() != 1)
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(shape()));
  if (!requires_grad()) throw ContractError("backward on a tensor that is not on the tape");

  const Tape tape = Tape::record(*this);
  // Interior gradients are per-pass scratch; leaf gradients accumulate.
  for (const auto& n : tape.nodes())
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  node_->grad_buffer()[0] += 1.0;

  const auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

namespace detail {
namespace {

Tensor finish(const char* op, Shape shape, std::vector<double> values, bool needs_grad,
              std::vector<std::shared_ptr<Node>> inputs, BackwardFn backward) {
  if (check_finite_enabled()) {
    for (double v : values)
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite output from ") + op);
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> nodes;
  if (grad_enabled()) {
    for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
    if (needs_grad) {
      nodes.reserve(inputs.size());
      for (const Tensor* t : inputs) nodes.push_back(t->node());
    }
  }
  return finish(op, std::move(shape), std::move(values), needs_grad, std::move(nodes),
                std::move(backward));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward) {
  bool needs_grad = false;
  std::vector<std::shared_ptr<Node>> nodes;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    if (needs_grad) {
      nodes.reserve(inputs.size());
      for (const auto& t : inputs) nodes.push_back(t.node());
    }
  }
  return finish(op, std::move(shape), std::move(values), needs_grad, std::move(nodes),
                std::move(backward));
}

}  // namespace detail
}  // namespace pat
