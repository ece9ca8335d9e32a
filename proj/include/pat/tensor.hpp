#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pat {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

// One value in the define-by-run graph. Leaves have no backward function.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Topologically ordered list of the graph nodes reachable from a root.
// Each node appears once and after every node it consumes.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<const std::shared_ptr<detail::Node>> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Dense row-major float64 tensor. Copies are shallow handles onto the same
// node; values are never modified after an op produces them, except leaf
// parameters updated by an optimiser.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access for leaves (parameters, perturbation in gradient checks).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Populates grad on every requires_grad tensor reachable from this scalar.
  // Leaf gradients accumulate across calls.
  void backward() const;

  // Same values, cut from the graph.
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Named trainable tensor. frozen_rows rows at the top of a matrix (the PAD
// embedding row) and fully frozen tensors are skipped by the optimiser.
struct Parameter {
  std::string name;
  Tensor value;
  std::size_t frozen_rows = 0;
  bool frozen = false;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// True when PAT_CHECK_FINITE=1; every op then rejects non-finite outputs.
bool check_finite_enabled() noexcept;
void set_check_finite(bool enabled) noexcept;

namespace detail {

using BackwardFn = std::function<void(Node&)>;

// Wraps freshly computed values into a graph node. The backward function is
// kept only if recording is enabled and some input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, BackwardFn backward);
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& inputs, BackwardFn backward);

}  // namespace detail

}  // namespace pat
