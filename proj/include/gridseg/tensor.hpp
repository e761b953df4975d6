#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// `calibrate` normalizes with batch moments like `train` but skips dropout
/// and pools the moments exactly into the running statistics.
enum class Mode { train, eval, calibrate };

namespace detail {

/// Graph node. `grad` is allocated iff `requires_grad`; `backward_fn` is set
/// only on interior nodes and pushes this node's grad into its parents.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
};

}  // namespace detail

/// Dense row-major double tensor taking part in a reverse-mode gradient
/// graph. Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  bool requires_grad() const;
  bool is_leaf() const;
  void zero_grad();
  double item() const;

  /// Copy of the values with no graph history.
  Tensor detach() const;
  /// Differentiable reshape (copies the buffer).
  Tensor reshape(Shape shape) const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Accumulates d(scalar)/d(leaf) into every requires_grad leaf reachable from
/// `scalar`. Interior gradients are reset on each call, leaf gradients are not.
void backward(const Tensor& scalar);

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result. The node records `inputs` and `backward_fn` only when
/// grad mode is on and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(TensorNode&)> backward_fn);

inline bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

/// Parent slot `i` of `self` when it participates in the gradient, else null.
inline TensorNode* grad_parent(TensorNode& self, std::size_t i) {
  TensorNode* p = self.parents[i].get();
  return (p != nullptr && p->requires_grad) ? p : nullptr;
}

}  // namespace detail

}  // namespace gridseg
