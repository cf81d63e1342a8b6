#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace clci {

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Throws ShapeError unless every dimension is >= 1.
void validate_shape(const Shape& s);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Graph edges; empty for leaves.
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  std::uint64_t seq = 0;
  const char* op = "leaf";

  bool is_leaf() const { return !backward; }
};

std::uint64_t next_sequence();

}  // namespace detail

// Dense NCHW tensor with optional gradient tracking.
//
// A tensor is a cheap handle onto shared storage; copies alias the same node.
// Values are immutable once an op has produced them. Only parameter leaves are
// updated in place (by the optimizer), through mutable_data().
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  static BasicTensor zeros(const Shape& shape, bool requires_grad = false);
  static BasicTensor full(const Shape& shape, T value,
                          bool requires_grad = false);
  static BasicTensor from_data(const Shape& shape, std::vector<T> values,
                               bool requires_grad = false);

  // Builds the output of a differentiable op. `backward` receives the output
  // node and must accumulate into the grad buffers of those parents that
  // require gradients. Recording happens only when grad mode is enabled and
  // at least one parent requires gradients.
  static BasicTensor make_result(
      const Shape& shape, std::vector<T> values,
      std::vector<BasicTensor> parents,
      std::function<void(detail::Node<T>&)> backward, const char* op);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T at(int n, int c, int h, int w) const;

  bool requires_grad() const { return node_->requires_grad; }
  // Turns a leaf into a trainable leaf (allocating its grad buffer) or back.
  BasicTensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->is_leaf(); }
  const char* op_name() const { return node_->op; }

  // Empty span when the tensor does not track gradients.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad();

  // Untracked deep copy of the values.
  BasicTensor detach() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  explicit BasicTensor(std::shared_ptr<detail::Node<T>> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Thread-local switch for graph recording. Eval-mode forward passes run with
// recording disabled so no gradient buffers or closures are allocated.
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

// Converts between precisions; the result is an untracked leaf.
template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& x) {
  std::vector<To> out(x.data().begin(), x.data().end());
  return BasicTensor<To>::from_data(x.shape(), std::move(out));
}

}  // namespace clci
