#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "clci/tensor.hpp"

namespace clci {

// Recorded operations reachable from a root tensor, in recording order.
template <typename T>
class Tape {
 public:
  // Collects every non-leaf node reachable from `root` through nodes that
  // require gradients, plus the trainable leaves it touches.
  static Tape record_from(const BasicTensor<T>& root);

  const std::vector<detail::Node<T>*>& ops() const { return ops_; }
  const std::vector<detail::Node<T>*>& leaves() const { return leaves_; }
  bool empty() const { return ops_.empty(); }

  // Runs every backward rule once, newest first. The root gradient is seeded
  // with one; leaf gradients accumulate across calls, intermediate ones are
  // reset before each replay.
  void replay(detail::Node<T>& root) const;

 private:
  std::vector<detail::Node<T>*> ops_;
  std::vector<detail::Node<T>*> leaves_;
};

// Reverse-mode gradient of a scalar loss into every trainable leaf.
// Throws ShapeError for a non-scalar loss and Error when the loss does not
// depend on any trainable tensor.
template <typename T>
void backward(const BasicTensor<T>& loss);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

// Compares the analytic gradient of the scalar function `f` at `x` with
// central differences (f(x+eps e_i) - f(x-eps e_i)) / 2 eps for every element.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
// Failures are reported, never thrown.
GradCheckReport grad_check(
    const std::function<TensorD(const TensorD&)>& f, const TensorD& x,
    double epsilon = 1e-5, double tolerance = 1e-6);

// Same comparison for a trainable tensor captured by `f`: its values are
// perturbed in place and restored, and its grad buffer is left zeroed.
GradCheckReport grad_check_leaf(const std::function<TensorD()>& f,
                                TensorD& leaf, double epsilon = 1e-5,
                                double tolerance = 1e-6);

std::string to_string(const GradCheckReport& r);

}  // namespace clci
