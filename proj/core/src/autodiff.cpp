#include "clci/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "clci/error.hpp"

namespace clci {

template <typename T>
Tape<T> Tape<T>::record_from(const BasicTensor<T>& root) {
  Tape tape;
  if (!root.defined() || !root.requires_grad()) return tape;

  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<detail::Node<T>*> stack{root.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    detail::Node<T>* node = stack.back();
    stack.pop_back();
    if (node->is_leaf()) {
      tape.leaves_.push_back(node);
      continue;
    }
    tape.ops_.push_back(node);
    for (const auto& parent : node->parents) {
      if (!parent->requires_grad) continue;
      if (seen.insert(parent.get()).second) stack.push_back(parent.get());
    }
  }
  // Sequence numbers are assigned at creation, so ascending order is the
  // order in which the forward pass recorded the ops.
  auto by_seq = [](const detail::Node<T>* a, const detail::Node<T>* b) {
    return a->seq < b->seq;
  };
  std::sort(tape.ops_.begin(), tape.ops_.end(), by_seq);
  std::sort(tape.leaves_.begin(), tape.leaves_.end(), by_seq);
  return tape;
}

template <typename T>
void Tape<T>::replay(detail::Node<T>& root) const {
  for (detail::Node<T>* op : ops_) {
    std::fill(op->grad.begin(), op->grad.end(), T(0));
  }
  for (T& g : root.grad) g += T(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    (*it)->backward(**it);
  }
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined()) throw Error("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error("backward: loss does not depend on any trainable tensor");
  }
  const Tape<T> tape = Tape<T>::record_from(loss);
  tape.replay(*loss.node());
}

template class Tape<float>;
template class Tape<double>;
template void backward(const BasicTensor<float>&);
template void backward(const BasicTensor<double>&);

namespace {

GradCheckReport compare_gradients(
    const std::vector<double>& analytic,
    const std::function<double(std::size_t, double)>& eval_at,
    const std::vector<double>& values, double epsilon, double tolerance) {
  GradCheckReport report;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x0 = values[i];
    const double numeric =
        (eval_at(i, x0 + epsilon) - eval_at(i, x0 - epsilon)) / (2 * epsilon);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom =
        std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    const double rel = abs_err / denom;
    if (rel > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    ++report.checked;
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace

GradCheckReport grad_check(const std::function<TensorD(const TensorD&)>& f,
                           const TensorD& x, double epsilon, double tolerance) {
  TensorD probe = TensorD::from_data(x.shape(),
                                     std::vector<double>(x.data().begin(),
                                                         x.data().end()),
                                     /*requires_grad=*/true);
  const TensorD out = f(probe);
  std::vector<double> analytic(probe.numel(), 0.0);
  if (out.requires_grad()) {
    backward(out);
    std::copy(probe.grad().begin(), probe.grad().end(), analytic.begin());
  }

  std::vector<double> values(x.data().begin(), x.data().end());
  auto eval_at = [&](std::size_t i, double v) {
    const double saved = values[i];
    values[i] = v;
    NoGradGuard guard;
    const double r = f(TensorD::from_data(x.shape(), values)).item();
    values[i] = saved;
    return r;
  };
  return compare_gradients(analytic, eval_at, values, epsilon, tolerance);
}

GradCheckReport grad_check_leaf(const std::function<TensorD()>& f,
                                TensorD& leaf, double epsilon,
                                double tolerance) {
  if (!leaf.requires_grad()) {
    throw Error("grad_check_leaf: tensor does not require gradients");
  }
  leaf.zero_grad();
  const TensorD out = f();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (out.requires_grad()) {
    backward(out);
    std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
  }
  leaf.zero_grad();

  const std::vector<double> values(leaf.data().begin(), leaf.data().end());
  auto data = leaf.mutable_data();
  auto eval_at = [&](std::size_t i, double v) {
    data[i] = v;
    NoGradGuard guard;
    const double r = f().item();
    data[i] = values[i];
    return r;
  };
  return compare_gradients(analytic, eval_at, values, epsilon, tolerance);
}

std::string to_string(const GradCheckReport& r) {
  std::ostringstream os;
  os << (r.passed ? "PASS" : "FAIL") << " max_rel_err=" << r.max_rel_error
     << " max_abs_err=" << r.max_abs_error << " worst_index=" << r.worst_index
     << " checked=" << r.checked;
  return os.str();
}

}  // namespace clci
