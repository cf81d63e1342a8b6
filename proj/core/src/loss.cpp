#include "clci/loss.hpp"

#include "clci/error.hpp"

namespace clci {

template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& pred,
                         const BasicTensor<T>& target, T smooth) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("dice_loss: prediction " + to_string(pred.shape()) +
                     " and target " + to_string(target.shape()) + " differ");
  }
  if (!(smooth > T(0))) throw ConfigError("dice_loss: smooth must be > 0");
  const auto p = pred.data();
  const auto t = target.data();
  double inter = 0, sum_p = 0, sum_t = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<double>(p[i]) * t[i];
    sum_p += p[i];
    sum_t += t[i];
  }
  const double num = 2 * inter + smooth;
  const double den = sum_p + sum_t + smooth;
  const T loss = static_cast<T>(1.0 - num / den);
  return BasicTensor<T>::make_result(
      Shape{1, 1, 1, 1}, {loss}, {pred, target},
      [num, den](detail::Node<T>& self) {
        detail::Node<T>& p = *self.parents[0];
        const detail::Node<T>& t = *self.parents[1];
        if (!p.requires_grad) return;
        const double g = self.grad[0];
        // d/dp_i of -(num/den) = -(2 t_i den - num) / den^2
        const double inv = 1.0 / (den * den);
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
          p.grad[i] += static_cast<T>(-g * (2.0 * t.data[i] * den - num) * inv);
        }
      },
      "dice_loss");
}

template BasicTensor<float> dice_loss(const BasicTensor<float>&,
                                      const BasicTensor<float>&, float);
template BasicTensor<double> dice_loss(const BasicTensor<double>&,
                                       const BasicTensor<double>&, double);

}  // namespace clci
