#pragma once

#include "clci/tensor.hpp"

namespace clci {

// Batch Dice loss 1 - (2 sum(p t) + smooth) / (sum p + sum t + smooth), with
// the sums taken over the whole batch. Returns a (1, 1, 1, 1) tensor that is
// differentiable in `pred`.
template <typename T>
BasicTensor<T> dice_loss(const BasicTensor<T>& pred,
                         const BasicTensor<T>& target, T smooth = T(1));

}  // namespace clci
