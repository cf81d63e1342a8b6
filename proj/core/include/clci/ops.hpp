#pragma once

#include <optional>
#include <span>
#include <vector>

#include "clci/tensor.hpp"

namespace clci {

struct Pair {
  int h = 1;
  int w = 1;
  bool operator==(const Pair&) const = default;
};

template <typename T>
struct ConvParams {
  BasicTensor<T> kernel;               // (c_out, c_in, k_h, k_w)
  std::optional<BasicTensor<T>> bias;  // (c_out, 1, 1, 1)
  Pair stride{1, 1};
  Pair dilation{1, 1};
  Pair padding{0, 0};
};

// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1; may be <= 0 when
// the dilated kernel does not fit.
int conv_output_size(int in, int kernel, int stride, int dilation, int pad);

// 2-D cross-correlation with zero padding. Each output element is reduced over
// (c_in, k_h, k_w) in that nesting order, so results are bit-reproducible.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvParams<T>& p);

enum class Mode { kTrain, kEval };

template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;

  static RunningStats identity(int channels) {
    return {std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1))};
  }
};

// Per-channel normalization over (n, h, w). Train mode uses the biased batch
// variance and blends the batch statistics into `stats` with weight
// `momentum`; eval mode normalizes with `stats`.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input,
                          const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, RunningStats<T>& stats,
                          Mode mode, T momentum = T(0.1), T epsilon = T(1e-5));

// Gradient is 0 where x <= 0.
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> inputs);
template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& inputs) {
  return concat_channels(std::span<const BasicTensor<T>>(inputs));
}
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int count);

// Bilinear resize by an integer factor, half-pixel centers
// (align_corners = false); source coordinates are clamped at the border.
template <typename T>
BasicTensor<T> upsample_bilinear(const BasicTensor<T>& x, int factor);

// (n, c, 1, 1) -> (n, c, h, w) by replication.
template <typename T>
BasicTensor<T> broadcast_spatial(const BasicTensor<T>& x, int h, int w);

// Mean over each (h, w) plane; output (n, c, 1, 1).
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Sum of all elements as a (1, 1, 1, 1) tensor.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

}  // namespace clci
