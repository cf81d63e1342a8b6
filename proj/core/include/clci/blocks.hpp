#pragma once

#include <string>
#include <utility>

#include "clci/ops.hpp"
#include "clci/parameter_store.hpp"
#include "clci/tensor.hpp"

namespace clci {

enum class Activation { kRelu, kNone };

struct ConvBlockSpec {
  int c_in = 1;
  int c_out = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  Activation activation = Activation::kRelu;
};

// Zero padding that keeps the spatial size at stride 1:
// dilation * (kernel - 1) / 2. Throws ConfigError for even kernels.
int same_padding(int kernel, int dilation);

// One dilated convolution with same padding.
template <typename T>
BasicTensor<T> aspp_branch(const BasicTensor<T>& x, int dilation,
                           ConvParams<T> params);

// conv (no bias) -> batch norm -> optional ReLU.
//
// Registers "<prefix>.kernel", "<prefix>.bn.gamma", "<prefix>.bn.beta" and
// running statistics "<prefix>.bn".
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(ParameterStore<T>& store, const std::string& prefix,
            const ConvBlockSpec& spec);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) const;

  const ConvBlockSpec& spec() const { return spec_; }
  const ConvParams<T>& conv() const { return conv_; }

 private:
  ConvBlockSpec spec_;
  ConvParams<T> conv_;
  BasicTensor<T> gamma_;
  BasicTensor<T> beta_;
  RunningStats<T>* stats_ = nullptr;
};

// Image-level ASPP branch: global average pool -> 1x1 ConvBlock -> replicate
// back to the input's spatial size.
template <typename T>
class ImagePoolBranch {
 public:
  ImagePoolBranch() = default;
  ImagePoolBranch(ParameterStore<T>& store, const std::string& prefix,
                  int c_in, int c_out);

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) const;

 private:
  ConvBlock<T> project_;
};

template <typename T>
struct ConvLSTMState {
  BasicTensor<T> h;
  BasicTensor<T> c;

  static ConvLSTMState zeros(int n, int channels, int height, int width);
};

// Peephole-free ConvLSTM cell. Each gate is a 3x3, padding 1 convolution over
// concat(x, h) with its own bias:
//   i = sigmoid(W_i * [x, h] + b_i)   f = sigmoid(W_f * [x, h] + b_f)
//   o = sigmoid(W_o * [x, h] + b_o)   g = tanh(W_g * [x, h] + b_g)
//   c' = f . c + i . g                h' = o . tanh(c')
template <typename T>
class ConvLSTMCell {
 public:
  enum Gate { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

  ConvLSTMCell() = default;
  ConvLSTMCell(ParameterStore<T>& store, const std::string& prefix,
               int c_input, int c_hidden);

  int input_channels() const { return c_input_; }
  int hidden_channels() const { return c_hidden_; }
  const ConvParams<T>& gate(Gate g) const { return gates_[g]; }

 private:
  int c_input_ = 0;
  int c_hidden_ = 0;
  ConvParams<T> gates_[4];

  template <typename U>
  friend std::pair<BasicTensor<U>, ConvLSTMState<U>> convlstm_step(
      const ConvLSTMCell<U>&, const BasicTensor<U>&, const ConvLSTMState<U>&);
};

// Returns (h', {h', c'}).
template <typename T>
std::pair<BasicTensor<T>, ConvLSTMState<T>> convlstm_step(
    const ConvLSTMCell<T>& cell, const BasicTensor<T>& x,
    const ConvLSTMState<T>& state);

}  // namespace clci
