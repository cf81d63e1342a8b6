#include "clci/blocks.hpp"

#include "clci/error.hpp"

namespace clci {

int same_padding(int kernel, int dilation) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("kernel size must be odd for same padding, got " +
                      std::to_string(kernel));
  }
  return dilation * (kernel - 1) / 2;
}

template <typename T>
BasicTensor<T> aspp_branch(const BasicTensor<T>& x, int dilation,
                           ConvParams<T> params) {
  const Shape& k = params.kernel.shape();
  if (k.h != k.w) {
    throw ConfigError("aspp_branch: kernel must be square, got " +
                      to_string(k));
  }
  const int pad = same_padding(k.h, dilation);
  params.stride = {1, 1};
  params.dilation = {dilation, dilation};
  params.padding = {pad, pad};
  return conv2d(x, params);
}

template <typename T>
ConvBlock<T>::ConvBlock(ParameterStore<T>& store, const std::string& prefix,
                        const ConvBlockSpec& spec)
    : spec_(spec) {
  const int pad = same_padding(spec.kernel, spec.dilation);
  conv_.kernel = store.add(prefix + ".kernel",
                           {spec.c_out, spec.c_in, spec.kernel, spec.kernel},
                           ParamKind::kConvKernel);
  conv_.stride = {spec.stride, spec.stride};
  conv_.dilation = {spec.dilation, spec.dilation};
  conv_.padding = {pad, pad};
  gamma_ = store.add(prefix + ".bn.gamma", {spec.c_out, 1, 1, 1},
                     ParamKind::kBnGamma);
  beta_ = store.add(prefix + ".bn.beta", {spec.c_out, 1, 1, 1},
                    ParamKind::kBnBeta);
  stats_ = &store.add_running_stats(prefix + ".bn", spec.c_out);
}

template <typename T>
BasicTensor<T> ConvBlock<T>::forward(const BasicTensor<T>& x, Mode mode) const {
  auto y = batch_norm(conv2d(x, conv_), gamma_, beta_, *stats_, mode);
  return spec_.activation == Activation::kRelu ? relu(y) : y;
}

template <typename T>
ImagePoolBranch<T>::ImagePoolBranch(ParameterStore<T>& store,
                                    const std::string& prefix, int c_in,
                                    int c_out)
    : project_(store, prefix, {c_in, c_out, 1, 1, 1, Activation::kRelu}) {}

template <typename T>
BasicTensor<T> ImagePoolBranch<T>::forward(const BasicTensor<T>& x,
                                           Mode mode) const {
  const Shape& s = x.shape();
  return broadcast_spatial(project_.forward(global_avg_pool(x), mode), s.h,
                           s.w);
}

template <typename T>
ConvLSTMState<T> ConvLSTMState<T>::zeros(int n, int channels, int height,
                                         int width) {
  const Shape s{n, channels, height, width};
  return {BasicTensor<T>::zeros(s), BasicTensor<T>::zeros(s)};
}

template <typename T>
ConvLSTMCell<T>::ConvLSTMCell(ParameterStore<T>& store,
                              const std::string& prefix, int c_input,
                              int c_hidden)
    : c_input_(c_input), c_hidden_(c_hidden) {
  static const char* kNames[4] = {"input", "forget", "output", "candidate"};
  for (int g = 0; g < 4; ++g) {
    const std::string base = prefix + ".gate_" + kNames[g];
    gates_[g].kernel = store.add(base + ".kernel",
                                 {c_hidden, c_input + c_hidden, 3, 3},
                                 ParamKind::kConvKernel);
    gates_[g].bias = store.add(
        base + ".bias", {c_hidden, 1, 1, 1},
        g == kForget ? ParamKind::kForgetBias : ParamKind::kConvBias);
    gates_[g].padding = {1, 1};
  }
}

template <typename T>
std::pair<BasicTensor<T>, ConvLSTMState<T>> convlstm_step(
    const ConvLSTMCell<T>& cell, const BasicTensor<T>& x,
    const ConvLSTMState<T>& state) {
  const Shape& xs = x.shape();
  const Shape& hs = state.h.shape();
  if (!(hs == state.c.shape())) {
    throw ShapeError("convlstm_step: hidden " + to_string(hs) +
                     " and cell " + to_string(state.c.shape()) +
                     " states differ");
  }
  if (xs.n != hs.n || xs.h != hs.h || xs.w != hs.w ||
      xs.c != cell.input_channels() || hs.c != cell.hidden_channels()) {
    throw ShapeError("convlstm_step: input " + to_string(xs) + " and state " +
                     to_string(hs) + " do not fit a cell with " +
                     std::to_string(cell.input_channels()) + " input and " +
                     std::to_string(cell.hidden_channels()) +
                     " hidden channels");
  }
  const auto xh = concat_channels(std::vector<BasicTensor<T>>{x, state.h});
  using Cell = ConvLSTMCell<T>;
  const auto i = sigmoid(conv2d(xh, cell.gates_[Cell::kInput]));
  const auto f = sigmoid(conv2d(xh, cell.gates_[Cell::kForget]));
  const auto o = sigmoid(conv2d(xh, cell.gates_[Cell::kOutput]));
  const auto g = tanh(conv2d(xh, cell.gates_[Cell::kCandidate]));
  auto c_next = add(multiply(f, state.c), multiply(i, g));
  auto h_next = multiply(o, tanh(c_next));
  return {h_next, ConvLSTMState<T>{h_next, c_next}};
}

#define CLCI_INSTANTIATE_BLOCKS(T)                                         \
  template BasicTensor<T> aspp_branch(const BasicTensor<T>&, int,          \
                                      ConvParams<T>);                      \
  template class ConvBlock<T>;                                             \
  template class ImagePoolBranch<T>;                                       \
  template struct ConvLSTMState<T>;                                        \
  template class ConvLSTMCell<T>;                                          \
  template std::pair<BasicTensor<T>, ConvLSTMState<T>> convlstm_step(      \
      const ConvLSTMCell<T>&, const BasicTensor<T>&, const ConvLSTMState<T>&);

CLCI_INSTANTIATE_BLOCKS(float)
CLCI_INSTANTIATE_BLOCKS(double)

#undef CLCI_INSTANTIATE_BLOCKS

}  // namespace clci
