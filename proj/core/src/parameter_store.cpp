#include "clci/parameter_store.hpp"

#include "clci/error.hpp"

namespace clci {

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kConvKernel: return "conv_kernel";
    case ParamKind::kConvBias: return "conv_bias";
    case ParamKind::kForgetBias: return "forget_bias";
    case ParamKind::kBnGamma: return "bn_gamma";
    case ParamKind::kBnBeta: return "bn_beta";
  }
  return "unknown";
}

template <typename T>
BasicTensor<T> ParameterStore<T>::add(const std::string& name,
                                      const Shape& shape, ParamKind kind) {
  if (find(name) != nullptr) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  T init = T(0);
  if (kind == ParamKind::kForgetBias || kind == ParamKind::kBnGamma) init = T(1);
  auto t = BasicTensor<T>::full(shape, init, /*requires_grad=*/true);
  params_.push_back({name, kind, t});
  return t;
}

template <typename T>
RunningStats<T>& ParameterStore<T>::add_running_stats(const std::string& name,
                                                      int channels) {
  for (const auto& s : stats_) {
    if (s.name == name) {
      throw ConfigError("duplicate running-stats name '" + name + "'");
    }
  }
  stats_.push_back({name, RunningStats<T>::identity(channels)});
  return stats_.back().stats;
}

template <typename T>
const ParameterEntry<T>* ParameterStore<T>::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace clci
