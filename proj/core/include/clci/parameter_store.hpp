#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "clci/ops.hpp"
#include "clci/tensor.hpp"

namespace clci {

// What a parameter is used for; decides its initialization.
enum class ParamKind { kConvKernel, kConvBias, kForgetBias, kBnGamma, kBnBeta };

const char* to_string(ParamKind kind);

template <typename T>
struct ParameterEntry {
  std::string name;
  ParamKind kind;
  BasicTensor<T> tensor;
};

template <typename T>
struct StatsEntry {
  std::string name;
  RunningStats<T> stats;
};

// Named, ordered trainable tensors plus the non-trainable batch-norm
// statistics. Registration order is the canonical order for initialization,
// optimizer state and checkpoints.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  // Registers a trainable leaf with its kind's default value (kernels and
  // biases 0, forget-gate bias 1, gamma 1, beta 0). Names must be unique.
  BasicTensor<T> add(const std::string& name, const Shape& shape,
                     ParamKind kind);
  // Returned reference stays valid for the lifetime of the store.
  RunningStats<T>& add_running_stats(const std::string& name, int channels);

  const std::vector<ParameterEntry<T>>& parameters() const { return params_; }
  std::vector<ParameterEntry<T>>& parameters() { return params_; }
  const std::deque<StatsEntry<T>>& running_stats() const { return stats_; }
  std::deque<StatsEntry<T>>& running_stats() { return stats_; }

  // nullptr when absent.
  const ParameterEntry<T>* find(const std::string& name) const;

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<ParameterEntry<T>> params_;
  std::deque<StatsEntry<T>> stats_;
};

}  // namespace clci
