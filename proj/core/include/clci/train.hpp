#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "clci/data.hpp"
#include "clci/kv.hpp"
#include "clci/metrics.hpp"
#include "clci/model.hpp"
#include "clci/parameter_store.hpp"

namespace clci {

// "scaled": sigma = sqrt(2 / fan_in). "fixed": a constant sigma.
enum class InitPolicy { kScaled, kFixed };
InitPolicy parse_init_policy(const std::string& s);
const char* to_string(InitPolicy p);

// Kernels ~ N(0, sigma^2); biases 0 except ConvLSTM forget-gate biases (1);
// batch-norm gamma 1 and beta 0. Parameter i draws from the stream
// (seed, i), so the result depends only on the seed and registration order.
template <typename T>
void gaussian_init(ParameterStore<T>& store, InitPolicy policy, std::uint64_t seed,
                   double fixed_std = 0.01);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;  // one buffer per parameter, store order
  std::vector<std::vector<float>> v;

  static OptimState for_store(const ParameterStore<float>& store,
                              const AdamOptions& options = {});
};

// t += 1; m = b1 m + (1 - b1) g; v = b2 v + (1 - b2) g^2;
// theta -= lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
// Gradients are zeroed afterwards. Throws Error naming any parameter without a
// gradient buffer.
void adam_step(ParameterStore<float>& store, OptimState& opt);

struct TrainConfig {
  int epochs = 100;
  // Hard cap on optimizer steps; 0 means epochs * steps_per_epoch.
  std::int64_t max_steps = 0;
  int batch_size = 4;
  std::uint64_t seed = 0;
  std::string checkpoint_dir;  // empty: no checkpoints
  std::int64_t eval_every = 25;  // steps
  int patience = 10;             // evaluations without improvement; 0 = off
  InitPolicy init_policy = InitPolicy::kFixed;
  double init_std = 0.01;        // fixed policy only
  double lr = 1e-4;
  double threshold = 0.5;
  // Continue from a checkpoint written to checkpoint_dir/last.
  std::string resume_from;

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv);
  static TrainConfig from_key_values(const KeyValues& kv, const TrainConfig& base);
};

struct TrainLogRow {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0;
  std::optional<double> val_dsc;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  double best_val_dsc = -1.0;
  std::int64_t best_step = 0;
  std::int64_t steps = 0;
  bool early_stopped = false;
};

// "epoch,step,loss,val_dsc" (val_dsc empty on steps without evaluation).
std::string train_log_csv(const std::vector<TrainLogRow>& log);

// Per-sample metrics of `model` (eval mode, images min-max normalized).
MetricsReport evaluate_model(const ClciNet& model,
                             const std::vector<SamplePair>& samples,
                             double threshold = 0.5, int batch_size = 4);

// Optional progress callback, called after every logged row.
using TrainObserver = std::function<void(const TrainLogRow&)>;

// Initializes the model (unless resuming), then runs seeded, per-epoch shuffled
// mini-batch training with Dice loss and Adam. Validation DSC is measured
// every eval_every steps and after the final step; the best model goes to
// checkpoint_dir/best and the latest state (with optimizer moments) to
// checkpoint_dir/last. An empty validation set validates on the training set.
// Throws NumericError naming the step if the loss becomes non-finite.
TrainResult train(ClciNet& model, const std::vector<SamplePair>& train_set,
                  const std::vector<SamplePair>& val_set,
                  const TrainConfig& tc, const TrainObserver& observer = {});

struct AblationResult {
  AblationRow row;
  std::size_t parameters = 0;
  double best_val_dsc = 0;
  MetricsAggregate metrics;
};

// Trains every (ASPP, CLF, Inference) row under the same seed and budget,
// evaluates the best checkpoint of each on `test_set`, and writes per-row
// checkpoints to out_dir/row_<aspp><clf><inference>.
std::vector<AblationResult> run_ablation_matrix(
    const ModelConfig& base, const TrainConfig& tc,
    const std::vector<SamplePair>& train_set,
    const std::vector<SamplePair>& val_set,
    const std::vector<SamplePair>& test_set, const std::string& out_dir,
    const std::function<void(const AblationResult&)>& on_row = {});

// "aspp,clf,inference,parameters,dsc,precision,recall,voe,rvd".
std::string ablation_csv(const std::vector<AblationResult>& rows);

}  // namespace clci
