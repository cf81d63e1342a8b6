#include "clci/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "clci/autodiff.hpp"
#include "clci/error.hpp"
#include "clci/loss.hpp"
#include "clci/random.hpp"

namespace clci {

namespace fs = std::filesystem;

InitPolicy parse_init_policy(const std::string& s) {
  if (s == "scaled") return InitPolicy::kScaled;
  if (s == "fixed") return InitPolicy::kFixed;
  throw ConfigError("init policy must be 'scaled' or 'fixed', got '" + s + "'");
}

const char* to_string(InitPolicy p) {
  return p == InitPolicy::kScaled ? "scaled" : "fixed";
}

template <typename T>
void gaussian_init(ParameterStore<T>& store, InitPolicy policy,
                   std::uint64_t seed, double fixed_std) {
  auto& params = store.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto data = p.tensor.mutable_data();
    switch (p.kind) {
      case ParamKind::kConvKernel: {
        const Shape& s = p.tensor.shape();
        const double fan_in = static_cast<double>(s.c) * s.h * s.w;
        const double sigma = policy == InitPolicy::kScaled
                                 ? std::sqrt(2.0 / fan_in)
                                 : fixed_std;
        Rng rng = Rng::derive(seed, i);
        for (T& v : data) v = static_cast<T>(sigma * rng.normal());
        break;
      }
      case ParamKind::kConvBias:
      case ParamKind::kBnBeta:
        std::fill(data.begin(), data.end(), T(0));
        break;
      case ParamKind::kForgetBias:
      case ParamKind::kBnGamma:
        std::fill(data.begin(), data.end(), T(1));
        break;
    }
  }
  for (auto& s : store.running_stats()) {
    std::fill(s.stats.mean.begin(), s.stats.mean.end(), T(0));
    std::fill(s.stats.var.begin(), s.stats.var.end(), T(1));
  }
}

template void gaussian_init(ParameterStore<float>&, InitPolicy, std::uint64_t,
                            double);
template void gaussian_init(ParameterStore<double>&, InitPolicy, std::uint64_t,
                            double);

OptimState OptimState::for_store(const ParameterStore<float>& store,
                                 const AdamOptions& options) {
  OptimState s;
  s.options = options;
  for (const auto& p : store.parameters()) {
    s.m.emplace_back(p.tensor.numel(), 0.0f);
    s.v.emplace_back(p.tensor.numel(), 0.0f);
  }
  return s;
}

void adam_step(ParameterStore<float>& store, OptimState& opt) {
  auto& params = store.parameters();
  if (opt.m.size() != params.size() || opt.v.size() != params.size()) {
    throw ConfigError("adam_step: optimizer state has " +
                      std::to_string(opt.m.size()) + " buffers for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || p.tensor.grad().size() != p.tensor.numel()) {
      throw Error("adam_step: parameter '" + p.name + "' has no gradient");
    }
  }
  const AdamOptions& o = opt.options;
  ++opt.step;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(opt.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].tensor.mutable_data();
    auto grad = params[k].tensor.mutable_grad();
    auto& m = opt.m[k];
    auto& v = opt.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i];
      const double mi = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      const double vi = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      theta[i] = static_cast<float>(theta[i] -
                                    o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon));
    }
    std::fill(grad.begin(), grad.end(), 0.0f);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be > 0");
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("threshold must be in [0, 1]");
  }
}

KeyValues TrainConfig::to_key_values() const {
  std::ostringstream lr_s, std_s, thr_s;
  lr_s.precision(17);
  std_s.precision(17);
  thr_s.precision(17);
  lr_s << lr;
  std_s << init_std;
  thr_s << threshold;
  return {{"epochs", std::to_string(epochs)},
          {"max_steps", std::to_string(max_steps)},
          {"batch_size", std::to_string(batch_size)},
          {"seed", std::to_string(seed)},
          {"checkpoint_dir", checkpoint_dir},
          {"eval_every", std::to_string(eval_every)},
          {"patience", std::to_string(patience)},
          {"init_policy", to_string(init_policy)},
          {"init_std", std_s.str()},
          {"lr", lr_s.str()},
          {"threshold", thr_s.str()},
          {"resume_from", resume_from}};
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, TrainConfig{});
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv,
                                         const TrainConfig& base) {
  TrainConfig c = base;
  for (const auto& [k, v] : kv) {
    if (k == "epochs") c.epochs = parse_int(k, v);
    else if (k == "max_steps") c.max_steps = parse_int(k, v);
    else if (k == "batch_size") c.batch_size = parse_int(k, v);
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(parse_int(k, v));
    else if (k == "checkpoint_dir") c.checkpoint_dir = v;
    else if (k == "eval_every") c.eval_every = parse_int(k, v);
    else if (k == "patience") c.patience = parse_int(k, v);
    else if (k == "init_policy") c.init_policy = parse_init_policy(v);
    else if (k == "init_std") c.init_std = parse_double(k, v);
    else if (k == "lr") c.lr = parse_double(k, v);
    else if (k == "threshold") c.threshold = parse_double(k, v);
    else if (k == "resume_from") c.resume_from = v;
  }
  return c;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,step,loss,val_dsc\n";
  for (const auto& r : log) {
    os << r.epoch << ',' << r.step << ',' << r.loss << ',';
    if (r.val_dsc) os << *r.val_dsc;
    os << '\n';
  }
  return os.str();
}

namespace {

Tensor stack_normalized(const std::vector<SamplePair>& samples,
                        const std::vector<std::size_t>& indices) {
  const Tensor raw = stack_images(samples, indices);
  const Shape& s = raw.shape();
  std::vector<float> out(raw.numel());
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    const auto first = raw.data().begin() + b * plane;
    const Tensor one = normalize_intensity(Tensor::from_data(
        {1, 1, s.h, s.w}, std::vector<float>(first, first + plane)));
    std::copy(one.data().begin(), one.data().end(), out.begin() + b * plane);
  }
  return Tensor::from_data(s, std::move(out));
}

CheckpointExtras resume_extras(const OptimState& opt,
                               const ParameterStore<float>& store,
                               std::int64_t step, double best_dsc,
                               std::int64_t best_step, int stale_evals) {
  CheckpointExtras e;
  std::ostringstream best;
  best.precision(17);
  best << best_dsc;
  e.values = {{"train.step", std::to_string(step)},
              {"train.best_val_dsc", best.str()},
              {"train.best_step", std::to_string(best_step)},
              {"train.stale_evals", std::to_string(stale_evals)},
              {"adam.step", std::to_string(opt.step)}};
  const auto& params = store.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Shape& s = params[k].tensor.shape();
    e.tensors.emplace_back("adam_m." + params[k].name,
                           Tensor::from_data(s, opt.m[k]));
    e.tensors.emplace_back("adam_v." + params[k].name,
                           Tensor::from_data(s, opt.v[k]));
  }
  return e;
}

}  // namespace

MetricsReport evaluate_model(const ClciNet& model,
                             const std::vector<SamplePair>& samples,
                             double threshold, int batch_size) {
  NoGradGuard no_grad;
  std::vector<MetricsRow> rows;
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(samples.size(), start + batch_size); ++i) {
      idx.push_back(i);
    }
    const Tensor prob = model.forward(stack_normalized(samples, idx), Mode::kEval);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const SamplePair& s = samples[idx[b]];
      rows.push_back(evaluate_pair(
          s.subject_id, s.slice_index,
          binarize(prob, static_cast<float>(threshold), static_cast<int>(b)),
          s.mask));
    }
  }
  return aggregate_report(std::move(rows));
}

TrainResult train(ClciNet& model, const std::vector<SamplePair>& train_set,
                  const std::vector<SamplePair>& val_set, const TrainConfig& tc,
                  const TrainObserver& observer) {
  tc.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  const std::vector<SamplePair>& val = val_set.empty() ? train_set : val_set;

  const std::int64_t n = static_cast<std::int64_t>(train_set.size());
  const std::int64_t steps_per_epoch = (n + tc.batch_size - 1) / tc.batch_size;
  std::int64_t total = static_cast<std::int64_t>(tc.epochs) * steps_per_epoch;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps);

  TrainResult result;
  OptimState opt;
  std::int64_t step = 0;
  int stale_evals = 0;

  if (!tc.resume_from.empty()) {
    CheckpointExtras extras;
    model = load_checkpoint(tc.resume_from, &extras);
    opt = OptimState::for_store(model.store(), AdamOptions{tc.lr});
    const auto get = [&](const std::string& key) {
      const std::string* v = find_value(extras.values, key);
      if (!v) throw IoError(tc.resume_from, "checkpoint lacks '" + key + "'");
      return *v;
    };
    step = parse_int("train.step", get("train.step"));
    opt.step = parse_int("adam.step", get("adam.step"));
    result.best_val_dsc = parse_double("best", get("train.best_val_dsc"));
    result.best_step = parse_int("best_step", get("train.best_step"));
    stale_evals = parse_int("stale", get("train.stale_evals"));
    const auto& params = model.store().parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (const auto& [name, t] : extras.tensors) {
        if (name == "adam_m." + params[k].name) {
          opt.m[k].assign(t.data().begin(), t.data().end());
        } else if (name == "adam_v." + params[k].name) {
          opt.v[k].assign(t.data().begin(), t.data().end());
        }
      }
    }
  } else {
    gaussian_init(model.store(), tc.init_policy, tc.seed, tc.init_std);
    opt = OptimState::for_store(model.store(), AdamOptions{tc.lr});
  }
  model.store().zero_grad();

  const auto save = [&](const std::string& sub) {
    if (tc.checkpoint_dir.empty()) return;
    save_checkpoint((fs::path(tc.checkpoint_dir) / sub).string(), model,
                    resume_extras(opt, model.store(), step, result.best_val_dsc,
                                  result.best_step, stale_evals));
  };

  std::int64_t order_epoch = -1;
  std::vector<std::size_t> order;
  while (step < total) {
    const std::int64_t epoch = step / steps_per_epoch;
    const std::int64_t pos = step % steps_per_epoch;
    if (epoch != order_epoch) {
      order.resize(train_set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng = Rng::derive(tc.seed ^ 0x7368756666ULL,
                            static_cast<std::uint64_t>(epoch));
      rng.shuffle(order);
      order_epoch = epoch;
    }
    const std::size_t lo = static_cast<std::size_t>(pos * tc.batch_size);
    const std::size_t hi = std::min(order.size(), lo + tc.batch_size);
    const std::vector<std::size_t> batch(order.begin() + lo, order.begin() + hi);

    double loss_value = 0;
    try {
      const Tensor images = stack_normalized(train_set, batch);
      const Tensor masks = stack_masks(train_set, batch);
      const Tensor prob = model.forward(images, Mode::kTrain);
      const Tensor loss = dice_loss(prob, masks);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw NumericError("non-finite loss");
      backward(loss);
      adam_step(model.store(), opt);
    } catch (const NumericError& e) {
      throw NumericError("training aborted at step " + std::to_string(step + 1) +
                         ": " + e.what());
    }
    ++step;

    TrainLogRow row{static_cast<int>(epoch), step, loss_value, std::nullopt};
    const bool last = step == total;
    bool stop = false;
    if (step % tc.eval_every == 0 || last) {
      const double dsc = evaluate_model(model, val, tc.threshold,
                                        tc.batch_size).aggregate.dsc;
      row.val_dsc = dsc;
      if (dsc > result.best_val_dsc) {
        result.best_val_dsc = dsc;
        result.best_step = step;
        stale_evals = 0;
        save("best");
      } else {
        ++stale_evals;
        if (tc.patience > 0 && stale_evals >= tc.patience) stop = true;
      }
      save("last");
    }
    result.log.push_back(row);
    if (observer) observer(row);
    if (stop) {
      result.early_stopped = true;
      if (!row.val_dsc) save("last");
      break;
    }
  }
  result.steps = step;
  return result;
}

std::vector<AblationResult> run_ablation_matrix(
    const ModelConfig& base, const TrainConfig& tc,
    const std::vector<SamplePair>& train_set,
    const std::vector<SamplePair>& val_set,
    const std::vector<SamplePair>& test_set, const std::string& out_dir,
    const std::function<void(const AblationResult&)>& on_row) {
  if (test_set.empty()) throw ConfigError("ablation: empty test set");
  std::vector<AblationResult> results;
  for (const AblationRow& row : ablation_rows()) {
    ClciNet model = instantiate_ablation(row, base);
    TrainConfig row_tc = tc;
    row_tc.checkpoint_dir =
        (fs::path(out_dir) / ("row_" + row.label())).string();
    row_tc.resume_from.clear();
    const TrainResult tr = train(model, train_set, val_set, row_tc);
    const ClciNet best =
        load_checkpoint((fs::path(row_tc.checkpoint_dir) / "best").string());
    AblationResult r;
    r.row = row;
    r.parameters = best.parameter_count();
    r.best_val_dsc = tr.best_val_dsc;
    r.metrics =
        evaluate_model(best, test_set, tc.threshold, tc.batch_size).aggregate;
    if (on_row) on_row(r);
    results.push_back(r);
  }
  return results;
}

std::string ablation_csv(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "aspp,clf,inference,parameters,dsc,precision,recall,voe,rvd\n";
  for (const auto& r : rows) {
    os << r.row.use_aspp << ',' << r.row.use_clf << ',' << r.row.use_inference
       << ',' << r.parameters << ',' << r.metrics.dsc << ','
       << r.metrics.precision << ',' << r.metrics.recall << ','
       << r.metrics.voe << ',' << r.metrics.rvd_signed << '\n';
  }
  return os.str();
}

}  // namespace clci
