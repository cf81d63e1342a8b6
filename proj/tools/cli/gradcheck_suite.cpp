#include "gradcheck_suite.hpp"

#include <algorithm>
#include <functional>

#include "clci/blocks.hpp"
#include "clci/error.hpp"
#include "clci/loss.hpp"
#include "clci/ops.hpp"
#include "clci/parameter_store.hpp"
#include "clci/random.hpp"

namespace clci::cli {

namespace {

using Fn = std::function<TensorD(const TensorD&)>;

TensorD uniform(Rng& rng, const Shape& s, double lo, double hi) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = rng.uniform(lo, hi);
  return TensorD::from_data(s, std::move(v));
}

TensorD normal(Rng& rng, const Shape& s, double sigma = 1.0) {
  std::vector<double> v(s.numel());
  for (double& x : v) x = sigma * rng.normal();
  return TensorD::from_data(s, std::move(v));
}

// Magnitude in [0.1, 1] with a random sign: keeps relu inputs off the kink.
TensorD away_from_zero(Rng& rng, const Shape& s) {
  std::vector<double> v(s.numel());
  for (double& x : v) {
    x = rng.uniform(0.1, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  }
  return TensorD::from_data(s, std::move(v));
}

// sum(w . g(x)) with w drawn once for the output shape of g.
Fn weighted(Rng& rng, const Fn& g, const TensorD& x) {
  Shape out;
  {
    NoGradGuard guard;
    out = g(x).shape();
  }
  const TensorD w = normal(rng, out);
  return [g, w](const TensorD& v) { return sum(multiply(g(v), w)); };
}

TensorD leaf_copy(const TensorD& t) {
  return TensorD::from_data(t.shape(),
                            std::vector<double>(t.data().begin(), t.data().end()),
                            true);
}

TensorD faulty_square(const TensorD& x) {
  std::vector<double> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * x.data()[i];
  return TensorD::make_result(
      x.shape(), std::move(y), {x},
      [](detail::Node<double>& self) {
        auto& in = *self.parents[0];
        if (!in.requires_grad) return;
        for (std::size_t i = 0; i < in.data.size(); ++i) {
          in.grad[i] += 3.0 * in.data[i] * self.grad[i];  // should be 2
        }
      },
      "faulty_square");
}

class Suite {
 public:
  Suite(std::uint64_t seed, double eps, double tol)
      : seed_(seed), eps_(eps), tol_(tol) {}

  void run(const std::string& op, bool fault) {
    rng_ = Rng::derive(seed_, std::hash<std::string>{}(op));
    if (op == "conv2d") conv2d_cases();
    else if (op == "batch_norm") batch_norm_cases();
    else if (op == "relu") unary(op, [](const TensorD& x) { return relu(x); },
                                 away_from_zero(rng_, {2, 3, 4, 4}));
    else if (op == "sigmoid") unary(op, [](const TensorD& x) { return sigmoid(x); },
                                    uniform(rng_, {2, 3, 4, 4}, -4, 4));
    else if (op == "tanh") unary(op, [](const TensorD& x) { return tanh(x); },
                                 uniform(rng_, {2, 3, 4, 4}, -2, 2));
    else if (op == "upsample_bilinear") upsample_cases();
    else if (op == "global_avg_pool") {
      unary(op, [](const TensorD& x) { return global_avg_pool(x); },
            normal(rng_, {2, 3, 5, 4}));
    } else if (op == "broadcast_spatial") {
      unary(op, [](const TensorD& x) { return broadcast_spatial(x, 4, 6); },
            normal(rng_, {2, 3, 1, 1}));
    } else if (op == "concat_channels") concat_cases();
    else if (op == "slice_channels") {
      unary(op, [](const TensorD& x) { return slice_channels(x, 1, 3); },
            normal(rng_, {2, 5, 3, 3}));
    } else if (op == "add" || op == "multiply") binary_cases(op);
    else if (op == "sum") {
      record(op, "input", grad_check([](const TensorD& x) { return sum(x); },
                                  normal(rng_, {2, 3, 4, 4}), eps_, tol_));
    } else if (op == "dice_loss") dice_cases();
    else if (op == "convlstm_step") convlstm_cases();
    else if (op == kFaultyOp && fault) {
      unary(op, faulty_square, normal(rng_, {1, 2, 3, 3}));
    } else {
      throw ConfigError("gradcheck: unknown op '" + op + "'");
    }
  }

  std::vector<GradCheckCase> take() { return std::move(cases_); }

 private:
  void record(const std::string& op, const std::string& variant,
           const GradCheckReport& r) {
    cases_.push_back({op, variant, r});
  }

  void unary(const std::string& op, const Fn& g, const TensorD& x,
             const std::string& variant = "input") {
    record(op, variant, grad_check(weighted(rng_, g, x), x, eps_, tol_));
  }

  void conv2d_cases() {
    struct Cfg {
      int k, stride, dilation;
      bool bias;
      int size;
    };
    // Every (kernel, stride, dilation) combination the model builds: 3x3
    // blocks, stride-2 downsampling, strided 1x1 cross-level adapters,
    // dilated ASPP branches and the biased ConvLSTM gates.
    const std::vector<Cfg> cfgs = {
        {3, 1, 1, false, 5}, {3, 2, 1, false, 6}, {1, 1, 1, false, 4},
        {1, 2, 1, false, 6}, {1, 4, 1, false, 6}, {1, 8, 1, false, 6},
        {1, 16, 1, false, 6}, {3, 1, 6, false, 6}, {3, 1, 12, false, 6},
        {3, 1, 18, false, 6}, {3, 1, 1, true, 5}, {1, 1, 1, true, 4}};
    for (const Cfg& c : cfgs) {
      const std::string tag = "k" + std::to_string(c.k) + "_s" +
                              std::to_string(c.stride) + "_d" +
                              std::to_string(c.dilation) + (c.bias ? "_bias" : "");
      const int pad = c.k == 1 ? 0 : c.dilation;
      ConvParams<double> p;
      p.kernel = leaf_copy(normal(rng_, {3, 2, c.k, c.k}, 0.5));
      if (c.bias) p.bias = leaf_copy(normal(rng_, {3, 1, 1, 1}, 0.5));
      p.stride = {c.stride, c.stride};
      p.dilation = {c.dilation, c.dilation};
      p.padding = {pad, pad};
      const TensorD x = normal(rng_, {2, 2, c.size, c.size});

      unary("conv2d", [p](const TensorD& v) { return conv2d(v, p); }, x,
            tag + ".input");

      const Fn by_input = weighted(rng_, [p](const TensorD& v) { return conv2d(v, p); }, x);
      record("conv2d", tag + ".kernel",
          grad_check_leaf([&] { return by_input(x); }, p.kernel, eps_, tol_));
      if (c.bias) {
        record("conv2d", tag + ".bias",
            grad_check_leaf([&] { return by_input(x); }, *p.bias, eps_, tol_));
      }
    }
  }

  void batch_norm_cases() {
    const Shape s{2, 3, 4, 4};
    TensorD gamma = leaf_copy(uniform(rng_, {3, 1, 1, 1}, 0.5, 1.5));
    TensorD beta = leaf_copy(normal(rng_, {3, 1, 1, 1}));
    auto stats = RunningStats<double>::identity(3);
    const TensorD x = normal(rng_, s);
    const auto bn = [&](Mode mode) {
      return [&, mode](const TensorD& v) {
        return batch_norm(v, gamma, beta, stats, mode);
      };
    };
    unary("batch_norm", bn(Mode::kTrain), x, "train.input");
    const Fn train = weighted(rng_, bn(Mode::kTrain), x);
    record("batch_norm", "train.gamma",
        grad_check_leaf([&] { return train(x); }, gamma, eps_, tol_));
    record("batch_norm", "train.beta",
        grad_check_leaf([&] { return train(x); }, beta, eps_, tol_));

    for (std::size_t i = 0; i < stats.mean.size(); ++i) {
      stats.mean[i] = rng_.uniform(-0.5, 0.5);
      stats.var[i] = rng_.uniform(0.5, 2.0);
    }
    unary("batch_norm", bn(Mode::kEval), x, "eval.input");
  }

  void upsample_cases() {
    for (int factor : {2, 3}) {
      unary("upsample_bilinear",
            [factor](const TensorD& x) { return upsample_bilinear(x, factor); },
            normal(rng_, {2, 2, 3, 4}), "x" + std::to_string(factor) + ".input");
    }
  }

  void concat_cases() {
    const std::vector<TensorD> parts = {normal(rng_, {2, 1, 3, 3}),
                                        normal(rng_, {2, 2, 3, 3}),
                                        normal(rng_, {2, 3, 3, 3})};
    for (std::size_t k = 0; k < parts.size(); ++k) {
      unary("concat_channels",
            [parts, k](const TensorD& v) {
              std::vector<TensorD> in = parts;
              in[k] = v;
              return concat_channels(in);
            },
            parts[k], "input" + std::to_string(k));
    }
  }

  void binary_cases(const std::string& op) {
    const Shape s{2, 3, 3, 3};
    const TensorD a = normal(rng_, s);
    const TensorD b = normal(rng_, s);
    const bool mul = op == "multiply";
    const auto apply = [mul](const TensorD& l, const TensorD& r) {
      return mul ? multiply(l, r) : add(l, r);
    };
    unary(op, [=](const TensorD& v) { return apply(v, b); }, a, "lhs");
    unary(op, [=](const TensorD& v) { return apply(a, v); }, b, "rhs");
  }

  void dice_cases() {
    const Shape s{2, 1, 4, 4};
    const TensorD pred = uniform(rng_, s, 0.05, 0.95);
    std::vector<double> t(s.numel());
    for (double& v : t) v = rng_.uniform() < 0.4 ? 1.0 : 0.0;
    const TensorD target = TensorD::from_data(s, std::move(t));
    for (double smooth : {1.0, 0.1}) {
      record("dice_loss", "smooth" + std::to_string(smooth).substr(0, 3) + ".pred",
          grad_check(
              [&](const TensorD& p) { return dice_loss(p, target, smooth); },
              pred, eps_, tol_));
    }
  }

  void convlstm_cases() {
    const int n = 2, c_in = 2, c_hidden = 3, h = 4, w = 5;
    ParameterStore<double> store;
    ConvLSTMCell<double> cell(store, "cell", c_in, c_hidden);
    for (auto& p : store.parameters()) {
      auto d = p.tensor.mutable_data();
      for (double& v : d) v = 0.4 * rng_.normal();
    }
    const TensorD x = normal(rng_, {n, c_in, h, w});
    const TensorD h0 = uniform(rng_, {n, c_hidden, h, w}, -0.9, 0.9);
    const TensorD c0 = normal(rng_, {n, c_hidden, h, w});
    const TensorD wh = normal(rng_, {n, c_hidden, h, w});
    const TensorD wc = normal(rng_, {n, c_hidden, h, w});
    const auto step = [&](const TensorD& xv, const TensorD& hv,
                          const TensorD& cv) {
      auto [out, state] = convlstm_step(cell, xv, ConvLSTMState<double>{hv, cv});
      return add(sum(multiply(out, wh)), sum(multiply(state.c, wc)));
    };
    record("convlstm_step", "x",
        grad_check([&](const TensorD& v) { return step(v, h0, c0); }, x, eps_, tol_));
    record("convlstm_step", "h",
        grad_check([&](const TensorD& v) { return step(x, v, c0); }, h0, eps_, tol_));
    record("convlstm_step", "c",
        grad_check([&](const TensorD& v) { return step(x, h0, v); }, c0, eps_, tol_));
    for (auto& p : store.parameters()) {
      TensorD leaf = p.tensor;
      record("convlstm_step", p.name,
          grad_check_leaf([&] { return step(x, h0, c0); }, leaf, eps_, tol_));
    }
  }

  std::uint64_t seed_;
  double eps_;
  double tol_;
  Rng rng_{0};
  std::vector<GradCheckCase> cases_;
};

}  // namespace

const std::vector<std::string>& gradcheck_op_names() {
  static const std::vector<std::string> names = {
      "conv2d",          "batch_norm",        "relu",
      "sigmoid",         "tanh",              "upsample_bilinear",
      "global_avg_pool", "broadcast_spatial", "concat_channels",
      "slice_channels",  "add",               "multiply",
      "sum",             "dice_loss",         "convlstm_step"};
  return names;
}

std::vector<GradCheckCase> run_gradcheck_suite(const std::vector<std::string>& ops,
                                               std::uint64_t seed,
                                               double epsilon, double tolerance,
                                               bool inject_fault) {
  const auto& known = gradcheck_op_names();
  for (const auto& op : ops) {
    if (std::find(known.begin(), known.end(), op) == known.end() &&
        !(inject_fault && op == kFaultyOp)) {
      throw ConfigError("gradcheck: unknown op '" + op + "'");
    }
  }
  Suite suite(seed, epsilon, tolerance);
  for (const auto& op : ops) suite.run(op, inject_fault);
  if (inject_fault &&
      std::find(ops.begin(), ops.end(), kFaultyOp) == ops.end()) {
    suite.run(kFaultyOp, true);
  }
  return suite.take();
}

}  // namespace clci::cli
