#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "clci/autodiff.hpp"
#include "clci/error.hpp"
#include "clci/ops.hpp"
#include "clci/serialize.hpp"
#include "support/oracles.hpp"

using namespace clci;

namespace {

ConvParams<float> conv_params(Tensor kernel, int stride = 1, int dilation = 1,
                              int pad = 0) {
  ConvParams<float> p;
  p.kernel = std::move(kernel);
  p.stride = {stride, stride};
  p.dilation = {dilation, dilation};
  p.padding = {pad, pad};
  return p;
}

std::vector<float> values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST(Tensor, RejectsZeroDimensions) {
  EXPECT_THROW(Tensor::zeros({1, 0, 2, 2}), ShapeError);
  EXPECT_THROW(Tensor::from_data({1, 1, 2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tensor, GradBufferExistsOnlyWhenTracked) {
  Tensor a = Tensor::zeros({1, 2, 2, 2});
  EXPECT_TRUE(a.grad().empty());
  a.set_requires_grad(true);
  EXPECT_EQ(a.grad().size(), a.numel());
}

TEST(Tensor, NonFiniteResultIsRejected) {
  const Tensor big = Tensor::full({1, 1, 1, 2}, 1e30f);
  EXPECT_THROW(multiply(big, big), NumericError);
}

// ---------------------------------------------------------------- conv2d

TEST(Conv2d, IdentityKernelReturnsInput) {
  Rng rng(1);
  const Tensor x = oracle::random_tensor<float>(rng, {1, 1, 3, 3});
  const Tensor y = conv2d(x, conv_params(Tensor::full({1, 1, 1, 1}, 1.0f)));
  EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, OnesKernelWithPaddingCountsNeighbours) {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, conv_params(Tensor::full({1, 1, 3, 3}, 1.0f), 1, 1, 1));
  const std::vector<float> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(values(y), expected);
}

TEST(Conv2d, OutputShapes) {
  const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0f);
  EXPECT_EQ(conv2d(Tensor::zeros({1, 1, 5, 5}), conv_params(k, 1, 2, 2)).shape(),
            (Shape{1, 1, 5, 5}));
  EXPECT_EQ(conv2d(Tensor::zeros({1, 1, 8, 8}), conv_params(k, 2, 1, 1)).shape(),
            (Shape{1, 1, 4, 4}));
}

TEST(Conv2d, ChannelMismatchNamesBothShapes) {
  try {
    conv2d(Tensor::zeros({1, 2, 4, 4}),
           conv_params(Tensor::zeros({1, 3, 3, 3}), 1, 1, 1));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1x2x4x4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1x3x3x3"), std::string::npos) << msg;
  }
}

TEST(Conv2d, KernelThatDoesNotFitIsAnError) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 4, 4}),
                      conv_params(Tensor::zeros({1, 1, 3, 3}), 1, 4, 0)),
               ShapeError);
}

TEST(Conv2d, ShapeLawSweep) {
  const int size = 20;
  const Tensor x = Tensor::full({1, 1, size, size}, 0.5f);
  int built = 0, rejected = 0;
  for (int k : {1, 3})
    for (int s : {1, 2})
      for (int d : {1, 2, 4, 6, 12, 18, 24})
        for (int pad = 0; pad <= 6; ++pad) {
          const int expect = (size + 2 * pad - d * (k - 1) - 1) / s + 1;
          const auto p = conv_params(Tensor::full({1, 1, k, k}, 1.0f), s, d, pad);
          if (size + 2 * pad - d * (k - 1) - 1 < 0) {
            EXPECT_THROW(conv2d(x, p), ShapeError) << k << s << d << pad;
            ++rejected;
            continue;
          }
          EXPECT_EQ(conv2d(x, p).shape(), (Shape{1, 1, expect, expect}))
              << "k=" << k << " s=" << s << " d=" << d << " pad=" << pad;
          ++built;
        }
  EXPECT_GT(built, 0);
  EXPECT_GT(rejected, 0);
}

TEST(Conv2d, MatchesDirectLoopOracle) {
  Rng rng(7);
  struct Cfg {
    int k, s, d, pad;
    bool bias;
  };
  for (const Cfg& c : {Cfg{3, 1, 1, 1, false}, Cfg{3, 2, 1, 1, true},
                       Cfg{1, 4, 1, 0, false}, Cfg{3, 1, 6, 6, false},
                       Cfg{3, 1, 2, 0, true}, Cfg{1, 1, 1, 0, true}}) {
    const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 9, 11});
    const Tensor k = oracle::random_tensor<float>(rng, {4, 3, c.k, c.k});
    auto p = conv_params(k, c.s, c.d, c.pad);
    std::vector<double> bias;
    if (c.bias) {
      p.bias = oracle::random_tensor<float>(rng, {4, 1, 1, 1});
      bias = oracle::to_double(*p.bias);
    }
    oracle::Dims od{};
    const auto ref = oracle::conv2d(oracle::to_double(x), {2, 3, 9, 11},
                                    oracle::to_double(k), {4, 3, c.k, c.k},
                                    c.bias ? &bias : nullptr, c.s, c.d, c.pad, &od);
    const Tensor y = conv2d(x, p);
    ASSERT_EQ(y.shape(), (Shape{od.n, od.c, od.h, od.w}));
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(y.data()[i], ref[i], 1e-5) << "cfg k=" << c.k << " i=" << i;
    }
  }
}

TEST(Conv2d, LinearInInput) {
  Rng rng(3);
  const Shape s{2, 3, 8, 8};
  const Tensor x = oracle::random_tensor<float>(rng, s);
  const Tensor y = oracle::random_tensor<float>(rng, s);
  const auto p = conv_params(oracle::random_tensor<float>(rng, {4, 3, 3, 3}), 1, 2, 2);
  const float a = 0.7f, b = -1.3f;
  std::vector<float> mix(s.numel());
  for (std::size_t i = 0; i < mix.size(); ++i) {
    mix[i] = a * x.data()[i] + b * y.data()[i];
  }
  const Tensor lhs = conv2d(Tensor::from_data(s, mix), p);
  const Tensor cx = conv2d(x, p), cy = conv2d(y, p);
  double max_rel = 0;
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    const double rhs = a * cx.data()[i] + b * cy.data()[i];
    max_rel = std::max(max_rel, std::abs(lhs.data()[i] - rhs) /
                                    std::max(1.0, std::abs(rhs)));
  }
  EXPECT_LT(max_rel, 1e-5);
}

TEST(Conv2d, BitDeterministic) {
  Rng rng(11);
  const Tensor x = oracle::random_tensor<float>(rng, {2, 5, 12, 10});
  const auto p = conv_params(oracle::random_tensor<float>(rng, {6, 5, 3, 3}), 2, 1, 1);
  const Tensor a = conv2d(x, p);
  const Tensor b = conv2d(x.detach(), p);
  ASSERT_EQ(a.numel(), b.numel());
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)), 0);
}

// ------------------------------------------------------------- batch_norm

TEST(BatchNorm, TrainModeUsesPopulationVariance) {
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  auto stats = RunningStats<float>::identity(1);
  const Tensor y = batch_norm(x, Tensor::full({1, 1, 1, 1}, 1.0f),
                              Tensor::zeros({1, 1, 1, 1}), stats, Mode::kTrain);
  const double sd = std::sqrt(1.25 + 1e-5);
  const std::vector<double> expected{-1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], expected[i], 1e-5);
  EXPECT_NEAR(y.data()[0], -1.3416, 1e-4);
  EXPECT_NEAR(y.data()[1], -0.4472, 1e-4);
  // Running statistics move 10% of the way to the batch statistics.
  EXPECT_NEAR(stats.mean[0], 0.25, 1e-6);
  EXPECT_NEAR(stats.var[0], 0.9 + 0.1 * 1.25, 1e-6);
}

TEST(BatchNorm, EvalModeWithIdentityStatsIsNearIdentity) {
  Rng rng(5);
  const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 4, 4});
  auto stats = RunningStats<float>::identity(3);
  const Tensor y = batch_norm(x, Tensor::full({3, 1, 1, 1}, 1.0f),
                              Tensor::zeros({3, 1, 1, 1}), stats, Mode::kEval);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
  }
}

TEST(BatchNorm, ConstantChannelCollapsesToBeta) {
  auto stats = RunningStats<float>::identity(1);
  const Tensor y = batch_norm(Tensor::full({2, 1, 3, 3}, 4.0f),
                              Tensor::full({1, 1, 1, 1}, 2.0f),
                              Tensor::full({1, 1, 1, 1}, 0.3f), stats, Mode::kTrain);
  for (float v : y.data()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(BatchNorm, OutputMomentsMatchGammaAndBeta) {
  Rng rng(9);
  const Tensor x = oracle::random_tensor<float>(rng, {4, 3, 6, 6}, -3.0, 5.0);
  const std::vector<float> gamma{0.5f, 1.0f, 2.0f}, beta{-1.0f, 0.0f, 0.25f};
  auto stats = RunningStats<float>::identity(3);
  const Tensor y = batch_norm(x, Tensor::from_data({3, 1, 1, 1}, gamma),
                              Tensor::from_data({3, 1, 1, 1}, beta), stats,
                              Mode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    int count = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 36; ++i) {
        m += y.at(n, c, i / 6, i % 6);
        ++count;
      }
    m /= count;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 36; ++i) {
        const double d = y.at(n, c, i / 6, i % 6) - m;
        v += d * d;
      }
    v /= count;
    EXPECT_NEAR(m, beta[c], 1e-4);
    EXPECT_NEAR(v, gamma[c] * gamma[c], 1e-4 * std::max(1.0f, gamma[c] * gamma[c]));
  }
}

TEST(BatchNorm, ChannelMismatchIsAnError) {
  auto stats = RunningStats<float>::identity(2);
  EXPECT_THROW(batch_norm(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({2, 1, 1, 1}),
                          Tensor::zeros({2, 1, 1, 1}), stats, Mode::kTrain),
               ShapeError);
}

// ------------------------------------------------------ pointwise ops

TEST(Relu, ValuesAndSubgradient) {
  const Tensor y = relu(Tensor::from_data({1, 1, 1, 3}, {-1, 0, 2}));
  EXPECT_EQ(values(y), (std::vector<float>{0, 0, 2}));

  TensorD x = TensorD::from_data({1, 1, 1, 3}, {-1, 0, 2}, true);
  backward(sum(relu(x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{0, 0, 1}));
}

TEST(Relu, PositiveInputUnchangedAndFiniteDifferenceGradient) {
  const Tensor pos = Tensor::from_data({1, 1, 1, 3}, {0.5f, 1, 7});
  EXPECT_EQ(values(relu(pos)), values(pos));
  const auto r = grad_check([](const TensorD& v) { return sum(relu(v)); },
                            TensorD::from_data({1, 1, 1, 2}, {-1, 2}));
  EXPECT_TRUE(r.passed) << to_string(r);
}

TEST(Sigmoid, ValuesSaturationAndSlope) {
  const Tensor y = sigmoid(Tensor::from_data({1, 1, 1, 3}, {0, -100, 100}));
  EXPECT_FLOAT_EQ(y.data()[0], 0.5f);
  EXPECT_GT(y.data()[1], 0.0f);
  EXPECT_LT(y.data()[1], 1e-30f);
  EXPECT_LT(y.data()[2], 1.0f);
  EXPECT_TRUE(std::isfinite(y.data()[1]));

  TensorD x = TensorD::from_data({1, 1, 1, 1}, {0}, true);
  backward(sum(sigmoid(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
  const auto r = grad_check([](const TensorD& v) { return sum(sigmoid(v)); },
                            TensorD::from_data({1, 1, 1, 1}, {0}));
  EXPECT_TRUE(r.passed) << to_string(r);
}

TEST(Tanh, ValuesSaturationAndSlope) {
  const Tensor y = tanh(Tensor::from_data({1, 1, 1, 3}, {0, -50, 50}));
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_FLOAT_EQ(y.data()[1], -1.0f);
  EXPECT_FLOAT_EQ(y.data()[2], 1.0f);
  TensorD x = TensorD::from_data({1, 1, 1, 1}, {0}, true);
  backward(sum(tanh(x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  const auto r = grad_check([](const TensorD& v) { return sum(tanh(v)); },
                            TensorD::from_data({1, 1, 1, 1}, {0}));
  EXPECT_TRUE(r.passed) << to_string(r);
}

// ------------------------------------------------------------ structural ops

TEST(Concat, SingleInputIsIdentity) {
  Rng rng(2);
  const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 2, 2});
  EXPECT_EQ(values(concat_channels(std::vector<Tensor>{x})), values(x));
}

TEST(Concat, ChannelCountsAndOrder) {
  Rng rng(2);
  const Tensor a = oracle::random_tensor<float>(rng, {1, 2, 3, 3});
  const Tensor b = oracle::random_tensor<float>(rng, {1, 3, 3, 3});
  const Tensor y = concat_channels(std::vector<Tensor>{a, b});
  EXPECT_EQ(y.shape(), (Shape{1, 5, 3, 3}));
  EXPECT_EQ(values(slice_channels(y, 0, 2)), values(a));
  EXPECT_EQ(values(slice_channels(y, 2, 3)), values(b));
}

TEST(Concat, NineBranchesGiveNineTimesTheWidth) {
  const int b = 64;
  std::vector<Tensor> branches(9, Tensor::zeros({1, b, 2, 2}));
  EXPECT_EQ(concat_channels(branches).shape().c, 9 * b);
}

TEST(Concat, SpatialMismatchNamesTheInput) {
  try {
    concat_channels(std::vector<Tensor>{Tensor::zeros({1, 1, 3, 3}),
                                        Tensor::zeros({1, 1, 3, 3}),
                                        Tensor::zeros({1, 1, 4, 3})});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("input 2"), std::string::npos) << e.what();
  }
}

TEST(Upsample, FactorOneIsIdentityAndConstantsArePreserved) {
  Rng rng(4);
  const Tensor x = oracle::random_tensor<float>(rng, {1, 2, 3, 4});
  EXPECT_EQ(values(upsample_bilinear(x, 1)), values(x));
  const Tensor up = upsample_bilinear(Tensor::full({1, 1, 3, 5}, 2.5f), 2);
  for (float v : up.data()) {
    EXPECT_FLOAT_EQ(v, 2.5f);
  }
}

TEST(Upsample, TwoByTwoMatchesHalfPixelOracle) {
  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = upsample_bilinear(x, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 3), 2.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 3, 0), 3.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 3, 3), 4.0f);
  const auto ref = oracle::upsample_bilinear({1, 2, 3, 4}, {1, 1, 2, 2}, 2);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(y.data()[i], ref[i], 1e-6) << i;
  }
}

TEST(Upsample, RandomInputMatchesOracle) {
  Rng rng(8);
  for (int f : {2, 3, 4}) {
    const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 5, 4});
    const auto ref = oracle::upsample_bilinear(oracle::to_double(x), {2, 3, 5, 4}, f);
    const Tensor y = upsample_bilinear(x, f);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ASSERT_NEAR(y.data()[i], ref[i], 1e-5) << "factor " << f << " i " << i;
    }
  }
}

TEST(GlobalAvgPool, MeanAndGradient) {
  EXPECT_EQ(values(global_avg_pool(Tensor::full({1, 2, 3, 3}, 1.5f))),
            (std::vector<float>{1.5f, 1.5f}));
  EXPECT_FLOAT_EQ(global_avg_pool(Tensor::from_data({1, 1, 2, 2}, {1, 3, 5, 7})).item(),
                  4.0f);
  TensorD x = TensorD::zeros({1, 1, 3, 4}, true);
  backward(sum(global_avg_pool(x)));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0 / 12.0);
}

TEST(Elementwise, IdentitiesGradientsAndErrors) {
  Rng rng(6);
  const Tensor x = oracle::random_tensor<float>(rng, {1, 2, 2, 2});
  EXPECT_EQ(values(add(x, Tensor::zeros(x.shape()))), values(x));
  EXPECT_EQ(values(multiply(x, Tensor::full(x.shape(), 1.0f))), values(x));

  TensorD a = oracle::random_tensor<double>(rng, {1, 2, 2, 2});
  const TensorD b = oracle::random_tensor<double>(rng, {1, 2, 2, 2});
  a.set_requires_grad(true);
  backward(sum(multiply(a, b)));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_DOUBLE_EQ(a.grad()[i], b.data()[i]);

  EXPECT_THROW(add(x, Tensor::zeros({1, 2, 2, 3})), ShapeError);
  EXPECT_THROW(multiply(x, Tensor::zeros({1, 1, 2, 2})), ShapeError);
}

// ------------------------------------------------------------- autodiff

TEST(Backward, SumGivesOnes) {
  TensorD x = TensorD::zeros({1, 1, 2, 2}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceInput) {
  TensorD x = TensorD::from_data({1, 1, 1, 2}, {1, 2}, true);
  backward(sum(multiply(x, x)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{2, 4}));
}

TEST(Backward, RepeatedCallsAccumulate) {
  TensorD x = TensorD::from_data({1, 1, 1, 2}, {1, 2}, true);
  const TensorD loss = sum(multiply(x, x));
  backward(loss);
  backward(loss);
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{4, 8}));
}

TEST(Backward, NonScalarLossIsAnError) {
  TensorD x = TensorD::zeros({1, 1, 2, 2}, true);
  EXPECT_THROW(backward(relu(x)), ShapeError);
}

TEST(Tape, VisitsEveryOpOnceAndReachesEveryLeaf) {
  TensorD a = TensorD::full({1, 1, 2, 2}, 0.5, true);
  TensorD b = TensorD::full({1, 1, 2, 2}, 2.0, true);
  const TensorD shared = multiply(a, b);
  // `shared` feeds two branches; its backward rule must still run once.
  const TensorD loss = sum(add(sigmoid(shared), tanh(shared)));
  const auto tape = Tape<double>::record_from(loss);
  std::vector<const void*> seen;
  for (const auto* op : tape.ops()) {
    EXPECT_EQ(std::count(seen.begin(), seen.end(), op), 0);
    seen.push_back(op);
  }
  EXPECT_EQ(tape.ops().size(), 5u);  // multiply, sigmoid, tanh, add, sum
  EXPECT_EQ(tape.leaves().size(), 2u);
  backward(loss);
  for (double g : a.grad()) EXPECT_NE(g, 0.0);
  for (double g : b.grad()) EXPECT_NE(g, 0.0);
}

TEST(Backward, NoGradGuardStopsRecording) {
  TensorD x = TensorD::zeros({1, 1, 2, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(sum(x).requires_grad());
}

// ------------------------------------------------------------ grad_check

TEST(GradCheck, LinearFunctionIsExact) {
  Rng rng(12);
  const auto r = grad_check([](const TensorD& v) { return sum(v); },
                            oracle::random_tensor<double>(rng, {2, 3, 3, 3}));
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.checked, 54u);
}

TEST(GradCheck, ConvolutionPasses) {
  Rng rng(13);
  ConvParams<double> p;
  p.kernel = oracle::random_tensor<double>(rng, {2, 2, 3, 3});
  p.padding = {1, 1};
  const auto r = grad_check([&](const TensorD& v) { return sum(conv2d(v, p)); },
                            oracle::random_tensor<double>(rng, {1, 2, 5, 5}), 1e-5,
                            1e-6);
  EXPECT_TRUE(r.passed) << to_string(r);
}

TEST(GradCheck, CorruptedBackwardRuleFails) {
  const auto broken = [](const TensorD& x) {
    std::vector<double> y(x.data().begin(), x.data().end());
    for (double& v : y) v = v * v;
    return TensorD::make_result(
        x.shape(), std::move(y), {x},
        [](detail::Node<double>& self) {
          auto& in = *self.parents[0];
          for (std::size_t i = 0; i < in.grad.size(); ++i) {
            in.grad[i] += in.data[i] * self.grad[i];  // missing factor 2
          }
        },
        "broken_square");
  };
  Rng rng(14);
  const auto r = grad_check([&](const TensorD& v) { return sum(broken(v)); },
                            oracle::random_tensor<double>(rng, {1, 1, 2, 2}, 0.5, 1.0));
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_rel_error, 0.5, 1e-6);
}

TEST(GradCheck, LeafVariantPerturbsInPlaceAndRestores) {
  Rng rng(15);
  TensorD w = oracle::random_tensor<double>(rng, {1, 1, 2, 3});
  w.set_requires_grad(true);
  const std::vector<double> before(w.data().begin(), w.data().end());
  const TensorD x = oracle::random_tensor<double>(rng, {1, 1, 2, 3});
  const auto r = grad_check_leaf([&] { return sum(tanh(multiply(w, x))); }, w);
  EXPECT_TRUE(r.passed) << to_string(r);
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), before);
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

// --------------------------------------------------------- serialization

TEST(Serialize, HeaderLayoutIsLittleEndian) {
  std::ostringstream os;
  write_tensor(os, Tensor::from_data({1, 2, 1, 1}, {1.0f, -2.0f}));
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 16u + 8u);
  EXPECT_EQ(bytes.substr(0, 4), "CLCT");
  const auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 1u);
  EXPECT_EQ(u32(12), 2u);
  EXPECT_EQ(u32(16), 1u);
  EXPECT_EQ(u32(20), 1u);
  EXPECT_EQ(u32(24), 0x3f800000u);  // 1.0f
  EXPECT_EQ(u32(28), 0xc0000000u);  // -2.0f
}

TEST(Serialize, RoundTripIsExact) {
  Rng rng(16);
  const Tensor x = oracle::random_tensor<float>(rng, {2, 3, 4, 5}, -1e3, 1e3);
  std::stringstream ss;
  write_tensor(ss, x);
  const Tensor y = read_tensor(ss);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(values(y), values(x));
}

TEST(Serialize, BadMagicAndTruncationAreRejected) {
  std::istringstream bad(std::string("XLCT\x01\0\0\0", 8));
  EXPECT_THROW(read_tensor(bad), IoError);
  std::ostringstream os;
  write_tensor(os, Tensor::zeros({1, 1, 2, 2}));
  std::istringstream truncated(os.str().substr(0, os.str().size() - 3));
  EXPECT_THROW(read_tensor(truncated), IoError);
}
