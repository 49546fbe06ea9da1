#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>

#include "advbench/data.hpp"
#include "advbench/errors.hpp"
#include "advbench/loss.hpp"
#include "advbench/model.hpp"
#include "advbench/training.hpp"
#include "../test_util.hpp"

using namespace advbench;
using namespace advbench::testing;

namespace {

// conv - relu - pool - conv - relu - flatten - dense - relu - dense
Classifier every_layer_model(std::uint64_t seed) {
  Rng rng(seed);
  return Classifier(Shape{1, 6, 6},
                    {Conv3x3Layer{gaussian_tensor({2, 1, 3, 3}, rng, 0.5), gaussian_tensor({2}, rng, 0.1)},
                     ReluLayer{}, AvgPool2Layer{},
                     Conv3x3Layer{gaussian_tensor({3, 2, 3, 3}, rng, 0.5), gaussian_tensor({3}, rng, 0.1)},
                     ReluLayer{}, FlattenLayer{},
                     DenseLayer{gaussian_tensor({5, 27}, rng, 0.4), gaussian_tensor({5}, rng, 0.1)},
                     ReluLayer{},
                     DenseLayer{gaussian_tensor({4, 5}, rng, 0.6), gaussian_tensor({4}, rng, 0.1)}});
}

double numeric_grad(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i) {
  const double h = 1e-5, v = x[i];
  x[i] = v + h;
  const double fp = f(x);
  x[i] = v - h;
  const double fm = f(x);
  return (fp - fm) / (2 * h);
}

double loss_of(const Classifier& m, const Tensor& x, std::size_t y, LossKind k) {
  return loss_value(k, m.forward(x), y);
}

}  // namespace

TEST(Forward, IdentityDenseLayer) {
  auto m = linear_model({{1, 0}, {0, 1}}, {0, 0});
  auto z = m.forward(Tensor::vec({0.2, 0.8}));
  EXPECT_EQ(z, Tensor::vec({0.2, 0.8}));
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  auto m = make_classifier("mlp:8", Shape{4}, 3, 1);
  auto p = m.parameters();
  for (auto& t : p) t = Tensor(t.shape());
  m.set_parameters(p);
  Rng rng(3);
  auto z = m.forward(random_tensor({4}, rng));
  EXPECT_EQ(z, Tensor(Shape{3}));
  auto g = grad_input(m, random_tensor({4}, rng), 1, LossKind::xent);
  EXPECT_EQ(norm_linf(g), 0.0);
}

TEST(Forward, ShapeMismatchRejected) {
  auto m = linear_model({{1, 0}, {0, 1}}, {0, 0});
  EXPECT_THROW(m.forward(Tensor::vec({1, 2, 3})), InvalidInput);
  EXPECT_THROW(Classifier(Shape{3}, {DenseLayer{Tensor(Shape{2, 4}), Tensor(Shape{2})}}), InvalidInput);
}

TEST(Forward, SingleOutputRejected) {
  EXPECT_THROW(linear_model({{1, 1}}, {0}), InvalidInput);
}

TEST(Forward, BitDeterministic) {
  auto m = every_layer_model(5);
  Rng rng(9);
  auto x = random_tensor({1, 6, 6}, rng);
  auto a = m.forward(x), b = m.forward(x);
  EXPECT_EQ(0, std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)));
}

// Straight-line scalar recomputation of a trained MLP on held-out digits.
TEST(Forward, TrainedMlpMatchesScalarReference) {
  auto ds = load_idx(ADVBENCH_TEST_DATA "/digits16-images.idx", ADVBENCH_TEST_DATA "/digits16-labels.idx");
  auto [train, test] = split_dataset(ds, 1400, 11);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  auto m = train_classifier(make_classifier("mlp:32", ds.input_shape, 10, 4), train, cfg).model;
  auto params = m.parameters();
  const auto& W1 = params[0];
  const auto& b1 = params[1];
  const auto& W2 = params[2];
  const auto& b2 = params[3];
  for (std::size_t n = 0; n < 25; ++n) {
    const auto& x = test.examples[n].input;
    double h[32];
    for (int j = 0; j < 32; ++j) {
      double s = b1[j];
      for (int i = 0; i < 256; ++i) s += W1[j * 256 + i] * x[i];
      h[j] = s > 0 ? s : 0;
    }
    std::size_t best = 0;
    double best_v = -1e300;
    for (int k = 0; k < 10; ++k) {
      double s = b2[k];
      for (int j = 0; j < 32; ++j) s += W2[k * 32 + j] * h[j];
      if (s > best_v) best_v = s, best = k;
    }
    EXPECT_EQ(m.predict(x), best) << "example " << n;
  }
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  auto pred = [](std::vector<double> z) {
    auto m = linear_model([&] {
      std::vector<std::vector<double>> W(z.size(), std::vector<double>(1, 0.0));
      return W;
    }(), z);
    return m.predict(Tensor::vec({0.0}));
  };
  EXPECT_EQ(pred({0.1, 0.9}), 1u);
  EXPECT_EQ(pred({0.5, 0.5}), 0u);
  EXPECT_EQ(pred({3, 1, 3}), 0u);
}

TEST(Predict, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    auto z = gaussian_tensor({7}, rng, 3.0);
    std::vector<double> g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = std::tanh(z[i]) * 5 + std::exp(0.2 * z[i]);
    EXPECT_EQ(argmax(z.values()), argmax(g));
  }
}

TEST(Loss, XentExamples) {
  EXPECT_NEAR(loss_value(LossKind::xent, Tensor::vec({0, 0}), 0), std::log(2.0), 1e-15);
  const double big = loss_value(LossKind::xent, Tensor::vec({1000, 0}), 0);
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 0.0, 1e-300);
  EXPECT_NEAR(loss_value(LossKind::xent, Tensor::vec({0, 1000}), 0), 1000.0, 1e-9);
}

TEST(Loss, XentMatchesDirectFormula) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    auto z = gaussian_tensor({3}, rng, 2.0);
    const std::size_t y = rng() % 3;
    const double direct = -std::log(std::exp(z[y]) / (std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2])));
    EXPECT_NEAR(loss_value(LossKind::xent, z, y), direct, 1e-12);
    EXPECT_GE(loss_value(LossKind::xent, z, y), 0.0);
  }
}

TEST(Loss, MarginExamples) {
  EXPECT_EQ(loss_value(LossKind::margin, Tensor::vec({2, 5}), 0), -3.0);
  EXPECT_EQ(loss_value(LossKind::margin, Tensor::vec({5, 2}), 0), 3.0);
  EXPECT_EQ(loss_value(LossKind::margin, Tensor::vec({1, 1}), 0), 0.0);
  EXPECT_EQ(loss_value(LossKind::cw, Tensor::vec({2, 5}), 0), 0.0);
  EXPECT_EQ(loss_value(LossKind::cw, Tensor::vec({5, 2}), 0), 3.0);
}

TEST(Loss, MarginTieSubgradientUsesLowestIndex) {
  auto g = loss_logit_grad(LossKind::margin, Tensor::vec({0, 4, 4}), 0);
  EXPECT_EQ(g, Tensor::vec({1, -1, 0}));
}

TEST(Loss, SoftmaxSumsToOneAndXentShiftInvariant) {
  Rng rng(8);
  for (int t = 0; t < 300; ++t) {
    auto z = gaussian_tensor({10}, rng, 10.0);
    EXPECT_NEAR(sum(softmax(z)), 1.0, 1e-12);
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    Tensor shifted = z;
    for (auto& v : shifted.data()) v += c;
    EXPECT_NEAR(loss_value(LossKind::xent, z, 3), loss_value(LossKind::xent, shifted, 3), 1e-9);
  }
}

TEST(GradInput, LinearXentClosedForm) {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<double>> W(4, std::vector<double>(6));
    for (auto& r : W)
      for (auto& v : r) v = std::normal_distribution<double>()(rng);
    std::vector<double> b(4, 0.0);
    auto m = linear_model(W, b);
    auto x = random_tensor({6}, rng);
    const std::size_t y = rng() % 4;
    auto p = softmax(m.forward(x));
    auto g = grad_input(m, x, y, LossKind::xent);
    for (std::size_t i = 0; i < 6; ++i) {
      double expect = 0;
      for (std::size_t k = 0; k < 4; ++k) expect += (p[k] - (k == y ? 1.0 : 0.0)) * W[k][i];
      EXPECT_NEAR(g[i], expect, 1e-10);
    }
  }
}

class GradCheck : public ::testing::TestWithParam<LossKind> {};

TEST_P(GradCheck, InputGradientMatchesFiniteDifferences) {
  const LossKind kind = GetParam();
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 500 && checked < 50; ++trial) {
    auto m = every_layer_model(100 + trial);
    auto x = random_tensor({1, 6, 6}, rng);
    const std::size_t y = rng() % 4;
    auto z = m.forward(x);
    // cw hinge is flat below zero; keep points where it is active
    if (kind == LossKind::cw && loss_value(LossKind::margin, z, y) <= 0.05) continue;
    auto g = grad_input(m, x, y, kind);
    for (int c = 0; c < 5 && checked < 50; ++c, ++checked) {
      const std::size_t i = rng() % x.size();
      const double n = numeric_grad([&](const Tensor& v) { return loss_of(m, v, y, kind); }, x, i);
      EXPECT_LT(rel_err(g[i], n), 1e-4) << "coord " << i << " analytic " << g[i] << " numeric " << n;
    }
  }
  EXPECT_EQ(checked, 50);
}

TEST_P(GradCheck, ParameterGradientMatchesFiniteDifferences) {
  const LossKind kind = GetParam();
  Rng rng(41);
  int checked = 0;
  for (int trial = 0; trial < 500 && checked < 50; ++trial) {
    auto m = every_layer_model(200 + trial);
    LabeledExample ex{random_tensor({1, 6, 6}, rng), rng() % 4, std::nullopt};
    if (kind == LossKind::cw && loss_value(LossKind::margin, m.forward(ex.input), ex.label) <= 0.05) continue;
    std::vector<LabeledExample> batch{ex};
    auto grads = grad_params(m, batch, kind);
    auto params = m.parameters();
    for (int c = 0; c < 5 && checked < 50; ++c, ++checked) {
      const std::size_t p = rng() % params.size();
      const std::size_t i = rng() % params[p].size();
      auto f = [&](double v) {
        auto q = params;
        q[p][i] = v;
        Classifier mm = m;
        mm.set_parameters(q);
        return loss_of(mm, ex.input, ex.label, kind);
      };
      const double h = 1e-5, v0 = params[p][i];
      const double n = (f(v0 + h) - f(v0 - h)) / (2 * h);
      EXPECT_LT(rel_err(grads[p][i], n), 1e-4) << "param " << p << "[" << i << "]";
    }
  }
  EXPECT_EQ(checked, 50);
}

INSTANTIATE_TEST_SUITE_P(AllLosses, GradCheck,
                         ::testing::Values(LossKind::xent, LossKind::margin, LossKind::cw),
                         [](const auto& info) { return to_string(info.param); });

TEST(GradParams, DuplicateBatchGivesSameMean) {
  auto m = make_classifier("mlp:6", Shape{5}, 3, 2);
  Rng rng(4);
  LabeledExample ex{random_tensor({5}, rng), 2, std::nullopt};
  std::vector<LabeledExample> one{ex}, two{ex, ex};
  auto a = grad_params(m, one, LossKind::xent);
  auto b = grad_params(m, two, LossKind::xent);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) EXPECT_NEAR(a[i][j], b[i][j], 1e-15);
}

TEST(GradParams, ConstantLossGivesZeroGradient) {
  // cw hinge is identically zero for a misclassified point
  auto m = linear_model({{0, 0}, {1, 1}}, {0, 1});
  std::vector<LabeledExample> batch{{Tensor::vec({0.5, 0.5}), 0, std::nullopt}};
  for (const auto& g : grad_params(m, batch, LossKind::cw)) EXPECT_EQ(norm_linf(g), 0.0);
}

TEST(GradParams, EmptyBatchRejected) {
  auto m = make_classifier("linear", Shape{2}, 2, 1);
  EXPECT_THROW(grad_params(m, {}, LossKind::xent), InvalidInput);
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), InvalidInput);
  EXPECT_EQ(Tensor(Shape{2, 3}).size(), 6u);
  Tensor t = Tensor::vec({1, 2, 3, 4}).reshaped({2, 2});
  EXPECT_EQ(t.shape(), (Shape{2, 2}));
  EXPECT_THROW(t.reshaped({3}), InvalidInput);
}

TEST(Tensor, NonFiniteDetected) {
  Tensor t = Tensor::vec({1, NAN});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(MakeClassifier, Architectures) {
  EXPECT_EQ(make_classifier("linear", Shape{1, 16, 16}, 10, 1).num_classes(), 10u);
  EXPECT_EQ(make_classifier("mlp:32,16", Shape{1, 16, 16}, 10, 1).layers().size(), 6u);
  auto lenet = make_classifier("lenet", Shape{1, 16, 16}, 10, 1);
  Rng rng(1);
  EXPECT_EQ(lenet.forward(random_tensor({1, 16, 16}, rng)).size(), 10u);
  EXPECT_THROW(make_classifier("resnet", Shape{4}, 2, 1), InvalidInput);
}
