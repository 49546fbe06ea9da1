#include <gtest/gtest.h>

#include <atomic>
#include <memory>

#include "advbench/attack_family.hpp"
#include "advbench/data.hpp"
#include "advbench/errors.hpp"
#include "advbench/training.hpp"
#include "advbench/transfer.hpp"
#include "../test_util.hpp"

using namespace advbench;
using namespace advbench::testing;

namespace {

ModelPtr shared(Classifier c) { return std::make_shared<Classifier>(std::move(c)); }

// Counts forward passes of a wrapped model.
class CountingModel final : public Model {
 public:
  explicit CountingModel(ModelPtr base) : base_(std::move(base)) {}
  const Shape& input_shape() const override { return base_->input_shape(); }
  std::size_t num_classes() const override { return base_->num_classes(); }
  Tensor logits(const Tensor& x, Rng& rng) const override {
    ++calls;
    return base_->logits(x, rng);
  }
  Trace trace(const Tensor& x, Rng& rng) const override {
    ++calls;
    return base_->trace(x, rng);
  }
  mutable std::atomic<std::size_t> calls{0};

 private:
  ModelPtr base_;
};

ModelPtr trained_mlp(const Dataset& train, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = seed;
  return shared(train_classifier(make_classifier("mlp:32", train.input_shape, 2, seed), train, cfg).model);
}

const ThreatSpec kLinf{Norm::linf, Goal::untargeted, 0.0};

std::vector<double> grid_to(double top, int cells) {
  std::vector<double> g;
  for (int k = 0; k <= cells; ++k) g.push_back(top * k / cells);
  return g;
}

}  // namespace

TEST(Transfer, SelfTransferEqualsWhiteBoxCurve) {
  auto train = gen_synthetic(SyntheticKind::two_gaussians, 500, 1);
  auto test = head(gen_synthetic(SyntheticKind::two_gaussians, 200, 2), 60);
  auto m = trained_mlp(train, 3);
  const auto grid = grid_to(0.4, 8);
  for (const char* name : {"fgsm", "bim", "mim"})
    for (auto method : {BudgetMethod::binary_search, BudgetMethod::per_grid}) {
      auto atk = make_attack(name);
      CurveOptions opt;
      opt.method = method;
      opt.defense = "self";
      auto tc = transfer_eval(m, {{"self", m}}, *atk, test, kLinf, grid, opt);
      ASSERT_EQ(tc.size(), 1u);
      EXPECT_EQ(tc[0], curve_budget(m, *atk, test, kLinf, grid, opt)) << name << " " << to_string(method);
    }
}

TEST(Transfer, IdentityAttackReportsCleanAccuracyEverywhere) {
  auto train = gen_synthetic(SyntheticKind::two_gaussians, 500, 4);
  auto test = head(gen_synthetic(SyntheticKind::two_gaussians, 200, 5), 80);
  auto sub = trained_mlp(train, 1);
  std::vector<NamedModel> targets = {{"a", trained_mlp(train, 2)},
                                     {"b", shared(make_classifier("mlp:4", Shape{2}, 2, 9))}};
  for (auto method : {BudgetMethod::binary_search, BudgetMethod::per_grid}) {
    CurveOptions opt;
    opt.method = method;
    auto curves = transfer_eval(sub, targets, *identity_attack(), test, kLinf, grid_to(0.3, 6), opt);
    ASSERT_EQ(curves.size(), 2u);
    for (std::size_t t = 0; t < 2; ++t) {
      EXPECT_EQ(curves[t].defense, targets[t].name);
      const double clean = clean_accuracy(*targets[t].model, test);
      for (const auto& p : curves[t].points) EXPECT_DOUBLE_EQ(p.acc, clean);
    }
  }
}

TEST(Transfer, FgsmDropBetweenZeroAndWhiteBox) {
  const ThreatSpec spec{Norm::linf, Goal::untargeted, 0.3};
  for (std::uint64_t pair = 0; pair < 5; ++pair) {
    // independent training sets and initializations
    auto sub = trained_mlp(gen_synthetic(SyntheticKind::two_gaussians, 1000, 10 + pair), 100 + 2 * pair);
    auto target = trained_mlp(gen_synthetic(SyntheticKind::two_gaussians, 1000, 15 + pair), 101 + 2 * pair);
    auto test = gen_synthetic(SyntheticKind::two_gaussians, 400, 20 + pair);
    auto fgsm = make_attack("fgsm");
    const double clean = clean_accuracy(*target, test);
    const double white = clean - accuracy(target, *fgsm, test, spec);
    CurveOptions opt;
    opt.method = BudgetMethod::per_grid;
    auto tc = transfer_eval(sub, {{"target", target}}, *fgsm, test, spec, {0.0, 0.3}, opt);
    const double transfer = clean - tc[0].points[1].acc;
    EXPECT_GT(transfer, 0.0) << "pair " << pair;
    EXPECT_LT(transfer, white) << "pair " << pair << " clean " << clean;
  }
}

TEST(Transfer, NeverStrongerThanWhiteBoxOnMostGridPoints) {
  std::size_t ok = 0, total = 0;
  const auto grid = grid_to(0.3, 10);
  for (std::uint64_t pair = 0; pair < 4; ++pair) {
    auto train = gen_synthetic(SyntheticKind::two_gaussians, 800, 30 + pair);
    auto test = head(gen_synthetic(SyntheticKind::two_gaussians, 300, 40 + pair), 100);
    auto sub = trained_mlp(train, 200 + pair);
    auto target = trained_mlp(train, 300 + pair);
    for (const char* name : {"fgsm", "bim"}) {
      CurveOptions opt;
      opt.method = BudgetMethod::per_grid;
      auto atk = make_attack(name, name == std::string("bim") ? nlohmann::json{{"iters", 10}} : nlohmann::json::object());
      auto tc = transfer_eval(sub, {{"t", target}}, *atk, test, kLinf, grid, opt)[0];
      auto wc = curve_budget(target, *atk, test, kLinf, grid, opt);
      for (std::size_t k = 0; k < grid.size(); ++k, ++total) ok += tc.points[k].asr <= wc.points[k].asr;
    }
  }
  EXPECT_GE(static_cast<double>(ok), 0.9 * static_cast<double>(total));
}

TEST(Transfer, SubstituteWorkIsNotChargedToTargets) {
  auto train = gen_synthetic(SyntheticKind::two_gaussians, 300, 50);
  auto test = head(gen_synthetic(SyntheticKind::two_gaussians, 100, 51), 20);
  auto base_sub = trained_mlp(train, 1);
  auto base_target = trained_mlp(train, 2);
  const auto grid = grid_to(0.3, 6);
  std::vector<std::size_t> target_calls;
  for (int iters : {5, 40}) {
    auto sub = std::make_shared<CountingModel>(base_sub);
    auto target = std::make_shared<CountingModel>(base_target);
    CurveOptions opt;
    opt.method = BudgetMethod::per_grid;
    transfer_eval(sub, {{"t", target}}, *make_attack("bim", {{"iters", iters}, {"early_stop", false}}), test, kLinf,
                  grid, opt);
    // one clean prediction plus one per nonzero grid point
    EXPECT_LE(target->calls.load(), test.size() * grid.size());
    EXPECT_GE(sub->calls.load(), test.size() * (grid.size() - 1) * static_cast<std::size_t>(iters));
    target_calls.push_back(target->calls.load());
  }
  EXPECT_EQ(target_calls[0], target_calls[1]);
}

TEST(Transfer, CraftsEachExampleOncePerBudget) {
  auto train = gen_synthetic(SyntheticKind::two_gaussians, 300, 60);
  auto test = head(gen_synthetic(SyntheticKind::two_gaussians, 100, 61), 10);
  auto sub = std::make_shared<CountingModel>(trained_mlp(train, 1));
  std::vector<NamedModel> targets;
  for (int t = 0; t < 3; ++t) targets.push_back({"t" + std::to_string(t), trained_mlp(train, 10 + t)});
  CurveOptions opt;
  opt.method = BudgetMethod::per_grid;
  const auto grid = grid_to(0.3, 3);
  transfer_eval(sub, targets, *make_attack("fgsm"), test, kLinf, grid, opt);
  const std::size_t three_targets = sub->calls.load();
  sub->calls = 0;
  transfer_eval(sub, {targets[0]}, *make_attack("fgsm"), test, kLinf, grid, opt);
  EXPECT_EQ(sub->calls.load(), three_targets);
}

TEST(Transfer, RejectsMinimumPerturbationAttacksAndCounting) {
  auto m = shared(make_classifier("linear", Shape{2}, 2, 1));
  auto ds = gen_synthetic(SyntheticKind::two_gaussians, 10, 1);
  EXPECT_THROW(transfer_eval(m, {{"t", m}}, *make_attack("deepfool"), ds, kLinf, {0.0, 0.1}), InvalidInput);
  CurveOptions opt;
  opt.method = BudgetMethod::counting;
  EXPECT_THROW(transfer_eval(m, {{"t", m}}, *make_attack("fgsm"), ds, kLinf, {0.0, 0.1}, opt), InvalidInput);
}

TEST(SubstituteSelection, StrongestAttacksOthersRunnerUpAttacksIt) {
  auto s = select_substitutes({{"nat", 0.2, 0.99}, {"at", 0.6, 0.95}, {"jpeg", 0.3, 0.98}, {"rse", 0.5, 0.9}});
  EXPECT_EQ(s.at("nat"), "at");
  EXPECT_EQ(s.at("jpeg"), "at");
  EXPECT_EQ(s.at("rse"), "at");
  EXPECT_EQ(s.at("at"), "rse");
  for (const auto& [target, sub] : s) EXPECT_NE(target, sub);
}

TEST(SubstituteSelection, TiesBrokenByCleanAccuracy) {
  auto s = select_substitutes({{"a", 0.5, 0.90}, {"b", 0.5, 0.95}, {"c", 0.1, 0.99}});
  EXPECT_EQ(s.at("a"), "b");
  EXPECT_EQ(s.at("c"), "b");
  EXPECT_EQ(s.at("b"), "a");
  EXPECT_THROW(select_substitutes({{"only", 1.0, 1.0}}), ConfigError);
}
