// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "advbench/attack_family.hpp"
#include "advbench/bench.hpp"
#include "advbench/blackbox.hpp"
#include "advbench/data.hpp"
#include "advbench/defenses.hpp"
#include "advbench/eval.hpp"
#include "advbench/training.hpp"
#include "advbench/transforms.hpp"
#include "advbench/whitebox.hpp"
#include "../test_util.hpp"

using namespace advbench;
using namespace advbench::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void check(bool ok, const std::string& what) {
    if (!ok) failures += (failures.empty() ? "" : "; ") + what;
    pass = pass && ok;
  }
  std::string text() const { return failures.empty() ? detail.str() : detail.str() + " | " + failures; }
};

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ModelPtr shared(Classifier c) { return std::make_shared<Classifier>(std::move(c)); }

ThreatSpec linf(double eps, Goal g = Goal::untargeted) { return {Norm::linf, g, eps}; }
ThreatSpec l2(double eps, Goal g = Goal::untargeted) { return {Norm::l2, g, eps}; }

double margin_of(const Model& m, const Tensor& x, std::size_t y) {
  Rng r(0);
  return loss_value(LossKind::margin, m.logits(x, r), y);
}

std::vector<double> grid_to(double top, int cells) {
  std::vector<double> g;
  for (int k = 0; k <= cells; ++k) g.push_back(top * k / cells);
  return g;
}

// digits16 split shared by the desk-scale reproductions
struct Digits {
  Dataset train, eval;
};

const Digits& digits() {
  static const Digits d = [] {
    const fs::path dir = ADVBENCH_TEST_DATA;
    Dataset all = load_idx(dir / "digits16-images.idx", dir / "digits16-labels.idx");
    auto [train, rest] = split_dataset(all, 1400, 11);
    return Digits{std::move(train), std::move(rest)};
  }();
  return d;
}

// ---------------------------------------------------------------------------
// 1. gradient correctness

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

void gradient_correctness(Verdict& v) {
  const double h = 1e-5;
  double worst = 0.0;
  for (LossKind kind : {LossKind::xent, LossKind::margin, LossKind::cw}) {
    Rng rng(100 + static_cast<int>(kind));
    std::size_t input_checked = 0, param_checked = 0;
    for (int trial = 0; trial < 1000 && (input_checked < 50 || param_checked < 50); ++trial) {
      const Classifier m = every_layer_model(1000 * static_cast<int>(kind) + trial);
      const Tensor x = random_tensor({1, 6, 6}, rng);
      const std::size_t y = rng() % 4;
      // the cw hinge is flat below zero
      if (kind == LossKind::cw && loss_value(LossKind::margin, m.forward(x), y) <= 0.05) continue;
      auto f = [&](const Classifier& mm, const Tensor& z) { return loss_value(kind, mm.forward(z), y); };

      const Tensor gx = grad_input(m, x, y, kind);
      for (int c = 0; c < 5 && input_checked < 50; ++c, ++input_checked) {
        const std::size_t i = rng() % x.size();
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        worst = std::max(worst, rel_err(gx[i], (f(m, xp) - f(m, xm)) / (2 * h)));
      }
      const LabeledExample ex{x, y, std::nullopt};
      const auto gp = grad_params(m, std::vector<LabeledExample>{ex}, kind);
      const auto params = m.parameters();
      for (int c = 0; c < 5 && param_checked < 50; ++c, ++param_checked) {
        const std::size_t p = rng() % params.size();
        const std::size_t i = rng() % params[p].size();
        auto at = [&](double delta) {
          auto q = params;
          q[p][i] += delta;
          Classifier mm = m;
          mm.set_parameters(q);
          return f(mm, x);
        };
        worst = std::max(worst, rel_err(gp[p][i], (at(h) - at(-h)) / (2 * h)));
      }
    }
    v.check(input_checked == 50 && param_checked == 50, "not enough active points for " + to_string(kind));
  }
  v.check(worst < 1e-4, "relative error " + std::to_string(worst));
  v.detail << "worst relative error " << worst;
}

// ---------------------------------------------------------------------------
// 2. linear-model oracles

void linear_oracles(Verdict& v) {
  Rng rng(2);
  double df_err = 0.0, fgsm_err = 0.0, cw_excess = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto c = random_linear_case(rng, 10);
    const auto m = binary_linear(c.w, c.b);
    const DeepFoolParams p;
    const auto out = deepfool(m, c.x, l2(0), c.label, p);
    const double expect = std::abs(affine(c.w, c.b, c.x)) / testing::l2(c.w) * (1 + p.overshoot);
    df_err = std::max(df_err, out.success ? std::abs(out.pert_norm - expect) : 1.0);

    const double eps = 0.05;
    const auto adv = fgsm(m, c.x, linf(eps), c.label, {LossKind::margin});
    const double drop = margin_of(m, c.x, c.label) - margin_of(m, adv.x_adv, c.label);
    fgsm_err = std::max(fgsm_err, std::abs(drop - eps * l1(c.w)));
  }
  for (int t = 0; t < 20; ++t) {
    const auto c = random_linear_case(rng, 10);
    const auto out = cw(binary_linear(c.w, c.b), c.x, l2(0), c.label);
    const double d = std::abs(affine(c.w, c.b, c.x)) / testing::l2(c.w);
    cw_excess = std::max(cw_excess, out.success ? std::abs(out.pert_norm - d) / d : 1.0);
  }
  v.check(df_err <= 1e-6, "deepfool error " + std::to_string(df_err));
  v.check(fgsm_err <= 1e-9, "fgsm margin error " + std::to_string(fgsm_err));
  v.check(cw_excess <= 0.05, "c&w relative gap " + std::to_string(cw_excess));
  v.detail << "deepfool " << df_err << ", fgsm " << fgsm_err << ", c&w " << fixed(100 * cw_excess, 2) << "%";
}

// ---------------------------------------------------------------------------
// 3. metric semantics

void metric_semantics(Verdict& v) {
  // labels 0 1 2 0 1 2, targets 1 2 0 2 0 1, clean 0 1 2 1 0 2, attacked 1 1 0 2 0 1
  const std::vector<PredictionPair> p = {{0, 1, 0, 1}, {1, 2, 1, 1}, {2, 0, 2, 0},
                                         {0, 2, 1, 2}, {1, 0, 0, 0}, {2, 1, 2, 1}};
  // hand counts: correct after attack {1}; flipped among clean-correct {0, 2, 5}
  // of M = 4; target hit {0, 2, 3, 4, 5} of N = 6
  const double acc = accuracy(p), au = asr_untargeted(p), at = asr_targeted(p);
  v.check(acc == 1.0 / 6.0, "accuracy " + std::to_string(acc));
  v.check(au == 3.0 / 4.0, "untargeted " + std::to_string(au));
  v.check(at == 5.0 / 6.0, "targeted " + std::to_string(at));
  v.detail << "accuracy " << fixed(acc, 4) << ", untargeted " << au << " (M=4), targeted " << fixed(at, 4)
           << " (N=6)";
}

// ---------------------------------------------------------------------------
// 4. binary-search fidelity

struct LinearFixture {
  ModelPtr model;
  Dataset ds;
};

LinearFixture linear_fixture(std::uint64_t seed, std::size_t n, std::size_t d) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> w(d);
  double sum = 0;
  for (auto& x : w) sum += (x = nd(rng));
  const double b = -0.5 * sum;
  LinearFixture f{shared(binary_linear(w, b)), {}};
  f.ds.name = "linear";
  f.ds.num_classes = 2;
  f.ds.input_shape = Shape{d};
  for (std::size_t i = 0; i < n; ++i) {
    auto x = random_tensor({d}, rng, 0.2, 0.8);
    f.ds.examples.push_back({x, affine(w, b, x) > 0 ? 1u : 0u, std::nullopt});
  }
  return f;
}

void binary_search_fidelity(Verdict& v) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t misses = 0;
  for (Norm norm : {Norm::linf, Norm::l2}) {
    const double tol = default_tol(norm), eps_max = norm == Norm::linf ? 0.3 : 3.0;
    for (int t = 0; t < 1000; ++t) {
      const double thr = eps_max * u(rng);
      const auto got = min_eps_search([&](double e) { return e >= thr; }, eps_max, tol);
      misses += !got || *got < thr || *got - thr > tol;
    }
  }
  v.check(misses == 0, std::to_string(misses) + " thresholds missed");

  std::size_t disagree = 0, pairs = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = linear_fixture(40 + seed, 60, 6);
    for (Norm norm : {Norm::linf, Norm::l2}) {
      const auto grid = grid_to(norm == Norm::linf ? 0.3 : 0.6, 15);
      const ThreatSpec spec{norm, Goal::untargeted, grid.back()};
      CurveOptions counting, search;
      counting.method = BudgetMethod::counting;
      search.method = BudgetMethod::binary_search;
      const auto a = curve_budget(f.model, *make_attack("deepfool"), f.ds, spec, grid, counting);
      const auto b = curve_budget(f.model, *make_attack("bim"), f.ds, spec, grid, search);
      ++pairs;
      disagree += !within_one_cell(a, b);
    }
  }
  v.check(disagree == 0, std::to_string(disagree) + " curve pairs differ by more than one cell");
  v.detail << "2000 thresholds, " << misses << " misses; " << pairs - disagree << "/" << pairs
           << " counting vs binary-search curve pairs within one cell";
}

// ---------------------------------------------------------------------------
// 5. estimator soundness

void estimator_soundness(Verdict& v) {
  Rng rng(5);
  const std::size_t d = 20;
  Tensor g = gaussian_tensor({d}, rng);
  const Tensor x = random_tensor({d}, rng);
  ScalarFn J = [&](const Tensor& z) { return dot(g, z); };
  for (auto kind : {Estimator::nes, Estimator::spsa}) {
    Tensor mean(x.shape());
    for (int r = 0; r < 500; ++r) mean.axpy(1.0 / 500, estimate_grad(J, x, kind, 0.001, 100, rng).grad);
    const double err = norm_l2(mean - g) / norm_l2(g);
    v.check(err < 0.05, to_string(kind) + " mean error " + std::to_string(err));
    v.detail << to_string(kind) << " " << fixed(100 * err, 2) << "%, ";
  }
  // ZOO on a quadratic with a linear term
  const Tensor a = random_tensor({d}, rng, 0.5, 2.0), c = random_tensor({d}, rng);
  ScalarFn f = [&](const Tensor& z) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * (z[i] - c[i]) * (z[i] - c[i]) + 0.3 * z[i];
    return s;
  };
  double worst = 0;
  for (int t = 0; t < 500; ++t) {
    const Tensor z = random_tensor({d}, rng, 0.01, 0.99);
    const std::size_t i = rng() % d;
    worst = std::max(worst, std::abs(zoo_coordinate_estimate(f, z, i, 1e-4) - (2 * a[i] * (z[i] - c[i]) + 0.3)));
  }
  v.check(worst < 1e-6, "zoo coordinate error " + std::to_string(worst));
  v.detail << "zoo max error " << worst;
}

// ---------------------------------------------------------------------------
// 6. query accounting

class SpyModel final : public Model {
 public:
  explicit SpyModel(ModelPtr inner) : inner_(std::move(inner)) {}
  const Shape& input_shape() const override { return inner_->input_shape(); }
  std::size_t num_classes() const override { return inner_->num_classes(); }
  Tensor logits(const Tensor& x, Rng& rng) const override {
    ++calls;
    return inner_->logits(x, rng);
  }
  Trace trace(const Tensor& x, Rng& rng) const override { return inner_->trace(x, rng); }
  mutable std::size_t calls = 0;

 private:
  ModelPtr inner_;
};

void query_accounting(Verdict& v) {
  Rng rng(6);
  const auto model = shared(make_classifier("mlp:8", Shape{1, 4, 4}, 3, 7));
  std::size_t mismatched = 0, over = 0, max_used = 0;
  for (int t = 0; t < 100; ++t) {
    auto spy = std::make_shared<SpyModel>(model);
    const int kind = t % 6;
    QueryOracle oracle(spy, kind >= 4 ? QueryMode::labels : QueryMode::scores, kDefaultQueryCap, rng());
    const Tensor x = random_tensor({1, 4, 4}, rng);
    const std::size_t y = rng() % 3;
    const std::uint64_t seed = rng();
    AttackOutcome out;
    // small budgets keep most score runs failing, so they spend the whole cap
    switch (kind) {
      case 0: out = score_attack(oracle, x, linf(0.002), y, {Estimator::nes, 0, 0, 0.001, 100, seed}); break;
      case 1: out = score_attack(oracle, x, l2(0.005), y, {Estimator::spsa, 0, 0, 0.001, 100, seed}); break;
      case 2: {
        ZooParams p;
        p.seed = seed;
        out = zoo(oracle, x, l2(0), y, p);
        break;
      }
      case 3: {
        NattackParams p;
        p.seed = seed;
        out = nattack(oracle, x, linf(0.002), y, p);
        break;
      }
      case 4: {
        BoundaryParams p;
        p.seed = seed;
        out = boundary(oracle, x, l2(0), y, p);
        break;
      }
      default: {
        EvolutionaryParams p;
        p.seed = seed;
        out = evolutionary(oracle, x, l2(0), y, p);
        break;
      }
    }
    mismatched += out.queries_used != oracle.queries() || spy->calls != oracle.queries();
    over += out.queries_used > kDefaultQueryCap;
    max_used = std::max(max_used, out.queries_used);
  }
  v.check(mismatched == 0, std::to_string(mismatched) + " runs with miscounted queries");
  v.check(over == 0, std::to_string(over) + " runs over the cap");
  v.detail << "100 runs, largest count " << max_used << " of " << kDefaultQueryCap;
}

// ---------------------------------------------------------------------------
// 7. adversarial training dominates natural training

void adversarial_training_finding(Verdict& v) {
  const Digits& d = digits();
  const Dataset eval = head(d.eval, 200);
  const double train_eps = 0.1;
  const std::string arch = "lenet";
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 7;
  const auto nat = shared(train_classifier(make_classifier(arch, d.train.input_shape, 10, 1), d.train, tc).model);
  AdvTrainConfig adv;
  adv.spec = linf(train_eps);
  const auto at =
      shared(adversarial_train(make_classifier(arch, d.train.input_shape, 10, 1), d.train, tc, adv).model);

  const auto bim = make_attack("bim");
  CurveOptions opt;
  opt.method = BudgetMethod::binary_search;
  const auto grid_inf = grid_to(0.2, 8);
  const auto grid_2 = grid_to(2.0, 8);
  const auto ni = curve_budget(nat, *bim, eval, linf(0.2), grid_inf, opt);
  const auto ai = curve_budget(at, *bim, eval, linf(0.2), grid_inf, opt);
  const auto n2 = curve_budget(nat, *bim, eval, l2(2.0), grid_2, opt);
  const auto a2 = curve_budget(at, *bim, eval, l2(2.0), grid_2, opt);

  std::size_t below_inf = 0, below_2 = 0;
  double gap = 0;
  for (std::size_t k = 1; k < grid_inf.size(); ++k) {
    below_inf += ai.points[k].acc < ni.points[k].acc;
    if (std::abs(grid_inf[k] - train_eps) < 1e-12) gap = ai.points[k].acc - ni.points[k].acc;
  }
  for (std::size_t k = 1; k < grid_2.size(); ++k) below_2 += a2.points[k].acc < n2.points[k].acc;
  v.check(below_inf == 0, "linf curve below natural at " + std::to_string(below_inf) + " grid points");
  v.check(gap >= 0.20, "gap at training eps " + fixed(gap));
  v.check(below_2 == 0, "l2 curve below natural at " + std::to_string(below_2) + " grid points");
  auto row = [](const RobustnessCurve& c) {
    std::string s;
    for (const auto& p : c.points) s += (s.empty() ? "" : " ") + fixed(p.acc, 2);
    return s;
  };
  v.detail << "linf nat [" << row(ni) << "] at [" << row(ai) << "]; l2 nat [" << row(n2) << "] at [" << row(a2)
           << "]; gap at eps " << train_eps << " = " << fixed(gap, 3);
}

// ---------------------------------------------------------------------------
// 8. randomization resists query feedback but not EOT

void noise_ensemble_finding(Verdict& v) {
  const Digits& d = digits();
  const Dataset eval = head(d.eval, 100);
  const double eps = 0.1, sigma = 0.1;
  // one noisy forward per query; the base is trained under the same noise
  const std::size_t k = 1;
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 8;
  tc.input_noise = sigma;
  const auto base = shared(train_classifier(make_classifier("mlp:64", d.train.input_shape, 10, 2), d.train, tc).model);
  tc.input_noise = 0.0;
  const auto nat = shared(train_classifier(make_classifier("mlp:64", d.train.input_shape, 10, 2), d.train, tc).model);
  const ModelPtr defended = std::make_shared<NoiseEnsembleModel>(base, sigma, k);
  const ModelPtr eot_view = wrap_eot(defended, 10, 8);

  const ThreatSpec spec = linf(eps);
  std::string nums;
  double worst_gap = 1.0;
  for (const char* name : {"nes", "spsa"}) {
    const auto atk = make_attack(name, json::object(), kDefaultQueryCap);
    const double acc_def = accuracy(defended, *atk, eval, spec);
    const double acc_nat = accuracy(nat, *atk, eval, spec);
    worst_gap = std::min(worst_gap, acc_def - acc_nat);
    nums += std::string(name) + " defended " + fixed(acc_def, 2) + " natural " + fixed(acc_nat, 2) + "; ";
  }
  const auto bim = make_attack("bim");
  const double eot_def = accuracy(eot_view, *bim, eval, spec);
  const double bim_nat = accuracy(nat, *bim, eval, spec);
  v.check(worst_gap >= 0.15, "score-based gap " + fixed(worst_gap));
  v.check(std::abs(eot_def - bim_nat) <= 0.10, "white-box gap " + fixed(eot_def - bim_nat));
  v.detail << "defended clean " << fixed(clean_accuracy(*defended, eval, 8), 2) << "; " << nums << "eot-bim defended " << fixed(eot_def, 2) << " natural bim " << fixed(bim_nat, 2);
}

// ---------------------------------------------------------------------------
// 9. BPDA through bit-depth reduction

void bpda_finding(Verdict& v) {
  const Digits& d = digits();
  const Dataset eval = head(d.eval, 200);
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 9;
  const auto base = shared(train_classifier(make_classifier("mlp:64", d.train.input_shape, 10, 3), d.train, tc).model);
  const auto defended = std::make_shared<TransformedModel>(
      base, std::vector<TransformPtr>{std::make_shared<BitDepthTransform>(1)});
  const ModelPtr bpda = wrap_bpda(defended);
  const auto bim = make_attack("bim");
  const ThreatSpec spec = linf(0.2);
  const double naive = asr_untargeted(*bim, defended, eval, spec);
  const double through = asr_untargeted(*bim, bpda, eval, spec);
  v.check(naive < 0.10, "naive asr " + fixed(naive));
  v.check(through > 0.60, "bpda asr " + fixed(through));
  v.detail << "clean " << fixed(clean_accuracy(*defended, eval), 3) << ", naive asr " << fixed(naive, 3)
           << ", bpda asr " << fixed(through, 3);
}

// ---------------------------------------------------------------------------
// 10. determinism of full benchmark cells

void determinism(Verdict& v) {
  const fs::path dir = ADVBENCH_TEST_DATA;
  json raw = {
      {"seed", 10},
      {"dataset", {{"kind", "idx"}, {"images", (dir / "digits16-images.idx").string()},
                   {"labels", (dir / "digits16-labels.idx").string()}, {"limit", 600}}},
      {"models", {{{"name", "nat"}, {"arch", "mlp:32"}, {"epochs", 3}}}},
      {"defenses", {{{"name", "plain"}, {"model", "nat"}},
                    {{"name", "rse"}, {"model", "nat"}, {"noise", {{"sigma", 0.1}, {"k", 4}}}}}},
      {"attacks", {{{"name", "bim"}}, {{"name", "deepfool"}}, {{"name", "nes"}, {"params", {{"iters", 5}}}},
                   {{"name", "boundary"}, {"norms", {"l2"}}, {"params", {{"iters", 200}}}}}},
      {"norms", {"linf", "l2"}},
      {"eps_grid", {{"linf", grid_to(0.2, 4)}, {"l2", grid_to(2.0, 4)}}},
      {"strength", {{"enabled", true}, {"queries", {0, 200, 1000}}}},
      {"query_cap", 2000},
      {"eval_examples", 12},
      {"workers", 2},
  };
  const BenchConfig c = parse_config(raw);
  std::vector<std::vector<std::string>> bytes(2);
  for (int run = 0; run < 2; ++run) {
    const fs::path base = fs::temp_directory_path() / ("advbench-acceptance-" + std::to_string(run));
    fs::remove_all(base);
    RunOptions opt;
    opt.base_dir = base;
    opt.resume = false;
    const auto r = run_benchmark(c, opt);
    for (const auto& f : r.files) {
      std::ifstream in(f, std::ios::binary);
      bytes[run].emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    fs::remove_all(base);
  }
  std::size_t differ = 0;
  for (std::size_t k = 0; k < bytes[0].size(); ++k) differ += bytes[0][k] != bytes[1][k];
  v.check(!bytes[0].empty() && bytes[0].size() == bytes[1].size(), "cell count mismatch");
  v.check(differ == 0, std::to_string(differ) + " cell records differ");
  v.detail << bytes[0].size() << " cells, " << differ << " differ";
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Verdict&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", gradient_correctness},
      {2, "linear-model oracles", linear_oracles},
      {3, "metric semantics", metric_semantics},
      {4, "binary-search fidelity", binary_search_fidelity},
      {5, "estimator soundness", estimator_soundness},
      {6, "query accounting", query_accounting},
      {7, "adversarial training dominates", adversarial_training_finding},
      {8, "noise ensemble resists score-based attacks", noise_ensemble_finding},
      {9, "bpda through bit-depth reduction", bpda_finding},
      {10, "benchmark determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s: %s (%s; %.1f s)\n", c.id, c.name, v.pass ? "PASS" : "FAIL",
                v.text().c_str(), secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
