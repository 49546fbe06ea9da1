#include "advbench/transfer.hpp"

#include <algorithm>
#include <mutex>

#include "advbench/errors.hpp"

namespace advbench {

namespace {

constexpr std::uint64_t kTargetStream = 0x746172676574ULL;

// Substitute-crafted inputs of one example, keyed by eps.
class CraftCache {
 public:
  const Tensor& get(double eps, const std::function<Tensor(double)>& craft) {
    std::lock_guard lock(mu_);
    auto it = cache_.find(eps);
    if (it == cache_.end()) it = cache_.emplace(eps, craft(eps)).first;
    return it->second;
  }

 private:
  std::mutex mu_;
  std::map<double, Tensor> cache_;
};

}  // namespace

std::vector<RobustnessCurve> transfer_eval(const ModelPtr& substitute, const std::vector<NamedModel>& targets,
                                           const AttackFamily& attack, const Dataset& ds,
                                           const ThreatSpec& spec, const std::vector<double>& eps_grid,
                                           const CurveOptions& opt) {
  if (ds.examples.empty()) throw InvalidInput("dataset is empty");
  validate(spec);
  validate_grid(eps_grid, "budget");
  if (attack.capability() != Capability::constrained)
    throw InvalidInput("transfer evaluation needs a constrained attack");
  if (opt.method == BudgetMethod::counting) throw InvalidInput("transfer curves use search or per-grid runs");
  const double tol = opt.tol > 0.0 ? opt.tol : default_tol(spec.norm);
  const double eps_max = opt.eps_max > 0.0 ? opt.eps_max : eps_grid.back();

  std::vector<CraftCache> caches(ds.size());
  auto crafted = [&](std::size_t i, double eps) -> const Tensor& {
    return caches[i].get(eps, [&](double e) {
      const LabeledExample& ex = ds.examples[i];
      AttackRequest req{ex.input, goal_label_of(ex, spec.goal), spec.with_eps(e), derive_seed(opt.seed, i),
                        std::nullopt};
      return attack.run(substitute, req).x_adv;
    });
  };

  std::vector<RobustnessCurve> curves;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const NamedModel& target = targets[t];
    std::vector<ExampleResult> results(ds.size());
    std::vector<std::vector<bool>> grid_success(eps_grid.size(), std::vector<bool>(ds.size()));
    parallel_for(ds.size(), opt.workers, [&](std::size_t i) {
      const LabeledExample& ex = ds.examples[i];
      const std::size_t g = goal_label_of(ex, spec.goal);
      Rng clean_rng(derive_seed(opt.seed, i, 0x636c65616eULL));
      const std::size_t clean = target.model->predict(ex.input, clean_rng);
      results[i].clean_correct = clean == ex.label;
      results[i].clean_goal = goal_met(clean, spec.goal, g);
      auto fooled = [&](double eps) {
        if (eps == 0.0) return results[i].clean_goal;
        Rng rng(derive_seed(opt.seed, i, kTargetStream));
        return goal_met(target.model->predict(crafted(i, eps), rng), spec.goal, g);
      };
      if (opt.method == BudgetMethod::per_grid) {
        for (std::size_t k = 0; k < eps_grid.size(); ++k)
          grid_success[k][i] = results[i].clean_goal || fooled(eps_grid[k]);
      } else {
        results[i].eps_star = results[i].clean_goal ? std::optional<double>(0.0)
                                                    : min_eps_search(fooled, eps_max, tol);
      }
    });

    RobustnessCurve c;
    c.kind = CurveKind::budget;
    c.attack = attack.name();
    c.defense = target.name;
    c.norm = spec.norm;
    c.goal = spec.goal;
    c.seed = opt.seed;
    c.n = ds.size();
    c.m = static_cast<std::size_t>(
        std::count_if(results.begin(), results.end(), [](const auto& r) { return r.clean_correct; }));
    if (opt.method == BudgetMethod::per_grid) {
      for (std::size_t k = 0; k < eps_grid.size(); ++k)
        c.points.push_back(curve_point(eps_grid[k], results, grid_success[k], spec.goal));
    } else {
      c.points = budget_points(results, spec.goal, eps_grid);
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

std::map<std::string, std::string> select_substitutes(const std::vector<RobustnessScore>& scores) {
  if (scores.size() < 2) throw ConfigError("substitute selection needs at least two models");
  std::vector<RobustnessScore> ranked = scores;
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.area != b.area) return a.area > b.area;
    return a.clean_accuracy > b.clean_accuracy;
  });
  std::map<std::string, std::string> out;
  for (const auto& s : scores) out[s.name] = s.name == ranked[0].name ? ranked[1].name : ranked[0].name;
  return out;
}

}  // namespace advbench
