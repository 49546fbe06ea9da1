#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advbench/attack_family.hpp"
#include "advbench/data.hpp"

namespace advbench {

// ---------------------------------------------------------------------------
// Metrics

/// Clean and post-attack predictions of one example.
struct PredictionPair {
  std::size_t label = 0;
  std::optional<std::size_t> target;
  std::size_t clean = 0;
  std::size_t attacked = 0;
};

double accuracy(const std::vector<PredictionPair>& preds);
/// Throws UndefinedRate when no example is clean-correct.
double asr_untargeted(const std::vector<PredictionPair>& preds);
/// Throws InvalidInput when an example has no target.
double asr_targeted(const std::vector<PredictionPair>& preds);

/// Runs `attack` on every example at spec and predicts clean and attacked
/// inputs once each. Minimum-perturbation results larger than eps count as
/// x unchanged.
std::vector<PredictionPair> attack_predictions(const ModelPtr& model, const AttackFamily& attack,
                                               const Dataset& ds, const ThreatSpec& spec,
                                               std::uint64_t seed = 0, std::size_t workers = 1);

double accuracy(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds,
                const ThreatSpec& spec, std::uint64_t seed = 0);
double asr_untargeted(const AttackFamily& attack, const ModelPtr& model, const Dataset& ds,
                      const ThreatSpec& spec, std::uint64_t seed = 0);
double asr_targeted(const AttackFamily& attack, const ModelPtr& model, const Dataset& ds,
                    const ThreatSpec& spec, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Minimum budget search

/// Half an 8-bit level for linf, 1e-3 for l2.
double default_tol(Norm norm);

/// Smallest eps in (0, eps_max] at which `succeeds` holds, to within tol:
/// doubling line search from tol, then up to 20 bisection steps. Returns 0 if
/// succeeds(0), none if it fails at eps_max.
std::optional<double> min_eps_search(const std::function<bool(double)>& succeeds, double eps_max,
                                     double tol);

/// The same search with the attack's success at each probed budget.
std::optional<double> min_eps_search(const ModelPtr& model, const AttackFamily& attack,
                                     const LabeledExample& ex, const ThreatSpec& spec, double eps_max,
                                     double tol, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Curves

enum class CurveKind { budget, strength };
/// counting: one minimum-perturbation run per example, thresholded at each eps.
/// binary_search: per-example minimum eps from repeated runs.
/// per_grid: an independent run at every grid point.
enum class BudgetMethod { counting, binary_search, per_grid };

std::string to_string(CurveKind k);
std::string to_string(BudgetMethod m);
BudgetMethod budget_method_from_string(const std::string& s);

struct CurvePoint {
  double x = 0.0;
  double acc = 0.0;
  double asr = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct RobustnessCurve {
  CurveKind kind = CurveKind::budget;
  std::string attack;
  std::string defense;
  Norm norm = Norm::linf;
  Goal goal = Goal::untargeted;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<CurvePoint> points;
  bool operator==(const RobustnessCurve&) const = default;
};

/// Per-example summary from which curves are assembled.
struct ExampleResult {
  bool clean_correct = false;
  bool clean_goal = false;  // the clean prediction already meets the goal
  std::optional<double> eps_star;  // budget curves
  std::vector<Checkpoint> trajectory;  // strength curves
  AttackOutcome outcome;
};

struct CurveOptions {
  BudgetMethod method = BudgetMethod::binary_search;
  /// 0 selects default_tol(norm).
  double tol = 0.0;
  /// Upper end of the search; 0 selects the last grid value.
  double eps_max = 0.0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string defense = "none";
};

/// Goal label of an example for a goal.
std::size_t goal_label_of(const LabeledExample& ex, Goal goal);

RobustnessCurve curve_budget(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds,
                             const ThreatSpec& spec, const std::vector<double>& eps_grid,
                             const CurveOptions& opt = {}, std::vector<ExampleResult>* details = nullptr);

/// One run per example at the fixed eps in spec; each grid strength reads
/// the trajectory checkpoint reached by then.
RobustnessCurve curve_strength(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds,
                               const ThreatSpec& spec, const std::vector<double>& strength_grid,
                               const CurveOptions& opt = {}, std::vector<ExampleResult>* details = nullptr);

/// Assembles budget points from per-example minimum budgets.
std::vector<CurvePoint> budget_points(const std::vector<ExampleResult>& results, Goal goal,
                                      const std::vector<double>& eps_grid);

/// One curve point from per-example success flags at abscissa x.
CurvePoint curve_point(double x, const std::vector<ExampleResult>& results, const std::vector<bool>& success,
                       Goal goal);

/// Success at strength s per checkpoint semantics; strength 0 is the clean
/// prediction.
bool success_at_strength(const ExampleResult& r, double strength, double eps, Goal goal);

/// acc_a[i] lies within the range of acc_b over grid cells i-1..i+1, and
/// vice versa.
bool within_one_cell(const RobustnessCurve& a, const RobustnessCurve& b);

/// Area under the accuracy curve (trapezoid) divided by the abscissa span.
double curve_area(const RobustnessCurve& c);

/// Median of eps_star over outcomes; failures are +inf. Throws on empty.
double median_min_perturbation(const std::vector<AttackOutcome>& outcomes);
double median_min_perturbation(const std::vector<std::optional<double>>& eps_stars);

nlohmann::json curve_to_json(const RobustnessCurve& c);
RobustnessCurve curve_from_json(const nlohmann::json& j);
/// Header "abscissa,accuracy,asr"; values at 17 significant digits.
std::string curve_to_csv(const RobustnessCurve& c);
std::vector<CurvePoint> curve_points_from_csv(const std::string& text);

void validate_grid(const std::vector<double>& grid, const char* what);

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace advbench
