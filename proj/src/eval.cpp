#include "advbench/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "advbench/errors.hpp"

namespace advbench {

namespace {

constexpr std::uint64_t kCleanStream = 0x636c65616eULL;
constexpr std::uint64_t kAttackedStream = 0x61646fULL;

std::size_t clean_prediction(const Model& model, const Tensor& x, std::uint64_t seed, std::size_t i) {
  Rng rng(derive_seed(seed, i, kCleanStream));
  return model.predict(x, rng);
}

std::vector<std::size_t> clean_predictions(const ModelPtr& model, const Dataset& ds, std::uint64_t seed,
                                           std::size_t workers) {
  std::vector<std::size_t> preds(ds.size());
  parallel_for(ds.size(), workers,
               [&](std::size_t i) { preds[i] = clean_prediction(*model, ds.examples[i].input, seed, i); });
  return preds;
}

// Start point for decision-based targeted runs: another example whose clean
// prediction is the target.
std::optional<Tensor> start_for(const Dataset& ds, const std::vector<std::size_t>& clean, std::size_t i,
                                std::size_t target) {
  for (std::size_t j = 0; j < ds.size(); ++j)
    if (j != i && clean[j] == target) return ds.examples[j].input;
  return std::nullopt;
}

AttackRequest make_request(const Dataset& ds, const std::vector<std::size_t>& clean, std::size_t i,
                           const AttackFamily& attack, const ThreatSpec& spec, std::uint64_t seed) {
  const LabeledExample& ex = ds.examples[i];
  AttackRequest req;
  req.x = ex.input;
  req.goal_label = goal_label_of(ex, spec.goal);
  req.spec = spec;
  req.seed = derive_seed(seed, i);
  if (spec.goal == Goal::targeted && attack.needs_start()) req.start = start_for(ds, clean, i, req.goal_label);
  return req;
}

void require_nonempty(const Dataset& ds) {
  if (ds.examples.empty()) throw InvalidInput("dataset is empty");
}

double resolved_tol(const CurveOptions& opt, Norm norm) { return opt.tol > 0.0 ? opt.tol : default_tol(norm); }

}  // namespace

std::size_t goal_label_of(const LabeledExample& ex, Goal goal) {
  if (goal == Goal::untargeted) return ex.label;
  if (!ex.target) throw InvalidInput("targeted evaluation needs assigned targets");
  return *ex.target;
}

// ---------------------------------------------------------------------------

double accuracy(const std::vector<PredictionPair>& preds) {
  if (preds.empty()) throw InvalidInput("no predictions");
  std::size_t ok = 0;
  for (const auto& p : preds) ok += p.attacked == p.label;
  return static_cast<double>(ok) / static_cast<double>(preds.size());
}

double asr_untargeted(const std::vector<PredictionPair>& preds) {
  std::size_t m = 0, flipped = 0;
  for (const auto& p : preds) {
    if (p.clean != p.label) continue;
    ++m;
    flipped += p.attacked != p.label;
  }
  if (m == 0) throw UndefinedRate("no correctly classified examples; untargeted success rate is undefined");
  return static_cast<double>(flipped) / static_cast<double>(m);
}

double asr_targeted(const std::vector<PredictionPair>& preds) {
  if (preds.empty()) throw InvalidInput("no predictions");
  std::size_t hit = 0;
  for (const auto& p : preds) {
    if (!p.target) throw InvalidInput("targeted success rate needs assigned targets");
    hit += p.attacked == *p.target;
  }
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<PredictionPair> attack_predictions(const ModelPtr& model, const AttackFamily& attack,
                                               const Dataset& ds, const ThreatSpec& spec, std::uint64_t seed,
                                               std::size_t workers) {
  require_nonempty(ds);
  validate(spec);
  const auto clean = clean_predictions(model, ds, seed, workers);
  std::vector<PredictionPair> out(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    const LabeledExample& ex = ds.examples[i];
    const AttackOutcome o = attack.run(model, make_request(ds, clean, i, attack, spec, seed));
    const bool within = attack.capability() == Capability::constrained ||
                        (o.success && o.pert_norm <= spec.eps + kConstraintTol);
    Rng rng(derive_seed(seed, i, kAttackedStream));
    out[i] = {ex.label, ex.target, clean[i], model->predict(within ? o.x_adv : ex.input, rng)};
  });
  return out;
}

double accuracy(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds, const ThreatSpec& spec,
                std::uint64_t seed) {
  return accuracy(attack_predictions(model, attack, ds, spec, seed));
}

double asr_untargeted(const AttackFamily& attack, const ModelPtr& model, const Dataset& ds,
                      const ThreatSpec& spec, std::uint64_t seed) {
  return asr_untargeted(attack_predictions(model, attack, ds, spec, seed));
}

double asr_targeted(const AttackFamily& attack, const ModelPtr& model, const Dataset& ds,
                    const ThreatSpec& spec, std::uint64_t seed) {
  return asr_targeted(attack_predictions(model, attack, ds, spec, seed));
}

// ---------------------------------------------------------------------------

double default_tol(Norm norm) { return norm == Norm::linf ? 1.0 / 510.0 : 1e-3; }

std::optional<double> min_eps_search(const std::function<bool(double)>& succeeds, double eps_max,
                                     double tol) {
  if (!(tol > 0.0)) throw InvalidInput("search tolerance must be positive");
  if (!(eps_max >= 0.0)) throw InvalidInput("eps_max must be nonnegative");
  if (succeeds(0.0)) return 0.0;
  if (eps_max == 0.0) return std::nullopt;
  double lo = 0.0;
  double hi = -1.0;
  for (double e = std::min(tol, eps_max); e < eps_max; e *= 2.0) {
    if (succeeds(e)) {
      hi = e;
      break;
    }
    lo = e;
  }
  if (hi < 0.0) {
    if (!succeeds(eps_max)) return std::nullopt;
    hi = eps_max;
  }
  for (int step = 0; step < 20 && hi - lo >= tol; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (succeeds(mid)) hi = mid;
    else lo = mid;
  }
  return hi;
}

namespace {

// eps_star of one example: counting for optimized attacks, search otherwise.
std::optional<double> example_eps_star(const ModelPtr& model, const AttackFamily& attack, AttackRequest req,
                                       bool clean_goal, double eps_max, double tol, bool force_search,
                                       AttackOutcome* last) {
  if (clean_goal) return 0.0;
  if (attack.capability() == Capability::optimized && !force_search) {
    AttackOutcome o = attack.run(model, req);
    std::optional<double> e;
    if (o.success) e = o.pert_norm;
    if (last) *last = std::move(o);
    return e;
  }
  const ThreatSpec base = req.spec;
  const bool optimized = attack.capability() == Capability::optimized;
  auto pred = [&](double eps) {
    if (eps == 0.0) return false;
    req.spec = base.with_eps(eps);
    AttackOutcome o = attack.run(model, req);
    const bool ok = o.success && (!optimized || o.pert_norm <= eps + kConstraintTol);
    if (last && ok) *last = std::move(o);
    return ok;
  };
  return min_eps_search(pred, eps_max, tol);
}

}  // namespace

std::optional<double> min_eps_search(const ModelPtr& model, const AttackFamily& attack,
                                     const LabeledExample& ex, const ThreatSpec& spec, double eps_max,
                                     double tol, std::uint64_t seed) {
  validate(spec);
  const std::size_t g = goal_label_of(ex, spec.goal);
  Rng rng(derive_seed(seed, 0, kCleanStream));
  const bool clean_goal = goal_met(model->predict(ex.input, rng), spec.goal, g);
  AttackRequest req{ex.input, g, spec, derive_seed(seed, 0), std::nullopt};
  auto e = example_eps_star(model, attack, req, clean_goal, eps_max, tol, false, nullptr);
  if (e && *e > eps_max + kConstraintTol) return std::nullopt;
  return e;
}

// ---------------------------------------------------------------------------

std::string to_string(CurveKind k) { return k == CurveKind::budget ? "budget" : "strength"; }

std::string to_string(BudgetMethod m) {
  switch (m) {
    case BudgetMethod::counting: return "counting";
    case BudgetMethod::binary_search: return "binary_search";
    case BudgetMethod::per_grid: return "per_grid";
  }
  return "?";
}

BudgetMethod budget_method_from_string(const std::string& s) {
  if (s == "counting") return BudgetMethod::counting;
  if (s == "binary_search") return BudgetMethod::binary_search;
  if (s == "per_grid") return BudgetMethod::per_grid;
  throw ConfigError("unknown budget curve method '" + s + "'");
}

void validate_grid(const std::vector<double>& grid, const char* what) {
  if (grid.empty()) throw InvalidInput(std::string(what) + " grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || grid[i] < 0.0)
      throw InvalidInput(std::string(what) + " grid values must be finite and nonnegative");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw InvalidInput(std::string(what) + " grid must be strictly increasing");
  }
}

namespace {

}  // namespace

CurvePoint curve_point(double x, const std::vector<ExampleResult>& results, const std::vector<bool>& success,
                       Goal goal) {
  std::size_t n = results.size(), m = 0, acc = 0, hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool correct = results[i].clean_correct;
    m += correct;
    if (correct && !success[i]) ++acc;
    if (goal == Goal::untargeted ? (correct && success[i]) : success[i]) ++hit;
  }
  const double denom = goal == Goal::untargeted ? static_cast<double>(m) : static_cast<double>(n);
  return {x, static_cast<double>(acc) / static_cast<double>(n), denom > 0 ? static_cast<double>(hit) / denom : 0.0};
}

namespace {

RobustnessCurve curve_shell(CurveKind kind, const AttackFamily& attack, const ThreatSpec& spec,
                            const CurveOptions& opt, const std::vector<ExampleResult>& results) {
  RobustnessCurve c;
  c.kind = kind;
  c.attack = attack.name();
  c.defense = opt.defense;
  c.norm = spec.norm;
  c.goal = spec.goal;
  c.seed = opt.seed;
  c.n = results.size();
  c.m = static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const auto& r) { return r.clean_correct; }));
  return c;
}

std::vector<ExampleResult> clean_results(const ModelPtr& model, const Dataset& ds, Goal goal,
                                         const std::vector<std::size_t>& clean) {
  std::vector<ExampleResult> results(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    results[i].clean_correct = clean[i] == ds.examples[i].label;
    results[i].clean_goal = goal_met(clean[i], goal, goal_label_of(ds.examples[i], goal));
  }
  (void)model;
  return results;
}

}  // namespace

std::vector<CurvePoint> budget_points(const std::vector<ExampleResult>& results, Goal goal,
                                      const std::vector<double>& eps_grid) {
  std::vector<CurvePoint> pts;
  std::vector<bool> success(results.size());
  for (double e : eps_grid) {
    for (std::size_t i = 0; i < results.size(); ++i)
      success[i] = results[i].clean_goal ||
                   (e > 0.0 && results[i].eps_star.has_value() && *results[i].eps_star <= e);
    pts.push_back(curve_point(e, results, success, goal));
  }
  return pts;
}

RobustnessCurve curve_budget(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds,
                             const ThreatSpec& spec, const std::vector<double>& eps_grid,
                             const CurveOptions& opt, std::vector<ExampleResult>* details) {
  require_nonempty(ds);
  validate(spec);
  validate_grid(eps_grid, "budget");
  if (opt.method == BudgetMethod::counting && attack.capability() != Capability::optimized)
    throw InvalidInput("the counting construction needs a minimum-perturbation attack");
  const double tol = resolved_tol(opt, spec.norm);
  const double eps_max = opt.eps_max > 0.0 ? opt.eps_max : eps_grid.back();
  const auto clean = clean_predictions(model, ds, opt.seed, opt.workers);
  std::vector<ExampleResult> results = clean_results(model, ds, spec.goal, clean);

  RobustnessCurve c;
  if (opt.method == BudgetMethod::per_grid) {
    std::vector<std::vector<bool>> success(eps_grid.size(), std::vector<bool>(ds.size()));
    parallel_for(ds.size(), opt.workers, [&](std::size_t i) {
      for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        const double e = eps_grid[k];
        if (results[i].clean_goal || e == 0.0) {
          success[k][i] = results[i].clean_goal;
          continue;
        }
        AttackOutcome o = attack.run(model, make_request(ds, clean, i, attack, spec.with_eps(e), opt.seed));
        success[k][i] = o.success && (attack.capability() == Capability::constrained ||
                                      o.pert_norm <= e + kConstraintTol);
        if (k + 1 == eps_grid.size()) results[i].outcome = std::move(o);
      }
    });
    c = curve_shell(CurveKind::budget, attack, spec, opt, results);
    for (std::size_t k = 0; k < eps_grid.size(); ++k)
      c.points.push_back(curve_point(eps_grid[k], results, success[k], spec.goal));
  } else {
    parallel_for(ds.size(), opt.workers, [&](std::size_t i) {
      AttackRequest req = make_request(ds, clean, i, attack, spec.with_eps(eps_max), opt.seed);
      results[i].eps_star = example_eps_star(model, attack, req, results[i].clean_goal, eps_max, tol, false,
                                             &results[i].outcome);
    });
    c = curve_shell(CurveKind::budget, attack, spec, opt, results);
    c.points = budget_points(results, spec.goal, eps_grid);
  }
  if (details) *details = std::move(results);
  return c;
}

bool success_at_strength(const ExampleResult& r, double strength, double eps, Goal goal) {
  (void)goal;
  if (r.clean_goal) return true;
  const Checkpoint* cp = nullptr;
  for (const auto& c : r.trajectory) {
    if (c.strength > strength) break;
    if (c.strength > 0.0) cp = &c;
  }
  if (!cp) return false;
  return cp->adversarial && cp->distance <= eps + 1e-9;
}

RobustnessCurve curve_strength(const ModelPtr& model, const AttackFamily& attack, const Dataset& ds,
                               const ThreatSpec& spec, const std::vector<double>& strength_grid,
                               const CurveOptions& opt, std::vector<ExampleResult>* details) {
  require_nonempty(ds);
  validate(spec);
  validate_grid(strength_grid, "strength");
  const auto clean = clean_predictions(model, ds, opt.seed, opt.workers);
  std::vector<ExampleResult> results = clean_results(model, ds, spec.goal, clean);
  parallel_for(ds.size(), opt.workers, [&](std::size_t i) {
    if (results[i].clean_goal) return;
    results[i].outcome = attack.run(model, make_request(ds, clean, i, attack, spec, opt.seed));
    results[i].trajectory = results[i].outcome.trajectory;
  });
  RobustnessCurve c = curve_shell(CurveKind::strength, attack, spec, opt, results);
  std::vector<bool> success(ds.size());
  for (double s : strength_grid) {
    for (std::size_t i = 0; i < ds.size(); ++i) success[i] = success_at_strength(results[i], s, spec.eps, spec.goal);
    c.points.push_back(curve_point(s, results, success, spec.goal));
  }
  if (details) *details = std::move(results);
  return c;
}

bool within_one_cell(const RobustnessCurve& a, const RobustnessCurve& b) {
  if (a.points.size() != b.points.size()) return false;
  auto inside = [](const RobustnessCurve& p, const RobustnessCurve& q) {
    const std::size_t n = p.points.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (p.points[i].x != q.points[i].x) return false;
      double lo = q.points[i].acc, hi = q.points[i].acc;
      for (std::size_t j = i == 0 ? 0 : i - 1; j <= std::min(n - 1, i + 1); ++j) {
        lo = std::min(lo, q.points[j].acc);
        hi = std::max(hi, q.points[j].acc);
      }
      if (p.points[i].acc < lo - 1e-12 || p.points[i].acc > hi + 1e-12) return false;
    }
    return true;
  };
  return inside(a, b) && inside(b, a);
}

double curve_area(const RobustnessCurve& c) {
  if (c.points.empty()) throw InvalidInput("curve has no points");
  if (c.points.size() == 1) return c.points.front().acc;
  double area = 0.0;
  for (std::size_t i = 1; i < c.points.size(); ++i)
    area += 0.5 * (c.points[i].acc + c.points[i - 1].acc) * (c.points[i].x - c.points[i - 1].x);
  return area / (c.points.back().x - c.points.front().x);
}

double median_min_perturbation(const std::vector<std::optional<double>>& eps_stars) {
  if (eps_stars.empty()) throw InvalidInput("median of no outcomes");
  std::vector<double> v;
  v.reserve(eps_stars.size());
  for (const auto& e : eps_stars) v.push_back(e ? *e : std::numeric_limits<double>::infinity());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::numeric_limits<double>::infinity();
  return 0.5 * (a + b);
}

double median_min_perturbation(const std::vector<AttackOutcome>& outcomes) {
  std::vector<std::optional<double>> e;
  e.reserve(outcomes.size());
  for (const auto& o : outcomes) e.push_back(o.eps_star);
  return median_min_perturbation(e);
}

// ---------------------------------------------------------------------------

nlohmann::json curve_to_json(const RobustnessCurve& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({{"x", p.x}, {"acc", p.acc}, {"asr", p.asr}});
  return {{"kind", to_string(c.kind)}, {"attack", c.attack}, {"defense", c.defense},
          {"norm", to_string(c.norm)}, {"goal", to_string(c.goal)}, {"seed", c.seed},
          {"n", c.n},                  {"m", c.m},               {"points", pts}};
}

RobustnessCurve curve_from_json(const nlohmann::json& j) {
  try {
    RobustnessCurve c;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "budget") c.kind = CurveKind::budget;
    else if (kind == "strength") c.kind = CurveKind::strength;
    else throw FormatError("unknown curve kind '" + kind + "'");
    c.attack = j.at("attack").get<std::string>();
    c.defense = j.at("defense").get<std::string>();
    c.norm = norm_from_string(j.at("norm").get<std::string>());
    c.goal = goal_from_string(j.at("goal").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.n = j.at("n").get<std::size_t>();
    c.m = j.at("m").get<std::size_t>();
    for (const auto& p : j.at("points"))
      c.points.push_back({p.at("x").get<double>(), p.at("acc").get<double>(), p.at("asr").get<double>()});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed curve JSON: ") + e.what());
  }
}

std::string curve_to_csv(const RobustnessCurve& c) {
  std::string out = "abscissa,accuracy,asr\n";
  char buf[128];
  for (const auto& p : c.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.x, p.acc, p.asr);
    out += buf;
  }
  return out;
}

std::vector<CurvePoint> curve_points_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "abscissa,accuracy,asr") throw FormatError("missing curve CSV header");
  std::vector<CurvePoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    char* end = nullptr;
    const char* s = line.c_str();
    p.x = std::strtod(s, &end);
    if (*end != ',') throw FormatError("bad curve CSV row: " + line);
    p.acc = std::strtod(end + 1, &end);
    if (*end != ',') throw FormatError("bad curve CSV row: " + line);
    p.asr = std::strtod(end + 1, &end);
    if (*end != '\0') throw FormatError("bad curve CSV row: " + line);
    pts.push_back(p);
  }
  return pts;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace advbench
