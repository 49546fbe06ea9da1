#include "advbench/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>

#include "advbench/errors.hpp"
#include "advbench/transforms.hpp"

namespace advbench {

QueryOracle::QueryOracle(ModelPtr model, QueryMode mode, std::size_t cap, std::uint64_t seed)
    : model_(std::move(model)), mode_(mode), cap_(cap), rng_(seed) {
  if (!model_) throw InvalidInput("query oracle needs a model");
}

Tensor QueryOracle::forward(const Tensor& x) {
  if (count_ >= cap_) throw BudgetExhausted("query budget of " + std::to_string(cap_) + " exhausted");
  ++count_;
  return model_->logits(x, rng_);
}

Tensor QueryOracle::log_probs(const Tensor& x) {
  if (mode_ != QueryMode::scores) throw InvalidInput("scores requested from a label-only oracle");
  return log_softmax(forward(x));
}

Tensor QueryOracle::probs(const Tensor& x) {
  if (mode_ != QueryMode::scores) throw InvalidInput("scores requested from a label-only oracle");
  return softmax(forward(x));
}

std::size_t QueryOracle::label(const Tensor& x) { return argmax(forward(x).values()); }

std::string to_string(Estimator e) { return e == Estimator::nes ? "nes" : "spsa"; }

GradEstimate estimate_grad(const ScalarFn& J, const Tensor& x, Estimator kind, double sigma,
                           std::size_t q, Rng& rng) {
  if (q < 1) throw InvalidInput("estimator needs q >= 1");
  if (!(sigma > 0.0)) throw InvalidInput("estimator needs sigma > 0");
  std::normal_distribution<double> nd(0.0, 1.0);
  GradEstimate est{Tensor(x.shape(), 0.0), q, sigma};
  Tensor u(x.shape());
  for (std::size_t i = 0; i < q; ++i) {
    if (kind == Estimator::nes) {
      for (auto& v : u.data()) v = nd(rng);
    } else {
      for (auto& v : u.data()) v = (rng() & 1u) ? 1.0 : -1.0;
    }
    Tensor plus = x, minus = x;
    plus.axpy(sigma, u);
    minus.axpy(-sigma, u);
    const double diff = J(plus) - J(minus);
    est.grad.axpy(diff / (2.0 * sigma), u);
  }
  est.grad *= 1.0 / static_cast<double>(q);
  require_finite(est.grad, "gradient estimate");
  return est;
}

namespace {

GradEstimate oracle_estimate(QueryOracle& oracle, const Tensor& x, const Objective& obj, Estimator kind,
                             double sigma, std::size_t q, std::uint64_t seed) {
  Rng rng(seed);
  return estimate_grad([&](const Tensor& z) { return objective_value(obj, oracle.log_probs(z)); }, x,
                       kind, sigma, q, rng);
}

}  // namespace

GradEstimate nes_grad(QueryOracle& oracle, const Tensor& x, const Objective& obj, double sigma,
                      std::size_t q, std::uint64_t seed) {
  return oracle_estimate(oracle, x, obj, Estimator::nes, sigma, q, seed);
}

GradEstimate spsa_grad(QueryOracle& oracle, const Tensor& x, const Objective& obj, double sigma,
                       std::size_t q, std::uint64_t seed) {
  return oracle_estimate(oracle, x, obj, Estimator::spsa, sigma, q, seed);
}

double zoo_coordinate_estimate(const ScalarFn& f, const Tensor& x, std::size_t i, double sigma) {
  if (i >= x.size()) throw InvalidInput("coordinate out of range");
  Tensor plus = x, minus = x;
  plus[i] = std::min(1.0, x[i] + sigma);
  minus[i] = std::max(0.0, x[i] - sigma);
  const double h = plus[i] - minus[i];
  if (h <= 0.0) return 0.0;
  return (f(plus) - f(minus)) / h;
}

// ---------------------------------------------------------------------------

namespace {

bool run_forever(std::size_t iters) { return iters == 0; }

// Shared bookkeeping for attacks whose answer is the best adversarial point
// seen so far.
struct BestSoFar {
  std::optional<Tensor> x;
  double d = std::numeric_limits<double>::infinity();

  void offer(const Tensor& cand, double dist) {
    if (dist < d) {
      d = dist;
      x = cand;
    }
  }
};

void finish_best(AttackOutcome& out, const BestSoFar& best, const Tensor& x, Norm norm) {
  if (best.x) {
    out.x_adv = *best.x;
    out.success = true;
    out.pert_norm = dist(*best.x, x, norm);
    out.eps_star = out.pert_norm;
  } else {
    out.x_adv = x;
    out.success = false;
    out.pert_norm = 0.0;
  }
}

}  // namespace

AttackOutcome score_attack(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                           std::size_t goal_label, const ScoreAttackParams& params) {
  validate(spec);
  const std::size_t start = oracle.queries();
  const Objective obj = attack_objective(LossKind::margin, spec.goal, goal_label);
  const double alpha = params.alpha > 0.0 ? params.alpha : 0.15 * spec.eps;
  Rng rng(params.seed);
  ScalarFn J = [&](const Tensor& z) { return objective_value(obj, oracle.log_probs(z)); };

  AttackOutcome out;
  Tensor cur = x;
  bool adv = false;
  try {
    adv = goal_met(argmax(oracle.log_probs(cur).values()), spec.goal, goal_label);
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), adv, 0.0});
    for (std::size_t t = 0; !adv && spec.eps > 0.0 && (run_forever(params.iters) || t < params.iters); ++t) {
      const GradEstimate est = estimate_grad(J, cur, params.estimator, params.sigma, params.q, rng);
      cur.axpy(alpha, step_direction(est.grad, spec.norm));
      cur = project(cur, x, spec);
      ++out.iterations_used;
      adv = goal_met(argmax(oracle.log_probs(cur).values()), spec.goal, goal_label);
      out.trajectory.push_back(
          {static_cast<double>(oracle.queries() - start), adv, dist(cur, x, spec.norm)});
    }
    if (adv) out.termination = Termination::early_success;
  } catch (const BudgetExhausted&) {
    out.termination = Termination::budget_exhausted;
  }
  out.success = adv;
  out.pert_norm = dist(cur, x, spec.norm);
  out.x_adv = std::move(cur);
  out.queries_used = oracle.queries() - start;
  return out;
}

AttackOutcome zoo(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const ZooParams& params) {
  if (spec.norm != Norm::l2) throw InvalidInput("ZOO is an l2 attack");
  const std::size_t start = oracle.queries();
  const Objective obj = attack_objective(LossKind::margin, spec.goal, goal_label);
  Rng rng(params.seed);
  const std::size_t n = x.size();

  AttackOutcome out;
  BestSoFar best;
  auto f = [&](const Tensor& z) {
    const Tensor lp = oracle.log_probs(z);
    const double d = dist(z, x, Norm::l2);
    if (goal_met(argmax(lp.values()), spec.goal, goal_label)) best.offer(z, d);
    return d * d + params.c * std::max(-objective_value(obj, lp), 0.0);
  };

  Tensor cur = x;
  std::vector<double> m(n, 0.0), v(n, 0.0);
  std::vector<std::size_t> steps(n, 0);
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  try {
    f(cur);
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), best.x.has_value(),
                              best.x ? best.d : 0.0});
    if (best.x) {
      out.termination = Termination::early_success;
    } else {
      for (std::size_t t = 0; run_forever(params.iters) || t < params.iters; ++t) {
        const std::size_t i = static_cast<std::size_t>(rng() % n);
        const double g = zoo_coordinate_estimate(f, cur, i, params.sigma);
        ++steps[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mh = m[i] / (1.0 - std::pow(b1, static_cast<double>(steps[i])));
        const double vh = v[i] / (1.0 - std::pow(b2, static_cast<double>(steps[i])));
        cur[i] = std::clamp(cur[i] - params.step * mh / (std::sqrt(vh) + adam_eps), 0.0, 1.0);
        ++out.iterations_used;
        out.trajectory.push_back({static_cast<double>(oracle.queries() - start), best.x.has_value(),
                                  best.x ? best.d : 0.0});
      }
    }
  } catch (const BudgetExhausted&) {
    out.termination = Termination::budget_exhausted;
  }
  finish_best(out, best, x, Norm::l2);
  out.queries_used = oracle.queries() - start;
  return out;
}

AttackOutcome nattack(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                      std::size_t goal_label, const NattackParams& params) {
  validate(spec);
  if (params.samples < 2) throw InvalidInput("N-ATTACK needs at least two samples");
  const std::size_t start = oracle.queries();
  const Objective obj = attack_objective(LossKind::margin, spec.goal, goal_label);
  Rng rng(params.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t n = x.size();
  constexpr double k = 1.0 - 1e-7;
  Tensor wx(x.shape());
  for (std::size_t i = 0; i < n; ++i) wx[i] = std::atanh((2.0 * x[i] - 1.0) * k);

  AttackOutcome out;
  Tensor result = x;
  bool adv = false;
  Tensor mean(x.shape(), 0.0);
  try {
    adv = goal_met(argmax(oracle.log_probs(x).values()), spec.goal, goal_label);
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), adv, 0.0});
    std::vector<Tensor> z(params.samples, Tensor(x.shape()));
    std::vector<double> score(params.samples);
    for (std::size_t t = 0; !adv && spec.eps > 0.0 && (run_forever(params.iters) || t < params.iters); ++t) {
      for (std::size_t j = 0; j < params.samples && !adv; ++j) {
        Tensor cand(x.shape());
        for (std::size_t i = 0; i < n; ++i) {
          z[j][i] = nd(rng);
          cand[i] = 0.5 + 0.5 * k * std::tanh(wx[i] + mean[i] + params.sigma * z[j][i]);
        }
        cand = project(cand, x, spec);
        const Tensor lp = oracle.log_probs(cand);
        score[j] = objective_value(obj, lp);
        if (goal_met(argmax(lp.values()), spec.goal, goal_label)) {
          adv = true;
          result = std::move(cand);
        }
      }
      ++out.iterations_used;
      if (!adv) {
        double mu = 0.0;
        for (double s : score) mu += s;
        mu /= static_cast<double>(score.size());
        double var = 0.0;
        for (double s : score) var += (s - mu) * (s - mu);
        const double sd = std::sqrt(var / static_cast<double>(score.size()));
        if (sd > 0.0) {
          const double scale = params.lr / (static_cast<double>(params.samples) * params.sigma);
          for (std::size_t j = 0; j < params.samples; ++j) mean.axpy(scale * (score[j] - mu) / sd, z[j]);
        }
      }
      out.trajectory.push_back({static_cast<double>(oracle.queries() - start), adv,
                                adv ? dist(result, x, spec.norm) : 0.0});
    }
    if (adv) out.termination = Termination::early_success;
  } catch (const BudgetExhausted&) {
    out.termination = Termination::budget_exhausted;
  }
  out.success = adv;
  out.pert_norm = dist(result, x, spec.norm);
  out.x_adv = std::move(result);
  out.queries_used = oracle.queries() - start;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Finds an adversarial starting point and pulls it toward x by bisection
// on the segment between them.
std::optional<Tensor> decision_start(QueryOracle& oracle, const Tensor& x, Goal goal,
                                     std::size_t goal_label, const std::optional<Tensor>& given,
                                     std::size_t draws, Rng& rng) {
  auto is_adv = [&](const Tensor& z) { return goal_met(oracle.label(z), goal, goal_label); };
  std::optional<Tensor> s;
  if (given) {
    if (given->shape() != x.shape()) throw InvalidInput("starting point has the wrong shape");
    if (is_adv(*given)) s = *given;
  } else if (goal == Goal::untargeted) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < draws && !s; ++i) {
      Tensor cand(x.shape());
      for (auto& v : cand.data()) v = u(rng);
      if (is_adv(cand)) s = std::move(cand);
    }
  }
  if (!s) return s;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 10; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (is_adv(x + (*s - x) * mid)) hi = mid;
    else lo = mid;
  }
  if (hi < 1.0) s = x + (*s - x) * hi;
  return s;
}

// Success rate over the most recent window of trials.
class RateWindow {
 public:
  explicit RateWindow(std::size_t size) : size_(size) {}
  void push(bool ok) {
    hist_.push_back(ok);
    if (hist_.size() > size_) hist_.pop_front();
  }
  bool full() const { return hist_.size() == size_; }
  double rate() const {
    return static_cast<double>(std::count(hist_.begin(), hist_.end(), true)) /
           static_cast<double>(hist_.size());
  }
  void clear() { hist_.clear(); }

 private:
  std::size_t size_;
  std::deque<bool> hist_;
};

AttackOutcome decision_prologue(QueryOracle& oracle, const Tensor& x, Goal goal, std::size_t goal_label,
                                std::size_t start, bool& done) {
  AttackOutcome out;
  done = goal_met(oracle.label(x), goal, goal_label);
  if (done) {
    out.x_adv = x;
    out.success = true;
    out.eps_star = 0.0;
    out.termination = Termination::early_success;
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), true, 0.0});
    out.queries_used = oracle.queries() - start;
  }
  return out;
}

}  // namespace

AttackOutcome boundary(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                       std::size_t goal_label, const BoundaryParams& params) {
  if (spec.norm != Norm::l2) throw InvalidInput("the boundary attack is an l2 attack");
  const std::size_t start = oracle.queries();
  Rng rng(params.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto is_adv = [&](const Tensor& z) { return goal_met(oracle.label(z), spec.goal, goal_label); };
  BestSoFar best;
  AttackOutcome out;
  try {
    bool done = false;
    out = decision_prologue(oracle, x, spec.goal, goal_label, start, done);
    if (done) return out;
    auto init = decision_start(oracle, x, spec.goal, goal_label, params.start, params.init_draws, rng);
    if (!init) {
      out.termination = Termination::init_failed;
      finish_best(out, best, x, Norm::l2);
      out.queries_used = oracle.queries() - start;
      return out;
    }
    Tensor cur = std::move(*init);
    best.offer(cur, dist(cur, x, Norm::l2));
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), true, best.d});

    double sph = params.spherical_step;
    double src = params.source_step;
    RateWindow sph_rate(10), src_rate(10);
    Tensor eta(x.shape());
    for (std::size_t t = 0; run_forever(params.iters) || t < params.iters; ++t) {
      const Tensor diff = x - cur;
      const double source_norm = norm_l2(diff);
      if (source_norm == 0.0) break;
      const Tensor dir = diff * (1.0 / source_norm);
      for (auto& v : eta.data()) v = nd(rng);
      eta.axpy(-dot(eta, dir), dir);
      const double en = norm_l2(eta);
      if (en == 0.0) continue;
      eta *= sph * source_norm / en;
      const double D = 1.0 / std::sqrt(sph * sph + 1.0);
      Tensor spherical = clamp(x + (eta - diff) * D, 0.0, 1.0);
      const Tensor new_dir = x - spherical;
      const double new_norm = norm_l2(new_dir);
      double length = std::max(0.0, src * source_norm + (new_norm - source_norm));
      Tensor cand = new_norm > 0.0 ? clamp(spherical + new_dir * (length / new_norm), 0.0, 1.0) : spherical;

      const bool sph_ok = is_adv(spherical);
      sph_rate.push(sph_ok);
      if (sph_ok) {
        const bool cand_ok = is_adv(cand);
        src_rate.push(cand_ok);
        const double d = dist(cand, x, Norm::l2);
        if (cand_ok && d < best.d) {
          cur = cand;
          best.offer(cur, d);
        }
      }
      ++out.iterations_used;
      out.trajectory.push_back({static_cast<double>(oracle.queries() - start), true, best.d});

      if (sph_rate.full()) {
        if (sph_rate.rate() > 0.5) sph *= params.step_adaptation;
        else if (sph_rate.rate() < 0.25) sph /= params.step_adaptation;
        sph_rate.clear();
      }
      if (src_rate.full()) {
        if (src_rate.rate() > 0.5) src *= params.step_adaptation;
        else if (src_rate.rate() < 0.25) src /= params.step_adaptation;
        src_rate.clear();
      }
    }
  } catch (const BudgetExhausted&) {
    out.termination = Termination::budget_exhausted;
  }
  finish_best(out, best, x, Norm::l2);
  out.queries_used = oracle.queries() - start;
  return out;
}

namespace {

// Bilinear upsampling of (C, m, m) to (C, s, s).
Tensor upsample(const Tensor& low, std::size_t channels, std::size_t m, std::size_t s) {
  Tensor out(Shape{channels, s, s});
  const double f = static_cast<double>(m) / static_cast<double>(s);
  auto coord = [&](std::size_t o, std::size_t& i0, std::size_t& i1, double& w) {
    double src = (static_cast<double>(o) + 0.5) * f - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(m - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, m - 1);
    w = src - static_cast<double>(i0);
  };
  for (std::size_t c = 0; c < channels; ++c) {
    const double* L = low.data().data() + c * m * m;
    for (std::size_t i = 0; i < s; ++i) {
      std::size_t r0, r1;
      double wr;
      coord(i, r0, r1, wr);
      for (std::size_t j = 0; j < s; ++j) {
        std::size_t c0, c1;
        double wc;
        coord(j, c0, c1, wc);
        const double top = (1 - wc) * L[r0 * m + c0] + wc * L[r0 * m + c1];
        const double bot = (1 - wc) * L[r1 * m + c0] + wc * L[r1 * m + c1];
        out[(c * s + i) * s + j] = (1 - wr) * top + wr * bot;
      }
    }
  }
  return out;
}

}  // namespace

AttackOutcome evolutionary(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                           std::size_t goal_label, const EvolutionaryParams& params) {
  if (spec.norm != Norm::l2) throw InvalidInput("the evolutionary attack is an l2 attack");
  if (params.downscale < 1) throw InvalidInput("downscale factor must be >= 1");
  const std::size_t start = oracle.queries();
  Rng rng(params.seed);
  std::normal_distribution<double> nd(0.0, 1.0);

  const std::size_t side = square_side(x.shape());
  const bool spatial = side >= 2 && params.downscale > 1;
  const std::size_t channels = spatial ? x.shape()[0] : 1;
  const std::size_t m_side = spatial ? (side + params.downscale - 1) / params.downscale : 0;
  const std::size_t m = spatial ? channels * m_side * m_side : x.size();
  auto lift = [&](const Tensor& low) {
    return spatial ? upsample(low, channels, m_side, side) : low.reshaped(x.shape());
  };

  BestSoFar best;
  AttackOutcome out;
  try {
    bool done = false;
    out = decision_prologue(oracle, x, spec.goal, goal_label, start, done);
    if (done) return out;
    auto init = decision_start(oracle, x, spec.goal, goal_label, params.start, params.init_draws, rng);
    if (!init) {
      out.termination = Termination::init_failed;
      finish_best(out, best, x, Norm::l2);
      out.queries_used = oracle.queries() - start;
      return out;
    }
    Tensor cur = std::move(*init);
    best.offer(cur, dist(cur, x, Norm::l2));
    out.trajectory.push_back({static_cast<double>(oracle.queries() - start), true, best.d});

    Tensor cov(Shape{m}, 1.0);
    Tensor path(Shape{m}, 0.0);
    double mu = params.mu;
    RateWindow rate(10);
    Tensor z_low(Shape{m});
    const double path_gain = std::sqrt(params.c_c * (2.0 - params.c_c));
    const auto k = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(params.select_fraction * static_cast<double>(m))), 1, m);
    std::vector<double> weight(m);
    for (std::size_t t = 0; run_forever(params.iters) || t < params.iters; ++t) {
      const Tensor diff = x - cur;
      const double source = norm_l2(diff);
      if (source == 0.0) break;
      // k coordinates drawn without replacement, proportional to the variance
      z_low = Tensor(Shape{m}, 0.0);
      if (k == m) {
        for (std::size_t i = 0; i < m; ++i) z_low[i] = std::sqrt(cov[i]) * nd(rng);
      } else {
        for (std::size_t i = 0; i < m; ++i) weight[i] = cov[i];
        for (std::size_t j = 0; j < k; ++j) {
          std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
          const std::size_t i = pick(rng);
          weight[i] = 0.0;
          z_low[i] = std::sqrt(cov[i]) * nd(rng);
        }
      }
      Tensor z = lift(z_low);
      const double zn = norm_l2(z);
      if (zn == 0.0) continue;
      Tensor cand = cur + diff * mu;
      cand.axpy(params.sigma_scale * source / zn, z);
      // back onto the sphere of radius (1 - mu) * source around x
      const Tensor r = x - cand;
      const double rn = norm_l2(r);
      if (rn > 0.0) cand = x - r * ((1.0 - mu) * source / rn);
      cand = clamp(std::move(cand), 0.0, 1.0);
      const double d = dist(cand, x, Norm::l2);
      const bool ok = goal_met(oracle.label(cand), spec.goal, goal_label) && d < best.d;
      rate.push(ok);
      if (ok) {
        cur = std::move(cand);
        best.offer(cur, d);
        for (std::size_t i = 0; i < m; ++i) {
          path[i] = (1.0 - params.c_c) * path[i] + path_gain * z_low[i];
          cov[i] = (1.0 - params.c_cov) * cov[i] + params.c_cov * path[i] * path[i];
        }
      }
      ++out.iterations_used;
      out.trajectory.push_back({static_cast<double>(oracle.queries() - start), true, best.d});
      if (rate.full()) {
        mu = std::min(0.5, mu * std::exp(rate.rate() - 0.2));
        rate.clear();
      }
    }
  } catch (const BudgetExhausted&) {
    out.termination = Termination::budget_exhausted;
  }
  finish_best(out, best, x, Norm::l2);
  out.queries_used = oracle.queries() - start;
  return out;
}

}  // namespace advbench
