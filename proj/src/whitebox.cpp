#include "advbench/whitebox.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "advbench/errors.hpp"
#include "advbench/transforms.hpp"

namespace advbench {

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616cULL;
constexpr std::uint64_t kTransformStream = 0x64696dULL;

Tensor onehot(std::size_t n, std::size_t i) {
  Tensor t(Shape{n}, 0.0);
  t[i] = 1.0;
  return t;
}

struct IterSettings {
  std::size_t iters = 1;
  double alpha = 0.0;
  std::optional<double> mu;  // momentum; none for plain BIM
  double transform_prob = 0.0;
  LossKind loss = LossKind::xent;
  bool early_stop = false;
  std::uint64_t seed = 0;
};

AttackOutcome iterate(const Model& model, const Tensor& x, const ThreatSpec& spec,
                      std::size_t goal_label, const IterSettings& s) {
  validate(spec);
  if (s.iters < 1) throw InvalidInput("iterative attack needs iters >= 1");
  if (s.alpha < 0.0) throw InvalidInput("step size must be nonnegative");
  if (s.transform_prob < 0.0 || s.transform_prob > 1.0)
    throw InvalidInput("transform probability must lie in [0,1]");

  Rng rng(s.seed);
  Rng eval_rng(derive_seed(s.seed, kEvalStream));
  Rng transform_rng(derive_seed(s.seed, kTransformStream));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Objective obj = attack_objective(s.loss, spec.goal, goal_label);
  const std::size_t side = square_side(x.shape());

  AttackOutcome out;
  Tensor cur = x;
  Tensor momentum(x.shape(), 0.0);
  bool adv = goal_met(model.predict(cur, eval_rng), spec.goal, goal_label);
  out.trajectory.push_back({0.0, adv, 0.0});
  for (std::size_t t = 0; t < s.iters; ++t) {
    if (s.early_stop && adv) {
      out.termination = Termination::early_success;
      break;
    }
    Tensor g;
    const bool transform = s.transform_prob > 0.0 && unit(transform_rng) < s.transform_prob && side >= 2;
    if (transform) {
      const ResizePad rp = sample_resize_pad(side, transform_rng);
      g = resize_pad_transpose(model.loss_grad(resize_pad_apply(cur, rp), obj, rng).grad, rp);
    } else {
      g = model.loss_grad(cur, obj, rng).grad;
    }
    Tensor dir;
    if (s.mu) {
      momentum *= *s.mu;
      const double n1 = norm_l1(g);
      if (n1 > 0.0) momentum.axpy(1.0 / n1, g);
      dir = step_direction(momentum, spec.norm);
    } else {
      dir = step_direction(g, spec.norm);
    }
    cur.axpy(s.alpha, dir);
    cur = project(cur, x, spec);
    ++out.iterations_used;
    adv = goal_met(model.predict(cur, eval_rng), spec.goal, goal_label);
    out.trajectory.push_back({static_cast<double>(t + 1), adv, dist(cur, x, spec.norm)});
  }
  out.success = adv;
  out.pert_norm = dist(cur, x, spec.norm);
  out.x_adv = std::move(cur);
  return out;
}

double resolve_alpha(double alpha, double eps) { return alpha > 0.0 ? alpha : default_alpha(eps); }

}  // namespace

AttackOutcome fgsm(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                   const FgsmParams& params) {
  validate(spec);
  Rng rng(params.seed);
  Rng eval_rng(derive_seed(params.seed, kEvalStream));
  const Objective obj = attack_objective(params.loss, spec.goal, goal_label);
  const Tensor g = model.loss_grad(x, obj, rng).grad;
  Tensor x_adv = x;
  x_adv.axpy(spec.eps, step_direction(g, spec.norm));
  AttackOutcome out = make_outcome(model, x, project(x_adv, x, spec), spec.norm, spec.goal,
                                   goal_label, eval_rng);
  out.iterations_used = 1;
  if (norm_linf(g) == 0.0) out.termination = Termination::degenerate;
  out.trajectory.push_back({0.0, false, 0.0});
  out.trajectory.push_back({1.0, out.success, out.pert_norm});
  return out;
}

AttackOutcome bim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const BimParams& params) {
  IterSettings s;
  s.iters = params.iters;
  s.alpha = resolve_alpha(params.alpha, spec.eps);
  s.loss = params.loss;
  s.early_stop = params.early_stop;
  s.seed = params.seed;
  return iterate(model, x, spec, goal_label, s);
}

AttackOutcome mim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const MimParams& params) {
  IterSettings s;
  s.iters = params.iters;
  s.alpha = resolve_alpha(params.alpha, spec.eps);
  s.mu = params.mu;
  s.loss = params.loss;
  s.early_stop = params.early_stop;
  s.seed = params.seed;
  return iterate(model, x, spec, goal_label, s);
}

AttackOutcome dim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const DimParams& params) {
  IterSettings s;
  s.iters = params.iters;
  s.alpha = resolve_alpha(params.alpha, spec.eps);
  s.mu = params.mu;
  s.transform_prob = params.transform_prob;
  s.loss = params.loss;
  s.seed = params.seed;
  return iterate(model, x, spec, goal_label, s);
}

// ---------------------------------------------------------------------------

AttackOutcome deepfool(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t label,
                       const DeepFoolParams& params) {
  if (spec.goal != Goal::untargeted) throw InvalidInput("deepfool is untargeted only");
  if (params.max_iters < 1) throw InvalidInput("deepfool needs max_iters >= 1");
  Rng rng(params.seed);
  const std::size_t L = model.num_classes();
  if (label >= L) throw InvalidInput("label out of range");

  AttackOutcome out;
  Trace tr = model.trace(x, rng);
  if (argmax(tr.logits.values()) != label) {
    out.x_adv = x;
    out.success = true;
    out.eps_star = 0.0;
    out.termination = Termination::early_success;
    out.trajectory.push_back({0.0, true, 0.0});
    return out;
  }
  out.trajectory.push_back({0.0, false, 0.0});

  Tensor r_total(x.shape(), 0.0);
  Tensor cur = x;
  bool adv = false;
  for (std::size_t it = 0; it < params.max_iters && !adv; ++it) {
    if (it > 0) tr = model.trace(cur, rng);
    const Tensor grad_y = tr.backward(onehot(L, label));
    double best = std::numeric_limits<double>::infinity();
    Tensor w_best;
    double f_best = 0.0;
    for (std::size_t k = 0; k < L; ++k) {
      if (k == label) continue;
      Tensor w = tr.backward(onehot(L, k)) - grad_y;
      const double f = tr.logits[k] - tr.logits[label];
      const double nw = spec.norm == Norm::l2 ? norm_l2(w) : norm_l1(w);
      if (nw == 0.0) continue;
      const double p = std::abs(f) / nw;
      if (p < best) {
        best = p;
        w_best = std::move(w);
        f_best = f;
      }
    }
    if (w_best.empty()) {
      out.termination = Termination::degenerate;
      break;
    }
    if (spec.norm == Norm::l2) {
      const double n2 = norm_l2(w_best);
      r_total.axpy(std::abs(f_best) / (n2 * n2), w_best);
    } else {
      r_total.axpy(std::abs(f_best) / norm_l1(w_best), sign(w_best));
    }
    cur = clamp(x + r_total * (1.0 + params.overshoot), 0.0, 1.0);
    ++out.iterations_used;
    adv = model.predict(cur, rng) != label;
    out.trajectory.push_back({static_cast<double>(it + 1), adv, dist(cur, x, spec.norm)});
  }
  out.success = adv;
  if (out.termination == Termination::degenerate && !adv) cur = x;
  out.pert_norm = dist(cur, x, spec.norm);
  out.x_adv = std::move(cur);
  if (adv) out.eps_star = out.pert_norm;
  return out;
}

// ---------------------------------------------------------------------------

AttackOutcome cw(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                 const CwParams& params) {
  if (spec.norm != Norm::l2) throw InvalidInput("C&W is an l2 attack");
  if (params.opt_iters < 1 || params.c_search_steps < 1)
    throw InvalidInput("C&W needs at least one iteration and one c step");
  Rng rng(params.seed);
  const std::size_t n = x.size();
  const bool targeted = spec.goal == Goal::targeted;

  AttackOutcome out;
  if (goal_met(model.predict(x, rng), spec.goal, goal_label)) {
    out.x_adv = x;
    out.success = true;
    out.eps_star = 0.0;
    out.termination = Termination::early_success;
    out.trajectory.push_back({0.0, true, 0.0});
    return out;
  }
  out.trajectory.push_back({0.0, false, 0.0});

  constexpr double k = 1.0 - 1e-7;
  Tensor w0(x.shape());
  for (std::size_t i = 0; i < n; ++i) w0[i] = std::atanh((2.0 * x[i] - 1.0) * k);

  std::optional<Tensor> best;
  double best_d = std::numeric_limits<double>::infinity();
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double c = std::clamp(params.c_init, params.c_min, params.c_max);
  std::size_t total = 0;
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  for (std::size_t step = 0; step < params.c_search_steps; ++step) {
    Tensor w = w0;
    Tensor m(x.shape(), 0.0), v(x.shape(), 0.0);
    bool found = false;
    for (std::size_t it = 0; it <= params.opt_iters; ++it) {
      Tensor th(x.shape());
      Tensor xp(x.shape());
      for (std::size_t i = 0; i < n; ++i) {
        th[i] = std::tanh(w[i]);
        xp[i] = 0.5 + 0.5 * k * th[i];
      }
      Trace tr = model.trace(xp, rng);
      const bool adv = goal_met(argmax(tr.logits.values()), spec.goal, goal_label);
      const double d = dist(xp, x, Norm::l2);
      if (adv) {
        found = true;
        if (d < best_d) {
          best_d = d;
          best = xp;
        }
      }
      if (it > 0) {
        ++total;
        out.trajectory.push_back({static_cast<double>(total), best.has_value(), best ? best_d : 0.0});
      }
      if (it == params.opt_iters) break;

      Tensor gx = (xp - x) * 2.0;
      const double marg = loss_value(LossKind::margin, tr.logits, goal_label);
      const double hinge_arg = targeted ? -marg : marg;
      if (hinge_arg > 0.0) {
        Tensor dz = loss_logit_grad(LossKind::margin, tr.logits, goal_label);
        dz *= targeted ? -c : c;
        gx += tr.backward(dz);
      }
      const double t1 = 1.0 - std::pow(b1, static_cast<double>(it + 1));
      const double t2 = 1.0 - std::pow(b2, static_cast<double>(it + 1));
      for (std::size_t i = 0; i < n; ++i) {
        const double gw = gx[i] * 0.5 * k * (1.0 - th[i] * th[i]);
        m[i] = b1 * m[i] + (1.0 - b1) * gw;
        v[i] = b2 * v[i] + (1.0 - b2) * gw * gw;
        w[i] -= params.learning_rate * (m[i] / t1) / (std::sqrt(v[i] / t2) + adam_eps);
      }
    }
    if (found) hi = std::min(hi, c);
    else lo = std::max(lo, c);
    c = std::isfinite(hi) ? 0.5 * (lo + hi) : c * 10.0;
    c = std::clamp(c, params.c_min, params.c_max);
  }
  out.iterations_used = total;
  if (best) {
    out.x_adv = std::move(*best);
    out.success = true;
    out.pert_norm = best_d;
    out.eps_star = best_d;
  } else {
    out.x_adv = x;
    out.pert_norm = 0.0;
  }
  return out;
}

}  // namespace advbench
