#include "advbench/attack.hpp"

#include "advbench/errors.hpp"

namespace advbench {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::early_success: return "early_success";
    case Termination::budget_exhausted: return "budget_exhausted";
    case Termination::init_failed: return "init_failed";
    case Termination::degenerate: return "degenerate";
  }
  return "?";
}

Objective attack_objective(LossKind kind, Goal goal, std::size_t goal_label) {
  const bool targeted = goal == Goal::targeted;
  switch (kind) {
    case LossKind::xent: return {kind, goal_label, targeted ? -1.0 : 1.0};
    case LossKind::margin:
    case LossKind::cw: return {kind, goal_label, targeted ? 1.0 : -1.0};
  }
  throw InvalidInput("unknown loss kind");
}

Tensor step_direction(const Tensor& g, Norm norm) {
  if (norm == Norm::linf) return sign(g);
  const double n = norm_l2(g);
  if (n == 0.0) return Tensor(g.shape(), 0.0);
  return g * (1.0 / n);
}

AttackOutcome make_outcome(const Model& model, const Tensor& x, Tensor x_adv, Norm norm, Goal goal,
                           std::size_t goal_label, Rng& rng) {
  AttackOutcome out;
  out.success = goal_met(model.predict(x_adv, rng), goal, goal_label);
  out.pert_norm = dist(x_adv, x, norm);
  out.x_adv = std::move(x_adv);
  return out;
}

}  // namespace advbench
