#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advbench/loss.hpp"
#include "advbench/model.hpp"
#include "advbench/threat.hpp"

namespace advbench {

enum class Termination { completed, early_success, budget_exhausted, init_failed, degenerate };

std::string to_string(Termination t);

/// State of an attack's current answer after `strength` iterations or
/// queries. For minimum-perturbation attacks this is the best answer so far.
struct Checkpoint {
  double strength = 0.0;
  bool adversarial = false;
  double distance = 0.0;
};

struct AttackOutcome {
  Tensor x_adv;
  bool success = false;
  double pert_norm = 0.0;
  std::size_t iterations_used = 0;
  std::size_t queries_used = 0;
  std::optional<double> eps_star;
  Termination termination = Termination::completed;
  std::vector<Checkpoint> trajectory;
};

/// Untargeted: prediction differs from `goal_label` (the true class).
/// Targeted: prediction equals `goal_label` (the target class).
inline bool goal_met(std::size_t prediction, Goal goal, std::size_t goal_label) {
  return goal == Goal::untargeted ? prediction != goal_label : prediction == goal_label;
}

/// Objective that an attack ascends. xent: push away from y, or toward y*.
/// margin: shrink Z_y's lead, or grow Z_{y*}'s lead.
Objective attack_objective(LossKind kind, Goal goal, std::size_t goal_label);

/// Unit step direction for a gradient: sign for linf, g/||g||_2 for l2.
/// A zero gradient gives the zero vector.
Tensor step_direction(const Tensor& g, Norm norm);

/// One prediction of `model` on x_adv and the resulting outcome fields.
AttackOutcome make_outcome(const Model& model, const Tensor& x, Tensor x_adv, Norm norm, Goal goal,
                           std::size_t goal_label, Rng& rng);

}  // namespace advbench
