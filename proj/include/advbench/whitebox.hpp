#pragma once

#include "advbench/attack.hpp"

namespace advbench {

struct FgsmParams {
  LossKind loss = LossKind::xent;
  std::uint64_t seed = 0;
};

struct BimParams {
  std::size_t iters = 20;
  /// 0 selects 0.15 * eps.
  double alpha = 0.0;
  LossKind loss = LossKind::xent;
  bool early_stop = false;
  std::uint64_t seed = 0;
};

struct MimParams {
  std::size_t iters = 20;
  double alpha = 0.0;
  double mu = 1.0;
  LossKind loss = LossKind::xent;
  bool early_stop = false;
  std::uint64_t seed = 0;
};

struct DimParams {
  std::size_t iters = 10;
  double alpha = 0.0;
  double mu = 1.0;
  double transform_prob = 0.5;
  LossKind loss = LossKind::xent;
  std::uint64_t seed = 0;
};

struct DeepFoolParams {
  std::size_t max_iters = 100;
  double overshoot = 0.02;
  std::uint64_t seed = 0;
};

struct CwParams {
  std::size_t opt_iters = 100;
  std::size_t c_search_steps = 6;
  double c_init = 1e-2;
  double c_min = 1e-3;
  double c_max = 1e6;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
};

inline double default_alpha(double eps) { return 0.15 * eps; }

AttackOutcome fgsm(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                   const FgsmParams& params = {});
AttackOutcome bim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const BimParams& params = {});
AttackOutcome mim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const MimParams& params = {});
/// MIM whose gradients pass through a random resize-and-pad of the iterate.
AttackOutcome dim(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const DimParams& params = {});

/// Untargeted minimum-perturbation attack; spec.eps is ignored. Throws
/// InvalidInput for a targeted spec.
AttackOutcome deepfool(const Model& model, const Tensor& x, const ThreatSpec& spec,
                       std::size_t label, const DeepFoolParams& params = {});

/// l2 minimum-perturbation attack; spec.eps is ignored. Returns the
/// smallest successful perturbation over all c values tried.
AttackOutcome cw(const Model& model, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                 const CwParams& params = {});

}  // namespace advbench
