#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "advbench/attack.hpp"

namespace advbench {

enum class QueryMode { scores, labels };

inline constexpr std::size_t kDefaultQueryCap = 20000;

/// Counted access to a model. Every forward costs exactly one query; a
/// forward that would exceed the cap throws BudgetExhausted instead.
class QueryOracle {
 public:
  QueryOracle(ModelPtr model, QueryMode mode, std::size_t cap = kDefaultQueryCap,
              std::uint64_t seed = 0);

  /// Log-probabilities of one forward. Scores mode only.
  Tensor log_probs(const Tensor& x);
  Tensor probs(const Tensor& x);
  /// Predicted class of one forward.
  std::size_t label(const Tensor& x);

  std::size_t queries() const noexcept { return count_; }
  std::size_t cap() const noexcept { return cap_; }
  std::size_t remaining() const noexcept { return cap_ - count_; }
  QueryMode mode() const noexcept { return mode_; }
  const Shape& input_shape() const { return model_->input_shape(); }
  std::size_t num_classes() const { return model_->num_classes(); }

 private:
  Tensor forward(const Tensor& x);

  ModelPtr model_;
  QueryMode mode_;
  std::size_t cap_;
  std::size_t count_ = 0;
  Rng rng_;
};

struct GradEstimate {
  Tensor grad;
  std::size_t samples = 0;
  double sigma = 0.0;
};

enum class Estimator { nes, spsa };

std::string to_string(Estimator e);

using ScalarFn = std::function<double(const Tensor&)>;

/// Antithetic estimate (1/q) sum (J(x+s u) - J(x-s u)) / (2 s) u with
/// Gaussian (nes) or Rademacher (spsa) directions. Calls J 2q times.
GradEstimate estimate_grad(const ScalarFn& J, const Tensor& x, Estimator kind, double sigma,
                           std::size_t q, Rng& rng);

/// Same estimator on the oracle's scores, with J = obj on log-probabilities.
GradEstimate nes_grad(QueryOracle& oracle, const Tensor& x, const Objective& obj, double sigma = 0.001,
                      std::size_t q = 100, std::uint64_t seed = 0);
GradEstimate spsa_grad(QueryOracle& oracle, const Tensor& x, const Objective& obj,
                       double sigma = 0.001, std::size_t q = 100, std::uint64_t seed = 0);

/// Symmetric difference along coordinate i with both points clamped to
/// [0,1]; the denominator is the actual distance between them.
double zoo_coordinate_estimate(const ScalarFn& f, const Tensor& x, std::size_t i, double sigma);

struct ScoreAttackParams {
  Estimator estimator = Estimator::nes;
  /// 0 runs until the query budget is spent.
  std::size_t iters = 0;
  double alpha = 0.0;  // 0 selects 0.15 * eps
  double sigma = 0.001;
  std::size_t q = 100;
  std::uint64_t seed = 0;
};

struct ZooParams {
  std::size_t iters = 0;
  double sigma = 1e-4;
  double step = 0.01;  // per-coordinate Adam learning rate
  double c = 10.0;
  std::uint64_t seed = 0;
};

struct NattackParams {
  std::size_t iters = 0;
  double sigma = 0.1;
  double lr = 0.02;
  std::size_t samples = 100;
  std::uint64_t seed = 0;
};

struct BoundaryParams {
  std::size_t iters = 0;
  double spherical_step = 0.01;
  double source_step = 0.01;
  double step_adaptation = 1.1;
  std::size_t init_draws = 100;
  /// Adversarial starting point; required for targeted runs.
  std::optional<Tensor> start;
  std::uint64_t seed = 0;
};

struct EvolutionaryParams {
  std::size_t iters = 0;
  double mu = 0.01;
  double sigma_scale = 0.03;
  double c_c = 0.01;
  double c_cov = 0.001;
  /// Share of the reduced coordinates perturbed per step.
  double select_fraction = 0.05;
  std::size_t downscale = 2;
  std::size_t init_draws = 100;
  std::optional<Tensor> start;
  std::uint64_t seed = 0;
};

/// BIM update driven by an estimated margin-loss gradient.
AttackOutcome score_attack(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                           std::size_t goal_label, const ScoreAttackParams& params = {});
/// Coordinate-wise Adam on the l2 C&W objective with a fixed constant c.
AttackOutcome zoo(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec, std::size_t goal_label,
                  const ZooParams& params = {});
/// Learns a Gaussian over tanh-space inputs whose samples land in the ball.
AttackOutcome nattack(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                      std::size_t goal_label, const NattackParams& params = {});
/// Label-only random walk along the decision boundary toward x.
AttackOutcome boundary(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                       std::size_t goal_label, const BoundaryParams& params = {});
/// Label-only (1+1) evolution strategy in a downscaled search space.
AttackOutcome evolutionary(QueryOracle& oracle, const Tensor& x, const ThreatSpec& spec,
                           std::size_t goal_label, const EvolutionaryParams& params = {});

}  // namespace advbench
