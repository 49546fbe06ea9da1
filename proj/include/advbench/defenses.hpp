#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "advbench/model.hpp"
#include "advbench/transforms.hpp"

namespace advbench {

/// base(T_n(...T_1(x))). Gradients flow through every stage's own vjp, so a
/// quantizer in the pipeline zeroes the naive gradient.
class TransformedModel final : public Model {
 public:
  TransformedModel(ModelPtr base, std::vector<TransformPtr> pipeline);

  const Shape& input_shape() const override { return base_->input_shape(); }
  std::size_t num_classes() const override { return base_->num_classes(); }
  bool stochastic() const override;

  Tensor logits(const Tensor& x, Rng& rng) const override;
  Trace trace(const Tensor& x, Rng& rng) const override;
  /// Same forward, but non-differentiable stages are replaced by `substitute`
  /// (identity when null) on the backward pass.
  Trace trace_bpda(const Tensor& x, Rng& rng, const InputTransform* substitute) const;

  const ModelPtr& base() const { return base_; }
  const std::vector<TransformPtr>& pipeline() const { return pipeline_; }

 private:
  ModelPtr base_;
  std::vector<TransformPtr> pipeline_;
};

/// Random self-ensemble: logits are log of the mean softmax over k Gaussian
/// input-noise draws of standard deviation sigma.
class NoiseEnsembleModel final : public Model {
 public:
  NoiseEnsembleModel(ModelPtr base, double sigma, std::size_t k);

  const Shape& input_shape() const override { return base_->input_shape(); }
  std::size_t num_classes() const override { return base_->num_classes(); }
  bool stochastic() const override { return sigma_ > 0.0 || base_->stochastic(); }

  Tensor logits(const Tensor& x, Rng& rng) const override;
  Trace trace(const Tensor& x, Rng& rng) const override;

 private:
  ModelPtr base_;
  double sigma_;
  std::size_t k_;
};

/// Plain ensemble: log of the arithmetic mean of member softmax outputs.
class EnsembleModel final : public Model {
 public:
  explicit EnsembleModel(std::vector<ModelPtr> members);

  const Shape& input_shape() const override { return members_.front()->input_shape(); }
  std::size_t num_classes() const override { return members_.front()->num_classes(); }
  bool stochastic() const override;

  Tensor logits(const Tensor& x, Rng& rng) const override;
  Trace trace(const Tensor& x, Rng& rng) const override;

 private:
  std::vector<ModelPtr> members_;
};

/// Mean of softmax outputs over k noise draws (probabilities, sums to 1).
Tensor noise_ensemble_forward(const Model& model, const Tensor& x, double sigma_n, std::size_t k,
                              std::uint64_t seed);

/// Mean of member softmax outputs. Throws ConfigError on mismatched L.
Tensor ensemble_mean(const std::vector<ModelPtr>& models, const Tensor& x);

/// Probability vector of any model for one draw.
Tensor probabilities(const Model& model, const Tensor& x, Rng& rng);

// ---------------------------------------------------------------------------
// Gradient adapters for obfuscated gradients.

/// Forward is the defended model; backward treats each non-differentiable
/// stage as `substitute` (identity by default).
ModelPtr wrap_bpda(std::shared_ptr<const TransformedModel> defended,
                   TransformPtr substitute = nullptr);

/// Forward is one draw of the randomized model; loss gradients average k
/// independent draws. The seed is mixed into every call's draws.
ModelPtr wrap_eot(ModelPtr randomized, std::size_t k_samples, std::uint64_t seed);

}  // namespace advbench
