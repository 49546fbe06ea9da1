#include "advbench/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/errors.hpp"

namespace advbench {

namespace {

// log of the mean of softmax(z_j), computed from per-draw log-softmaxes
Tensor log_mean_softmax(const std::vector<Tensor>& log_probs) {
  const std::size_t L = log_probs.front().size();
  const double log_k = std::log(static_cast<double>(log_probs.size()));
  Tensor out(Shape{L});
  std::vector<double> col(log_probs.size());
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < log_probs.size(); ++j) col[j] = log_probs[j][i];
    out[i] = log_sum_exp(col) - log_k;
  }
  return out;
}

// Cotangent on each draw's logits given a cotangent on log-mean-softmax.
Tensor draw_cotangent(const Tensor& log_prob_j, const Tensor& mixed, double log_k, const Tensor& cot) {
  const std::size_t L = cot.size();
  Tensor a(Shape{L});
  double total = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    const double w = std::exp(log_prob_j[i] - log_k - mixed[i]);
    a[i] = cot[i] * w;
    total += a[i];
  }
  Tensor dz(Shape{L});
  for (std::size_t i = 0; i < L; ++i) dz[i] = a[i] - std::exp(log_prob_j[i]) * total;
  return dz;
}

}  // namespace

Tensor probabilities(const Model& model, const Tensor& x, Rng& rng) {
  return softmax(model.logits(x, rng));
}

// ---------------------------------------------------------------------------

TransformedModel::TransformedModel(ModelPtr base, std::vector<TransformPtr> pipeline)
    : base_(std::move(base)), pipeline_(std::move(pipeline)) {
  if (!base_) throw InvalidInput("transformed model needs a base");
}

bool TransformedModel::stochastic() const {
  return base_->stochastic() ||
         std::any_of(pipeline_.begin(), pipeline_.end(), [](const auto& t) { return t->stochastic(); });
}

Tensor TransformedModel::logits(const Tensor& x, Rng& rng) const {
  check_input(x);
  Tensor cur = x;
  for (const auto& t : pipeline_) cur = t->apply(cur, rng);
  return base_->logits(cur, rng);
}

Trace TransformedModel::trace(const Tensor& x, Rng& rng) const {
  check_input(x);
  std::vector<std::function<Tensor(const Tensor&)>> vjps;
  Tensor cur = x;
  for (const auto& t : pipeline_) {
    auto tr = t->apply_traced(cur, rng);
    cur = std::move(tr.output);
    vjps.push_back(std::move(tr.vjp));
  }
  Trace inner = base_->trace(cur, rng);
  Trace out;
  out.logits = inner.logits;
  out.backward = [vjps = std::move(vjps), back = std::move(inner.backward)](const Tensor& cot) {
    Tensor g = back(cot);
    for (auto it = vjps.rbegin(); it != vjps.rend(); ++it) g = (*it)(g);
    return g;
  };
  return out;
}

Trace TransformedModel::trace_bpda(const Tensor& x, Rng& rng, const InputTransform* substitute) const {
  check_input(x);
  std::vector<std::function<Tensor(const Tensor&)>> vjps;
  Tensor cur = x;
  for (const auto& t : pipeline_) {
    auto tr = t->apply_traced(cur, rng);
    if (!t->differentiable()) {
      if (substitute) {
        // the substitute only supplies a Jacobian; it is evaluated at the stage input
        Rng sub_rng(0);
        tr.vjp = substitute->apply_traced(cur, sub_rng).vjp;
      } else {
        tr.vjp = [](const Tensor& g) { return g; };
      }
    }
    cur = std::move(tr.output);
    vjps.push_back(std::move(tr.vjp));
  }
  Trace inner = base_->trace(cur, rng);
  Trace out;
  out.logits = inner.logits;
  out.backward = [vjps = std::move(vjps), back = std::move(inner.backward)](const Tensor& cot) {
    Tensor g = back(cot);
    for (auto it = vjps.rbegin(); it != vjps.rend(); ++it) g = (*it)(g);
    return g;
  };
  return out;
}

// ---------------------------------------------------------------------------

NoiseEnsembleModel::NoiseEnsembleModel(ModelPtr base, double sigma, std::size_t k)
    : base_(std::move(base)), sigma_(sigma), k_(k) {
  if (!base_) throw InvalidInput("noise ensemble needs a base");
  if (k_ < 1) throw InvalidInput("noise ensemble needs k >= 1");
  if (!(sigma_ >= 0.0)) throw InvalidInput("noise sigma must be nonnegative");
}

Tensor NoiseEnsembleModel::logits(const Tensor& x, Rng& rng) const {
  check_input(x);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Tensor> lps;
  lps.reserve(k_);
  for (std::size_t j = 0; j < k_; ++j) {
    Tensor xn = x;
    if (sigma_ > 0.0)
      for (auto& v : xn.data()) v += sigma_ * nd(rng);
    lps.push_back(log_softmax(base_->logits(xn, rng)));
  }
  return log_mean_softmax(lps);
}

Trace NoiseEnsembleModel::trace(const Tensor& x, Rng& rng) const {
  check_input(x);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Tensor> lps;
  std::vector<std::function<Tensor(const Tensor&)>> backs;
  for (std::size_t j = 0; j < k_; ++j) {
    Tensor xn = x;
    if (sigma_ > 0.0)
      for (auto& v : xn.data()) v += sigma_ * nd(rng);
    Trace t = base_->trace(xn, rng);
    lps.push_back(log_softmax(t.logits));
    backs.push_back(std::move(t.backward));
  }
  Trace out;
  out.logits = log_mean_softmax(lps);
  const double log_k = std::log(static_cast<double>(k_));
  out.backward = [lps = std::move(lps), backs = std::move(backs), mixed = out.logits, log_k,
                  shape = x.shape()](const Tensor& cot) {
    Tensor g(shape, 0.0);
    for (std::size_t j = 0; j < lps.size(); ++j) g += backs[j](draw_cotangent(lps[j], mixed, log_k, cot));
    return g;
  };
  return out;
}

// ---------------------------------------------------------------------------

EnsembleModel::EnsembleModel(std::vector<ModelPtr> members) : members_(std::move(members)) {
  if (members_.empty()) throw ConfigError("ensemble needs at least one member");
  for (const auto& m : members_) {
    if (m->num_classes() != members_.front()->num_classes())
      throw ConfigError("ensemble members disagree on the number of classes");
    if (m->input_shape() != members_.front()->input_shape())
      throw ConfigError("ensemble members disagree on the input shape");
  }
}

bool EnsembleModel::stochastic() const {
  return std::any_of(members_.begin(), members_.end(), [](const auto& m) { return m->stochastic(); });
}

Tensor EnsembleModel::logits(const Tensor& x, Rng& rng) const {
  check_input(x);
  std::vector<Tensor> lps;
  for (const auto& m : members_) lps.push_back(log_softmax(m->logits(x, rng)));
  return log_mean_softmax(lps);
}

Trace EnsembleModel::trace(const Tensor& x, Rng& rng) const {
  check_input(x);
  std::vector<Tensor> lps;
  std::vector<std::function<Tensor(const Tensor&)>> backs;
  for (const auto& m : members_) {
    Trace t = m->trace(x, rng);
    lps.push_back(log_softmax(t.logits));
    backs.push_back(std::move(t.backward));
  }
  Trace out;
  out.logits = log_mean_softmax(lps);
  const double log_k = std::log(static_cast<double>(members_.size()));
  out.backward = [lps = std::move(lps), backs = std::move(backs), mixed = out.logits, log_k,
                  shape = x.shape()](const Tensor& cot) {
    Tensor g(shape, 0.0);
    for (std::size_t j = 0; j < lps.size(); ++j) g += backs[j](draw_cotangent(lps[j], mixed, log_k, cot));
    return g;
  };
  return out;
}

Tensor noise_ensemble_forward(const Model& model, const Tensor& x, double sigma_n, std::size_t k,
                              std::uint64_t seed) {
  // non-owning view of the caller's model
  ModelPtr view(std::shared_ptr<const Model>(), &model);
  NoiseEnsembleModel ens(view, sigma_n, k);
  Rng rng(seed);
  return softmax(ens.logits(x, rng));
}

Tensor ensemble_mean(const std::vector<ModelPtr>& models, const Tensor& x) {
  EnsembleModel ens(models);
  Rng rng(0);
  return softmax(ens.logits(x, rng));
}

// ---------------------------------------------------------------------------

namespace {

class BpdaModel final : public Model {
 public:
  BpdaModel(std::shared_ptr<const TransformedModel> defended, TransformPtr substitute)
      : defended_(std::move(defended)), substitute_(std::move(substitute)) {}

  const Shape& input_shape() const override { return defended_->input_shape(); }
  std::size_t num_classes() const override { return defended_->num_classes(); }
  bool stochastic() const override { return defended_->stochastic(); }
  Tensor logits(const Tensor& x, Rng& rng) const override { return defended_->logits(x, rng); }
  Trace trace(const Tensor& x, Rng& rng) const override {
    return defended_->trace_bpda(x, rng, substitute_.get());
  }

 private:
  std::shared_ptr<const TransformedModel> defended_;
  TransformPtr substitute_;
};

class EotModel final : public Model {
 public:
  EotModel(ModelPtr inner, std::size_t k, std::uint64_t seed)
      : inner_(std::move(inner)), k_(k), seed_(seed) {
    if (k_ < 1) throw InvalidInput("EOT needs k_samples >= 1");
  }

  const Shape& input_shape() const override { return inner_->input_shape(); }
  std::size_t num_classes() const override { return inner_->num_classes(); }
  bool stochastic() const override { return inner_->stochastic(); }
  Tensor logits(const Tensor& x, Rng& rng) const override { return inner_->logits(x, rng); }

  Trace trace(const Tensor& x, Rng& rng) const override {
    Rng draws(derive_seed(seed_, rng()));
    Trace first = inner_->trace(x, draws);
    if (!inner_->stochastic() || k_ == 1) return first;
    auto backs = std::make_shared<std::vector<std::function<Tensor(const Tensor&)>>>();
    backs->push_back(std::move(first.backward));
    for (std::size_t j = 1; j < k_; ++j) backs->push_back(inner_->trace(x, draws).backward);
    Trace out;
    out.logits = std::move(first.logits);
    out.backward = [backs, shape = x.shape()](const Tensor& cot) {
      Tensor g(shape, 0.0);
      for (const auto& b : *backs) g += b(cot);
      g *= 1.0 / static_cast<double>(backs->size());
      return g;
    };
    return out;
  }

  LossGrad loss_grad(const Tensor& x, const Objective& obj, Rng& rng) const override {
    Rng draws(derive_seed(seed_, rng()));
    LossGrad acc = inner_->loss_grad(x, obj, draws);
    if (!inner_->stochastic()) return acc;
    for (std::size_t j = 1; j < k_; ++j) {
      LossGrad g = inner_->loss_grad(x, obj, draws);
      acc.value += g.value;
      acc.grad += g.grad;
    }
    const double inv = 1.0 / static_cast<double>(k_);
    acc.value *= inv;
    acc.grad *= inv;
    return acc;
  }

 private:
  ModelPtr inner_;
  std::size_t k_;
  std::uint64_t seed_;
};

}  // namespace

ModelPtr wrap_bpda(std::shared_ptr<const TransformedModel> defended, TransformPtr substitute) {
  if (!defended) throw InvalidInput("wrap_bpda needs a defended model");
  return std::make_shared<BpdaModel>(std::move(defended), std::move(substitute));
}

ModelPtr wrap_eot(ModelPtr randomized, std::size_t k_samples, std::uint64_t seed) {
  if (!randomized) throw InvalidInput("wrap_eot needs a model");
  return std::make_shared<EotModel>(std::move(randomized), k_samples, seed);
}

}  // namespace advbench
