#include "advbench/training.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "advbench/errors.hpp"
#include "advbench/rng.hpp"

namespace advbench {

Adam::Adam(const std::vector<Tensor>& params, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {
  for (const auto& p : params) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw InvalidInput("adam: parameter count changed");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].values();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

Tensor inner_attack(const Classifier& model, const LabeledExample& ex, const AdvTrainConfig& adv,
                    double alpha, Rng& rng) {
  const ThreatSpec& spec = adv.spec;
  Tensor x = ex.input;
  // random start inside the ball
  if (spec.norm == Norm::linf) {
    std::uniform_real_distribution<double> u(-spec.eps, spec.eps);
    for (auto& v : x.data()) v += u(rng);
  } else {
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor dir(x.shape());
    for (auto& v : dir.data()) v = nd(rng);
    const double n = norm_l2(dir);
    const double r = spec.eps * std::pow(std::uniform_real_distribution<double>(0.0, 1.0)(rng),
                                         1.0 / static_cast<double>(x.size()));
    if (n > 0.0) x.axpy(r / n, dir);
  }
  x = project(x, ex.input, spec);
  for (std::size_t t = 0; t < adv.attack_iters; ++t) {
    Tensor g = grad_input(model, x, ex.label, LossKind::xent);
    if (spec.norm == Norm::linf) {
      x.axpy(alpha, sign(g));
    } else {
      const double n = norm_l2(g);
      if (n > 0.0) x.axpy(alpha / n, g);
    }
    x = project(x, ex.input, spec);
  }
  return x;
}

TrainResult run_training(Classifier model, const Dataset& train, const TrainConfig& cfg,
                         const AdvTrainConfig* adv) {
  if (train.examples.empty()) throw InvalidInput("training set is empty");
  if (cfg.batch_size == 0) throw InvalidInput("batch size must be positive");
  if (adv) validate(adv->spec);
  const bool attacking = adv && adv->spec.eps > 0.0 && adv->attack_iters > 0;
  const double alpha = !attacking ? 0.0
                       : adv->alpha > 0.0
                           ? adv->alpha
                           : 2.5 * adv->spec.eps / static_cast<double>(adv->attack_iters);

  Rng rng(derive_seed(cfg.seed, 0x7472u));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<Tensor> params = model.parameters();
  Adam opt(params, cfg.learning_rate);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{model, {}};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<LabeledExample> batch;
      batch.reserve(end - start);
      for (std::size_t b = start; b < end; ++b) {
        LabeledExample ex = train.examples[order[b]];
        if (cfg.input_noise > 0.0)
          for (auto& v : ex.input.data()) v += cfg.input_noise * nd(rng);
        if (attacking) ex.input = inner_attack(model, ex, *adv, alpha, rng);
        const Tensor z = model.forward(ex.input);
        loss_sum += loss_value(LossKind::xent, z, ex.label);
        if (argmax(z.values()) == ex.label) ++correct;
        batch.push_back(std::move(ex));
      }
      if (!std::isfinite(loss_sum)) throw TrainingError("training loss diverged", epoch);
      auto grads = grad_params(model, batch, LossKind::xent);
      opt.step(params, grads);
      for (const auto& p : params)
        if (!p.all_finite()) throw TrainingError("training parameters diverged", epoch);
      model.set_parameters(params);
    }
    result.log.push_back({epoch, loss_sum / static_cast<double>(order.size()),
                          static_cast<double>(correct) / static_cast<double>(order.size())});
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train_classifier(Classifier init, const Dataset& train, const TrainConfig& cfg) {
  return run_training(std::move(init), train, cfg, nullptr);
}

TrainResult adversarial_train(Classifier init, const Dataset& train, const TrainConfig& cfg,
                              const AdvTrainConfig& adv) {
  return run_training(std::move(init), train, cfg, &adv);
}

TrainResult adversarial_train(const Dataset& train, const std::string& arch, const ThreatSpec& spec,
                              std::size_t attack_iters, double alpha, std::size_t epochs,
                              std::uint64_t seed) {
  Classifier init = make_classifier(arch, train.input_shape, train.num_classes, derive_seed(seed, 1));
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = seed;
  AdvTrainConfig adv{spec, attack_iters, alpha};
  return adversarial_train(std::move(init), train, cfg, adv);
}

double clean_accuracy(const Model& model, const Dataset& ds, std::uint64_t seed) {
  if (ds.examples.empty()) throw InvalidInput("dataset is empty");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    if (model.predict(ds.examples[i].input, rng) == ds.examples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace advbench
