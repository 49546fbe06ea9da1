#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "advbench/data.hpp"
#include "advbench/model.hpp"
#include "advbench/threat.hpp"

namespace advbench {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  /// Gaussian input noise added to every training input (0 disables).
  double input_noise = 0.0;
  std::uint64_t seed = 0;
};

/// Inner attack of adversarial training: random start in the ball, then
/// `iters` projected sign/normalized-gradient steps of size alpha.
struct AdvTrainConfig {
  ThreatSpec spec;
  std::size_t attack_iters = 7;
  /// 0 selects 2.5 * eps / attack_iters.
  double alpha = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainResult {
  Classifier model;
  std::vector<EpochLog> log;
};

class Adam {
 public:
  explicit Adam(const std::vector<Tensor>& params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Minibatch Adam on cross-entropy. Throws TrainingError on a non-finite loss.
TrainResult train_classifier(Classifier init, const Dataset& train, const TrainConfig& cfg);

/// Same loop, but every minibatch is replaced by its in-ball adversarial
/// counterparts before the gradient step. eps == 0 is natural training.
TrainResult adversarial_train(Classifier init, const Dataset& train, const TrainConfig& cfg,
                              const AdvTrainConfig& adv);

/// Convenience: build `arch` for the dataset and run adversarial training.
TrainResult adversarial_train(const Dataset& train, const std::string& arch, const ThreatSpec& spec,
                              std::size_t attack_iters, double alpha, std::size_t epochs,
                              std::uint64_t seed);

/// Fraction of examples whose deterministic prediction equals the label.
double clean_accuracy(const Model& model, const Dataset& ds, std::uint64_t seed = 0);

}  // namespace advbench
