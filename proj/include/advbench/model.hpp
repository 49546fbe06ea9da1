#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advbench/example.hpp"
#include "advbench/loss.hpp"
#include "advbench/rng.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

/// Logits of one evaluation plus a closure mapping a logit cotangent to the
/// input gradient through the same evaluation (same random draw, if any).
struct Trace {
  Tensor logits;
  std::function<Tensor(const Tensor&)> backward;
};

struct LossGrad {
  double value = 0.0;
  Tensor grad;
  Tensor logits;
};

/// Anything that maps an input to L logits and can differentiate through
/// itself. Defended models, BPDA/EOT views and plain classifiers all
/// implement this; attacks only ever see this interface.
///
/// Stochastic models draw from the caller's `rng`; deterministic ones
/// ignore it. Implementations are immutable and safe to share.
class Model {
 public:
  virtual ~Model() = default;

  virtual const Shape& input_shape() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual bool stochastic() const { return false; }

  virtual Tensor logits(const Tensor& x, Rng& rng) const = 0;
  virtual Trace trace(const Tensor& x, Rng& rng) const = 0;

  /// Value and input gradient of `obj` at x. The default goes through
  /// trace(); EOT overrides it to average over draws.
  virtual LossGrad loss_grad(const Tensor& x, const Objective& obj, Rng& rng) const;

  std::size_t predict(const Tensor& x, Rng& rng) const;

 protected:
  void check_input(const Tensor& x) const;
};

using ModelPtr = std::shared_ptr<const Model>;

struct DenseLayer {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
};

/// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
struct Conv3x3Layer {
  Tensor kernel;  // (out_channels, in_channels, 3, 3)
  Tensor bias;    // (out_channels)
};

struct ReluLayer {};
struct FlattenLayer {};
/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
struct AvgPool2Layer {};

using Layer = std::variant<DenseLayer, Conv3x3Layer, ReluLayer, FlattenLayer, AvgPool2Layer>;

std::string layer_name(const Layer& layer);
Shape layer_output_shape(const Layer& layer, const Shape& in);

/// Feed-forward layer stack. Shapes are checked once at construction.
class Classifier final : public Model {
 public:
  Classifier(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const override { return input_shape_; }
  std::size_t num_classes() const override { return num_classes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Tensor forward(const Tensor& x) const;
  using Model::predict;
  std::size_t predict(const Tensor& x) const;

  Tensor logits(const Tensor& x, Rng&) const override { return forward(x); }
  Trace trace(const Tensor& x, Rng&) const override;

  /// Activations of every layer; front() is the input, back() the logits.
  std::vector<Tensor> activations(const Tensor& x) const;
  /// Input gradient for a logit cotangent, given stored activations.
  Tensor backward_input(const std::vector<Tensor>& acts, const Tensor& dlogits) const;
  /// Accumulates parameter gradients (same order as parameters()) and
  /// returns the input gradient.
  Tensor backward_all(const std::vector<Tensor>& acts, const Tensor& dlogits,
                      std::vector<Tensor>& param_grads) const;

  /// Weight and bias of every parametric layer, in layer order.
  std::vector<Tensor> parameters() const;
  void set_parameters(const std::vector<Tensor>& params);
  std::size_t parameter_count() const;

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;  // shapes_[i] is the input shape of layer i
  std::size_t num_classes_ = 0;
};

double loss_xent(const Classifier& model, const Tensor& x, std::size_t y);
double loss_margin(const Classifier& model, const Tensor& x, std::size_t y);

/// Exact reverse-mode d loss / d x.
Tensor grad_input(const Model& model, const Tensor& x, std::size_t y, LossKind kind);

/// Mean parameter gradient over a nonempty batch, ordered like parameters().
std::vector<Tensor> grad_params(const Classifier& model, std::span<const LabeledExample> batch,
                                LossKind kind);

/// Builds a freshly initialized classifier from an architecture string:
///   "linear"            single dense layer
///   "mlp:H1[,H2...]"    dense+relu hidden layers
///   "lenet"             conv(8)-relu-pool-conv(16)-relu-pool-dense(64)-relu-dense
/// Weights are He-normal from `seed`, biases zero.
Classifier make_classifier(const std::string& arch, const Shape& input_shape,
                           std::size_t num_classes, std::uint64_t seed);

}  // namespace advbench
