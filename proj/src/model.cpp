#include "advbench/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advbench/errors.hpp"

namespace advbench {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// ---------------------------------------------------------------------------
// Model

LossGrad Model::loss_grad(const Tensor& x, const Objective& obj, Rng& rng) const {
  Trace t = trace(x, rng);
  LossGrad out;
  out.value = objective_value(obj, t.logits);
  Tensor dlogits = loss_logit_grad(obj.kind, t.logits, obj.label);
  dlogits *= obj.scale;
  out.grad = t.backward(dlogits);
  out.logits = std::move(t.logits);
  return out;
}

std::size_t Model::predict(const Tensor& x, Rng& rng) const {
  return argmax(logits(x, rng).data());
}

void Model::check_input(const Tensor& x) const {
  if (x.shape() != input_shape())
    throw InvalidInput("input shape " + shape_str(x.shape()) + " does not match model input " +
                       shape_str(input_shape()));
}

// ---------------------------------------------------------------------------
// Layers

std::string layer_name(const Layer& layer) {
  return std::visit(overloaded{[](const DenseLayer&) { return std::string("dense"); },
                               [](const Conv3x3Layer&) { return std::string("conv3x3"); },
                               [](const ReluLayer&) { return std::string("relu"); },
                               [](const FlattenLayer&) { return std::string("flatten"); },
                               [](const AvgPool2Layer&) { return std::string("avgpool2"); }},
                    layer);
}

Shape layer_output_shape(const Layer& layer, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw InvalidInput(layer_name(layer) + " layer cannot take input " + shape_str(in) + ": " +
                       why);
  };
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) -> Shape {
            if (d.weight.shape().size() != 2 || d.bias.shape() != Shape{d.weight.shape()[0]})
              return fail("malformed weight/bias");
            if (in.size() != 1 || in[0] != d.weight.shape()[1]) return fail("expects a vector");
            return Shape{d.weight.shape()[0]};
          },
          [&](const Conv3x3Layer& c) -> Shape {
            const auto& k = c.kernel.shape();
            if (k.size() != 4 || k[2] != 3 || k[3] != 3 || c.bias.shape() != Shape{k[0]})
              return fail("malformed kernel/bias");
            if (in.size() != 3 || in[0] != k[1]) return fail("expects (C,H,W) matching kernel");
            return Shape{k[0], in[1], in[2]};
          },
          [&](const ReluLayer&) -> Shape { return in; },
          [&](const FlattenLayer&) -> Shape { return Shape{shape_size(in)}; },
          [&](const AvgPool2Layer&) -> Shape {
            if (in.size() != 3 || in[1] < 2 || in[2] < 2) return fail("expects (C,H,W), H,W>=2");
            return Shape{in[0], in[1] / 2, in[2] / 2};
          }},
      layer);
}

namespace {

Tensor dense_forward(const DenseLayer& d, const Tensor& in) {
  const auto rows = d.weight.shape()[0], cols = d.weight.shape()[1];
  Tensor out = d.bias;
  const auto w = d.weight.data();
  const auto x = in.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = w.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
  return out;
}

Tensor conv_forward(const Conv3x3Layer& c, const Tensor& in) {
  const auto& k = c.kernel.shape();
  const std::size_t oc = k[0], ic = k[1], h = in.shape()[1], w = in.shape()[2];
  Tensor out(Shape{oc, h, w});
  const auto kd = c.kernel.data();
  const auto xd = in.data();
  auto od = out.data();
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = c.bias[o];
        for (std::size_t ch = 0; ch < ic; ++ch) {
          const double* ker = kd.data() + (o * ic + ch) * 9;
          const double* img = xd.data() + ch * h * w;
          for (int di = -1; di <= 1; ++di) {
            const long ii = static_cast<long>(i) + di;
            if (ii < 0 || ii >= static_cast<long>(h)) continue;
            for (int dj = -1; dj <= 1; ++dj) {
              const long jj = static_cast<long>(j) + dj;
              if (jj < 0 || jj >= static_cast<long>(w)) continue;
              acc += ker[(di + 1) * 3 + (dj + 1)] * img[ii * w + jj];
            }
          }
        }
        od[(o * h + i) * w + j] = acc;
      }
    }
  }
  return out;
}

Tensor pool_forward(const Tensor& in) {
  const std::size_t ch = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out(Shape{ch, oh, ow});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t base = (c * h + 2 * i) * w + 2 * j;
        out[(c * oh + i) * ow + j] =
            0.25 * (in[base] + in[base + 1] + in[base + w] + in[base + w + 1]);
      }
  return out;
}

Tensor layer_forward(const Layer& layer, const Tensor& in, const Shape& out_shape) {
  return std::visit(overloaded{[&](const DenseLayer& d) { return dense_forward(d, in); },
                               [&](const Conv3x3Layer& c) { return conv_forward(c, in); },
                               [&](const ReluLayer&) {
                                 Tensor out = in;
                                 for (auto& v : out.data()) v = std::max(v, 0.0);
                                 return out;
                               },
                               [&](const FlattenLayer&) { return in.reshaped(out_shape); },
                               [&](const AvgPool2Layer&) { return pool_forward(in); }},
                    layer);
}

// Backward of one layer. `pw`/`pb` receive parameter gradients when non-null.
Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& dout, Tensor* pw,
                      Tensor* pb) {
  return std::visit(
      overloaded{
          [&](const DenseLayer& d) {
            const auto rows = d.weight.shape()[0], cols = d.weight.shape()[1];
            Tensor din(in.shape(), 0.0);
            const auto w = d.weight.data();
            for (std::size_t r = 0; r < rows; ++r) {
              const double g = dout[r];
              if (g == 0.0) continue;
              const double* row = w.data() + r * cols;
              for (std::size_t c = 0; c < cols; ++c) din[c] += g * row[c];
            }
            if (pw) {
              auto gw = pw->data();
              for (std::size_t r = 0; r < rows; ++r) {
                const double g = dout[r];
                if (g == 0.0) continue;
                for (std::size_t c = 0; c < cols; ++c) gw[r * cols + c] += g * in[c];
              }
              *pb += dout;
            }
            return din;
          },
          [&](const Conv3x3Layer& c) {
            const auto& k = c.kernel.shape();
            const std::size_t oc = k[0], ic = k[1], h = in.shape()[1], w = in.shape()[2];
            Tensor din(in.shape(), 0.0);
            const auto kd = c.kernel.data();
            for (std::size_t o = 0; o < oc; ++o) {
              for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                  const double g = dout[(o * h + i) * w + j];
                  if (g == 0.0) continue;
                  if (pb) (*pb)[o] += g;
                  for (std::size_t ch = 0; ch < ic; ++ch) {
                    const std::size_t kbase = (o * ic + ch) * 9;
                    const std::size_t ibase = ch * h * w;
                    for (int di = -1; di <= 1; ++di) {
                      const long ii = static_cast<long>(i) + di;
                      if (ii < 0 || ii >= static_cast<long>(h)) continue;
                      for (int dj = -1; dj <= 1; ++dj) {
                        const long jj = static_cast<long>(j) + dj;
                        if (jj < 0 || jj >= static_cast<long>(w)) continue;
                        const std::size_t kk = kbase + (di + 1) * 3 + (dj + 1);
                        const std::size_t xi = ibase + ii * w + jj;
                        din[xi] += g * kd[kk];
                        if (pw) (*pw)[kk] += g * in[xi];
                      }
                    }
                  }
                }
              }
            }
            return din;
          },
          [&](const ReluLayer&) {
            Tensor din = dout;
            for (std::size_t i = 0; i < din.size(); ++i)
              if (in[i] <= 0.0) din[i] = 0.0;
            return din;
          },
          [&](const FlattenLayer&) { return dout.reshaped(in.shape()); },
          [&](const AvgPool2Layer&) {
            const std::size_t ch = in.shape()[0], h = in.shape()[1], w = in.shape()[2];
            const std::size_t oh = h / 2, ow = w / 2;
            Tensor din(in.shape(), 0.0);
            for (std::size_t c = 0; c < ch; ++c)
              for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                  const double g = 0.25 * dout[(c * oh + i) * ow + j];
                  const std::size_t base = (c * h + 2 * i) * w + 2 * j;
                  din[base] += g;
                  din[base + 1] += g;
                  din[base + w] += g;
                  din[base + w + 1] += g;
                }
            return din;
          }},
      layer);
}

const Tensor* layer_weight(const Layer& l) {
  if (auto* d = std::get_if<DenseLayer>(&l)) return &d->weight;
  if (auto* c = std::get_if<Conv3x3Layer>(&l)) return &c->kernel;
  return nullptr;
}

const Tensor* layer_bias(const Layer& l) {
  if (auto* d = std::get_if<DenseLayer>(&l)) return &d->bias;
  if (auto* c = std::get_if<Conv3x3Layer>(&l)) return &c->bias;
  return nullptr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidInput("classifier needs at least one layer");
  if (input_shape_.empty() || shape_size(input_shape_) == 0)
    throw InvalidInput("classifier input shape must be nonempty");
  Shape s = input_shape_;
  for (const auto& l : layers_) {
    shapes_.push_back(s);
    s = layer_output_shape(l, s);
  }
  if (s.size() != 1 || s[0] < 2)
    throw InvalidInput("classifier must output a logit vector of length >= 2, got " +
                       shape_str(s));
  num_classes_ = s[0];
}

std::vector<Tensor> Classifier::activations(const Tensor& x) const {
  check_input(x);
  std::vector<Tensor> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(x);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape out_shape =
        i + 1 < shapes_.size() ? shapes_[i + 1] : Shape{num_classes_};
    acts.push_back(layer_forward(layers_[i], acts.back(), out_shape));
  }
  require_finite(acts.back(), "classifier forward");
  return acts;
}

Tensor Classifier::forward(const Tensor& x) const {
  check_input(x);
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape out_shape = i + 1 < shapes_.size() ? shapes_[i + 1] : Shape{num_classes_};
    cur = layer_forward(layers_[i], cur, out_shape);
  }
  require_finite(cur, "classifier forward");
  return cur;
}

std::size_t Classifier::predict(const Tensor& x) const { return argmax(forward(x).data()); }

Trace Classifier::trace(const Tensor& x, Rng&) const {
  auto acts = std::make_shared<std::vector<Tensor>>(activations(x));
  Trace t;
  t.logits = acts->back();
  t.backward = [this, acts](const Tensor& dlogits) { return backward_input(*acts, dlogits); };
  return t;
}

Tensor Classifier::backward_input(const std::vector<Tensor>& acts, const Tensor& dlogits) const {
  if (dlogits.size() != num_classes_) throw InvalidInput("logit cotangent has wrong length");
  Tensor g = dlogits.reshaped(Shape{num_classes_});
  for (std::size_t i = layers_.size(); i-- > 0;)
    g = layer_backward(layers_[i], acts[i], g, nullptr, nullptr);
  return g;
}

Tensor Classifier::backward_all(const std::vector<Tensor>& acts, const Tensor& dlogits,
                                std::vector<Tensor>& param_grads) const {
  if (param_grads.empty()) {
    for (auto& p : parameters()) param_grads.emplace_back(p.shape(), 0.0);
  }
  // parameter slots in layer order: (w, b) per parametric layer
  std::vector<std::size_t> slot(layers_.size(), 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    slot[i] = next;
    if (layer_weight(layers_[i])) next += 2;
  }
  Tensor g = dlogits.reshaped(Shape{num_classes_});
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Tensor* pw = nullptr;
    Tensor* pb = nullptr;
    if (layer_weight(layers_[i])) {
      pw = &param_grads[slot[i]];
      pb = &param_grads[slot[i] + 1];
    }
    g = layer_backward(layers_[i], acts[i], g, pw, pb);
  }
  return g;
}

std::vector<Tensor> Classifier::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    if (const Tensor* w = layer_weight(l)) {
      out.push_back(*w);
      out.push_back(*layer_bias(l));
    }
  }
  return out;
}

void Classifier::set_parameters(const std::vector<Tensor>& params) {
  std::size_t k = 0;
  for (auto& l : layers_) {
    auto assign = [&](Tensor& w, Tensor& b) {
      if (k + 1 >= params.size())
        throw InvalidInput("parameter list too short");
      require_same_shape(w, params[k], "set_parameters");
      require_same_shape(b, params[k + 1], "set_parameters");
      w = params[k];
      b = params[k + 1];
      k += 2;
    };
    if (auto* d = std::get_if<DenseLayer>(&l)) assign(d->weight, d->bias);
    if (auto* c = std::get_if<Conv3x3Layer>(&l)) assign(c->kernel, c->bias);
  }
  if (k != params.size()) throw InvalidInput("parameter list length mismatch");
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

// ---------------------------------------------------------------------------
// Free functions

double loss_xent(const Classifier& model, const Tensor& x, std::size_t y) {
  return loss_value(LossKind::xent, model.forward(x), y);
}

double loss_margin(const Classifier& model, const Tensor& x, std::size_t y) {
  return loss_value(LossKind::margin, model.forward(x), y);
}

Tensor grad_input(const Model& model, const Tensor& x, std::size_t y, LossKind kind) {
  Rng rng(0);
  return model.loss_grad(x, Objective{kind, y, 1.0}, rng).grad;
}

std::vector<Tensor> grad_params(const Classifier& model, std::span<const LabeledExample> batch,
                                LossKind kind) {
  if (batch.empty()) throw InvalidInput("grad_params needs a nonempty batch");
  std::vector<Tensor> grads;
  for (auto& p : model.parameters()) grads.emplace_back(p.shape(), 0.0);
  for (const auto& ex : batch) {
    auto acts = model.activations(ex.input);
    Tensor dlogits = loss_logit_grad(kind, acts.back(), ex.label);
    model.backward_all(acts, dlogits, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads) g *= inv;
  return grads;
}

// ---------------------------------------------------------------------------
// Architectures

namespace {

DenseLayer he_dense(std::size_t in, std::size_t out, Rng& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in)));
  DenseLayer d{Tensor(Shape{out, in}), Tensor(Shape{out}, 0.0)};
  for (auto& v : d.weight.data()) v = nd(rng);
  return d;
}

Conv3x3Layer he_conv(std::size_t in_c, std::size_t out_c, Rng& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in_c * 9)));
  Conv3x3Layer c{Tensor(Shape{out_c, in_c, 3, 3}), Tensor(Shape{out_c}, 0.0)};
  for (auto& v : c.kernel.data()) v = nd(rng);
  return c;
}

}  // namespace

Classifier make_classifier(const std::string& arch, const Shape& input_shape,
                           std::size_t num_classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Layer> layers;
  const std::size_t d = shape_size(input_shape);
  auto flatten_if_needed = [&] {
    if (input_shape.size() != 1) layers.emplace_back(FlattenLayer{});
  };
  if (arch == "linear") {
    flatten_if_needed();
    layers.emplace_back(he_dense(d, num_classes, rng));
  } else if (arch.rfind("mlp:", 0) == 0) {
    flatten_if_needed();
    std::stringstream ss(arch.substr(4));
    std::string tok;
    std::size_t prev = d;
    while (std::getline(ss, tok, ',')) {
      std::size_t h = 0;
      try {
        h = std::stoul(tok);
      } catch (const std::exception&) {
        throw InvalidInput("bad hidden width in architecture '" + arch + "'");
      }
      if (h == 0) throw InvalidInput("hidden width must be positive in '" + arch + "'");
      layers.emplace_back(he_dense(prev, h, rng));
      layers.emplace_back(ReluLayer{});
      prev = h;
    }
    layers.emplace_back(he_dense(prev, num_classes, rng));
  } else if (arch == "lenet") {
    if (input_shape.size() != 3) throw InvalidInput("lenet needs a (C,H,W) input");
    const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h < 4 || w < 4) throw InvalidInput("lenet needs spatial size >= 4");
    layers.emplace_back(he_conv(c, 8, rng));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(AvgPool2Layer{});
    layers.emplace_back(he_conv(8, 16, rng));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(AvgPool2Layer{});
    layers.emplace_back(FlattenLayer{});
    layers.emplace_back(he_dense(16 * (h / 2 / 2) * (w / 2 / 2), 64, rng));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(he_dense(64, num_classes, rng));
  } else {
    throw InvalidInput("unknown architecture '" + arch + "'");
  }
  return Classifier(input_shape, std::move(layers));
}

}  // namespace advbench
