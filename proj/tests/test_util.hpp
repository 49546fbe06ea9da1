#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "advbench/model.hpp"
#include "advbench/rng.hpp"

namespace advbench::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Tensor gaussian_tensor(const Shape& shape, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t(shape);
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

/// Single dense layer with logits W x + b.
inline Classifier linear_model(const std::vector<std::vector<double>>& W, const std::vector<double>& b) {
  const std::size_t out = W.size(), in = W.front().size();
  std::vector<double> w;
  for (const auto& row : W) w.insert(w.end(), row.begin(), row.end());
  return Classifier(Shape{in}, {DenseLayer{Tensor(Shape{out, in}, w), Tensor(Shape{out}, b)}});
}

/// Two classes with logits (0, w.x + b): class 1 iff w.x + b > 0, and the
/// decision boundary is the hyperplane w.x + b = 0.
inline Classifier binary_linear(const std::vector<double>& w, double b) {
  return linear_model({std::vector<double>(w.size(), 0.0), w}, {0.0, b});
}

inline double affine(const std::vector<double>& w, double b, const Tensor& x) {
  double s = b;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

inline double l1(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += std::abs(v);
  return s;
}

inline double l2(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v * v;
  return std::sqrt(s);
}

/// Random binary linear problem whose point x sits well inside the box and
/// at most `max_dist` (l2) from the boundary.
struct LinearCase {
  std::vector<double> w;
  double b = 0.0;
  Tensor x;
  std::size_t label = 0;
};

inline LinearCase random_linear_case(Rng& rng, std::size_t d, double max_dist = 0.1) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  std::uniform_real_distribution<double> ud(0.2 * max_dist, max_dist);
  LinearCase c;
  c.w.resize(d);
  for (auto& v : c.w) v = nd(rng);
  c.x = Tensor(Shape{d});
  for (auto& v : c.x.data()) v = u(rng);
  // shift b so that the signed distance is +-dist
  const double dist = ud(rng) * ((rng() & 1u) ? 1.0 : -1.0);
  double wx = 0;
  for (std::size_t i = 0; i < d; ++i) wx += c.w[i] * c.x[i];
  c.b = dist * l2(c.w) - wx;
  c.label = dist > 0 ? 1 : 0;
  return c;
}

/// Relative error with an absolute floor for values near zero.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace advbench::testing
