#include "advbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "advbench/errors.hpp"

namespace advbench {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw InvalidInput("tensor dimension must be positive: " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw InvalidInput("tensor dimension must be positive: " + shape_str(shape_));
  if (shape_size(shape_) != data_.size())
    throw InvalidInput("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
}

Tensor Tensor::vec(std::initializer_list<double> values) {
  return vec(std::vector<double>(values));
}

Tensor Tensor::vec(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor& Tensor::axpy(double s, const Tensor& other) {
  require_same_shape(*this, other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const Tensor& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0);
}

double norm_l1(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += std::abs(v);
  return acc;
}

double norm_l2(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v * v;
  return std::sqrt(acc);
}

double norm_linf(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

Tensor sign(const Tensor& t) {
  Tensor out = t;
  for (auto& v : out.data()) v = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return out;
}

Tensor clamp(Tensor t, double lo, double hi) {
  for (auto& v : t.data()) v = std::clamp(v, lo, hi);
  return t;
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

}  // namespace advbench
