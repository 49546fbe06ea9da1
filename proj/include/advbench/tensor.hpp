#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace advbench {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the shape; constructors
/// reject anything else. Values are plain doubles; operations that can
/// introduce non-finite values (model forward, losses) check explicitly.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  /// 1-D tensor from a literal list.
  static Tensor vec(std::initializer_list<double> values);
  static Tensor vec(std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  /// this += s * other
  Tensor& axpy(double s, const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);

/// Throws InvalidInput unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
double norm_l1(const Tensor& t);
double norm_l2(const Tensor& t);
double norm_linf(const Tensor& t);

/// Elementwise sign with sign(0) == 0.
Tensor sign(const Tensor& t);
Tensor clamp(Tensor t, double lo, double hi);
/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace advbench
