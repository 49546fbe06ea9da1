#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "advbench/rng.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

/// Output of an input transform together with its vector-Jacobian product.
struct TransformTrace {
  Tensor output;
  std::function<Tensor(const Tensor&)> vjp;
};

/// A preprocessing stage mapping [0,1]^d into [0,1]^d.
///
/// Non-differentiable stages (quantizers) report a zero vjp, which is the
/// true derivative almost everywhere; BPDA replaces it.
class InputTransform {
 public:
  virtual ~InputTransform() = default;
  virtual std::string name() const = 0;
  virtual bool stochastic() const { return false; }
  virtual bool differentiable() const = 0;
  virtual TransformTrace apply_traced(const Tensor& x, Rng& rng) const = 0;
  Tensor apply(const Tensor& x, Rng& rng) const { return apply_traced(x, rng).output; }
};

using TransformPtr = std::shared_ptr<const InputTransform>;

/// round(x * (2^bits - 1)) / (2^bits - 1); bits in [1, 8].
Tensor bit_depth_reduce(const Tensor& x, int bits);

/// Luminance-only JPEG round trip on every channel: 8-bit input
/// quantization, 8x8 orthonormal DCT, rounding against the IJG luminance
/// table scaled for `quality` (1..100), inverse DCT, 8-bit output.
/// Blocks at the border are padded by edge replication. For 8-bit inputs at
/// quality 100 the change per pixel is at most one gray level except for
/// rare blocks; continuous inputs pick up another half level from the
/// input quantization.
Tensor jpeg_like(const Tensor& x, int quality);

/// IJG quantization table for a quality in [1,100], row-major 8x8.
std::array<int, 64> jpeg_quant_table(int quality);

/// Parameters of one resize-and-pad draw on an s x s image.
struct ResizePad {
  std::size_t size = 0;  // rnd
  std::size_t top = 0;
  std::size_t left = 0;
};

/// Draws rnd uniformly from [ceil(0.9 s), s] and the pad offsets uniformly.
ResizePad sample_resize_pad(std::size_t s, Rng& rng);
/// Nearest-neighbour resize of every channel to rnd x rnd, then zero padding
/// back to s x s at (top, left).
Tensor resize_pad_apply(const Tensor& x, const ResizePad& p);
Tensor resize_pad_transpose(const Tensor& g, const ResizePad& p);
/// Spatial side length if x is (C,s,s) with s >= 2, else 0.
std::size_t square_side(const Shape& shape);

Tensor random_resize_pad(const Tensor& x, std::uint64_t seed);

class BitDepthTransform final : public InputTransform {
 public:
  explicit BitDepthTransform(int bits);
  std::string name() const override { return "bit_depth(" + std::to_string(bits_) + ")"; }
  bool differentiable() const override { return false; }
  TransformTrace apply_traced(const Tensor& x, Rng& rng) const override;

 private:
  int bits_;
};

class JpegTransform final : public InputTransform {
 public:
  explicit JpegTransform(int quality);
  std::string name() const override { return "jpeg(" + std::to_string(quality_) + ")"; }
  bool differentiable() const override { return false; }
  TransformTrace apply_traced(const Tensor& x, Rng& rng) const override;

 private:
  int quality_;
};

class ResizePadTransform final : public InputTransform {
 public:
  std::string name() const override { return "resize_pad"; }
  bool stochastic() const override { return true; }
  bool differentiable() const override { return true; }
  TransformTrace apply_traced(const Tensor& x, Rng& rng) const override;
};

}  // namespace advbench
