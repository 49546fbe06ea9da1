#include "advbench/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "advbench/errors.hpp"

namespace advbench {

Tensor bit_depth_reduce(const Tensor& x, int bits) {
  if (bits < 1 || bits > 8) throw InvalidInput("bit depth must be in [1,8]");
  const double levels = std::ldexp(1.0, bits) - 1.0;
  Tensor out = x;
  for (auto& v : out.data()) v = std::round(std::clamp(v, 0.0, 1.0) * levels) / levels;
  return out;
}

namespace {

constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// dct[u][x] = c(u) cos((2x+1) u pi / 16), orthonormal
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        b[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    return b;
  }();
  return basis;
}

void jpeg_block(std::array<double, 64>& blk, const std::array<int, 64>& table) {
  const auto& b = dct_basis();
  std::array<double, 64> tmp{}, coef{};
  // rows then columns
  for (int r = 0; r < 8; ++r)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * blk[r * 8 + x];
      tmp[r * 8 + u] = s;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      coef[v * 8 + u] = s;
    }
  for (int k = 0; k < 64; ++k) coef[k] = std::round(coef[k] / table[k]) * table[k];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * coef[v * 8 + u];
      tmp[y * 8 + u] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * tmp[y * 8 + u];
      blk[y * 8 + x] = s;
    }
}

}  // namespace

std::array<int, 64> jpeg_quant_table(int quality) {
  if (quality < 1 || quality > 100) throw InvalidInput("JPEG quality must be in [1,100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> t{};
  for (int k = 0; k < 64; ++k) t[k] = std::clamp((kLuminanceTable[k] * scale + 50) / 100, 1, 255);
  return t;
}

Tensor jpeg_like(const Tensor& x, int quality) {
  const auto table = jpeg_quant_table(quality);
  const auto& sh = x.shape();
  if (sh.size() != 3) throw InvalidInput("jpeg_like needs a (C,H,W) input");
  const std::size_t ch = sh[0], h = sh[1], w = sh[2];
  Tensor out = x;
  for (std::size_t c = 0; c < ch; ++c) {
    const double* src = x.data().data() + c * h * w;
    double* dst = out.data().data() + c * h * w;
    for (std::size_t by = 0; by < h; by += 8)
      for (std::size_t bx = 0; bx < w; bx += 8) {
        std::array<double, 64> blk{};
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t xx = 0; xx < 8; ++xx) {
            const std::size_t sy = std::min(by + y, h - 1), sx = std::min(bx + xx, w - 1);
            blk[y * 8 + xx] = std::round(std::clamp(src[sy * w + sx], 0.0, 1.0) * 255.0) - 128.0;
          }
        jpeg_block(blk, table);
        for (std::size_t y = 0; y < 8 && by + y < h; ++y)
          for (std::size_t xx = 0; xx < 8 && bx + xx < w; ++xx)
            dst[(by + y) * w + bx + xx] = std::clamp(std::round(blk[y * 8 + xx] + 128.0), 0.0, 255.0) / 255.0;
      }
  }
  return out;
}

std::size_t square_side(const Shape& shape) {
  if (shape.size() != 3 || shape[1] != shape[2] || shape[1] < 2) return 0;
  return shape[1];
}

ResizePad sample_resize_pad(std::size_t s, Rng& rng) {
  const auto lo = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(s) - 1e-9));
  std::uniform_int_distribution<std::size_t> size_d(lo, s);
  ResizePad p;
  p.size = size_d(rng);
  const std::size_t pad = s - p.size;
  std::uniform_int_distribution<std::size_t> off(0, pad);
  p.top = off(rng);
  p.left = off(rng);
  return p;
}

Tensor resize_pad_apply(const Tensor& x, const ResizePad& p) {
  const std::size_t s = square_side(x.shape());
  if (s == 0) return x;
  const std::size_t ch = x.shape()[0];
  Tensor out(x.shape(), 0.0);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < p.size; ++i)
      for (std::size_t j = 0; j < p.size; ++j) {
        const std::size_t si = i * s / p.size, sj = j * s / p.size;
        out[(c * s + p.top + i) * s + p.left + j] = x[(c * s + si) * s + sj];
      }
  return out;
}

Tensor resize_pad_transpose(const Tensor& g, const ResizePad& p) {
  const std::size_t s = square_side(g.shape());
  if (s == 0) return g;
  const std::size_t ch = g.shape()[0];
  Tensor out(g.shape(), 0.0);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 0; i < p.size; ++i)
      for (std::size_t j = 0; j < p.size; ++j) {
        const std::size_t si = i * s / p.size, sj = j * s / p.size;
        out[(c * s + si) * s + sj] += g[(c * s + p.top + i) * s + p.left + j];
      }
  return out;
}

Tensor random_resize_pad(const Tensor& x, std::uint64_t seed) {
  const std::size_t s = square_side(x.shape());
  if (s == 0) return x;
  Rng rng(seed);
  return resize_pad_apply(x, sample_resize_pad(s, rng));
}

BitDepthTransform::BitDepthTransform(int bits) : bits_(bits) {
  if (bits < 1 || bits > 8) throw InvalidInput("bit depth must be in [1,8]");
}

TransformTrace BitDepthTransform::apply_traced(const Tensor& x, Rng&) const {
  return {bit_depth_reduce(x, bits_), [](const Tensor& g) { return Tensor(g.shape(), 0.0); }};
}

JpegTransform::JpegTransform(int quality) : quality_(quality) {
  if (quality < 1 || quality > 100) throw InvalidInput("JPEG quality must be in [1,100]");
}

TransformTrace JpegTransform::apply_traced(const Tensor& x, Rng&) const {
  return {jpeg_like(x, quality_), [](const Tensor& g) { return Tensor(g.shape(), 0.0); }};
}

TransformTrace ResizePadTransform::apply_traced(const Tensor& x, Rng& rng) const {
  const std::size_t s = square_side(x.shape());
  if (s == 0) return {x, [](const Tensor& g) { return g; }};
  const ResizePad p = sample_resize_pad(s, rng);
  return {resize_pad_apply(x, p), [p](const Tensor& g) { return resize_pad_transpose(g, p); }};
}

}  // namespace advbench
