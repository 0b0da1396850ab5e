#pragma once

// Image values, arithmetic, quality metrics and noise synthesis.
//
// Layout is planar: data[(c * height + y) * width + x]. Intensities are held
// as double in memory; file and wire formats carry 32-bit floats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vista/error.hpp"

namespace vista {

struct Dims {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t size() const noexcept { return height * width * channels; }
  bool square() const noexcept { return height == width; }
  friend bool operator==(const Dims&, const Dims&) = default;

  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

inline void validate_dims(const Dims& d) {
  if (d.height < 1 || d.width < 1)
    throw DimensionError("image dims must be positive, got " + d.str());
  if (d.channels != 1 && d.channels != 3)
    throw DimensionError("image must have 1 or 3 channels, got " + d.str());
}

inline void require_same_dims(const Dims& a, const Dims& b, const char* where) {
  if (a != b)
    throw DimensionError(std::string(where) + ": dimension mismatch " +
                         a.str() + " vs " + b.str());
}

class Image {
 public:
  explicit Image(Dims dims, double fill = 0.0) : dims_(dims) {
    validate_dims(dims_);
    data_.assign(dims_.size(), fill);
  }
  Image(std::size_t height, std::size_t width, std::size_t channels = 1,
        double fill = 0.0)
      : Image(Dims{height, width, channels}, fill) {}
  Image(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    validate_dims(dims_);
    if (data_.size() != dims_.size())
      throw DimensionError("image data size " + std::to_string(data_.size()) +
                           " does not match dims " + dims_.str());
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t height() const noexcept { return dims_.height; }
  std::size_t width() const noexcept { return dims_.width; }
  std::size_t channels() const noexcept { return dims_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> plane(std::size_t c) noexcept {
    return std::span<double>(data_).subspan(c * dims_.pixels(), dims_.pixels());
  }
  std::span<const double> plane(std::size_t c) const noexcept {
    return std::span<const double>(data_).subspan(c * dims_.pixels(), dims_.pixels());
  }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * dims_.height + y) * dims_.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * dims_.height + y) * dims_.width + x];
  }

  Image& operator+=(const Image& o) {
    require_same_dims(dims_, o.dims_, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Image& operator-=(const Image& o) {
    require_same_dims(dims_, o.dims_, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Image& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

inline Image operator+(Image a, const Image& b) { return a += b; }
inline Image operator-(Image a, const Image& b) { return a -= b; }
inline Image operator*(Image a, double s) { return a *= s; }
inline Image operator*(double s, Image a) { return a *= s; }

// a*x + b*y
inline Image lincomb(double a, const Image& x, double b, const Image& y) {
  require_same_dims(x.dims(), y.dims(), "lincomb");
  Image out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline double dot(const Image& a, const Image& b) {
  require_same_dims(a.dims(), b.dims(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Image& a) { return std::sqrt(dot(a, a)); }

inline double distance(const Image& a, const Image& b) {
  require_same_dims(a.dims(), b.dims(), "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double max_abs(const Image& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_dims(a.dims(), b.dims(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(const Image& a) noexcept {
  return std::all_of(a.data().begin(), a.data().end(),
                     [](double v) { return std::isfinite(v); });
}

inline Image clamped(Image a, double lo = 0.0, double hi = 1.0) {
  for (double& v : a.data()) v = std::isfinite(v) ? std::clamp(v, lo, hi) : lo;
  return a;
}

// Deterministic generator: mt19937_64 has a standard-mandated output sequence,
// and the floating-point draws below avoid implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do v = engine_(); while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Image random_uniform_image(const Dims& dims, Rng& rng, double lo = 0.0,
                                  double hi = 1.0) {
  Image out(dims);
  for (double& v : out.data()) v = rng.uniform(lo, hi);
  return out;
}

inline Image random_normal_image(const Dims& dims, Rng& rng) {
  Image out(dims);
  for (double& v : out.data()) v = rng.normal();
  return out;
}

inline constexpr double kPsnrCap = 99.0;

// Peak 1.0, MSE pooled over every channel. Values above the cap (including
// zero MSE) report kPsnrCap.
inline double psnr(const Image& reference, const Image& test) {
  require_same_dims(reference.dims(), test.dims(), "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - test[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(reference.size());
  if (!(mse > 0.0)) return std::isnan(mse) ? mse : kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

// x + N(0, sigma^2) per sample; not clamped.
inline Image add_gaussian_noise(const Image& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  Image out = x;
  if (sigma == 0.0) return out;
  for (double& v : out.data()) v += sigma * rng.normal();
  return out;
}

// Smooth test scene with edges, gradients and texture, values in [0, 1].
inline Image synthetic_scene(const Dims& dims, std::uint64_t seed = 7) {
  validate_dims(dims);
  Rng rng(seed);
  Image out(dims);
  const double h = static_cast<double>(dims.height);
  const double w = static_cast<double>(dims.width);
  const double cx = rng.uniform(0.3, 0.7) * w, cy = rng.uniform(0.3, 0.7) * h;
  const double rad = 0.25 * std::min(h, w);
  const double fx = rng.uniform(4.0, 8.0), fy = rng.uniform(4.0, 8.0);
  for (std::size_t c = 0; c < dims.channels; ++c) {
    const double tint = 0.15 * static_cast<double>(c);
    for (std::size_t y = 0; y < dims.height; ++y) {
      for (std::size_t x = 0; x < dims.width; ++x) {
        const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
        double val = 0.2 + 0.3 * u + tint * v;
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        if (dx * dx + dy * dy < rad * rad) val += 0.35;
        if (u > 0.1 && u < 0.35 && v > 0.6 && v < 0.9) val -= 0.15;
        val += 0.08 * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v * v));
        out.at(c, y, x) = std::clamp(val, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace vista
