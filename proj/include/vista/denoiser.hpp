#pragma once

// The pluggable denoiser D: a shape-preserving map on images with a textual
// descriptor that ends up in traces.

#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <utility>

#include "vista/error.hpp"
#include "vista/forward_model.hpp"
#include "vista/image.hpp"

namespace vista {

using ImageMap = std::function<Image(const Image&)>;

class Denoiser {
 public:
  Denoiser(std::string descriptor, ImageMap fn)
      : descriptor_(std::move(descriptor)), fn_(std::move(fn)) {
    if (!fn_) throw Error("denoiser '" + descriptor_ + "' has no behavior");
  }

  Image operator()(const Image& x) const {
    Image out = fn_(x);
    if (out.dims() != x.dims())
      throw DimensionError("denoiser " + descriptor_ + " changed dims " + x.dims().str() +
                           " -> " + out.dims().str());
    return out;
  }

  const std::string& descriptor() const noexcept { return descriptor_; }

 private:
  std::string descriptor_;
  ImageMap fn_;
};

namespace detail {
inline std::string fmt_param(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace detail

inline Denoiser identity_denoiser() {
  return Denoiser("identity", [](const Image& x) { return x; });
}

// Kernel support used by gaussian_smoother: 2*ceil(3 sigma) + 1 taps.
inline Kernel smoothing_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian smoother sigma must be > 0");
  const auto half = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  return gaussian_kernel(2 * half + 1, sigma);
}

// Periodic Gaussian filtering; linear, symmetric and D4-equivariant.
inline Denoiser gaussian_smoother(double sigma) {
  auto kernel = std::make_shared<const Kernel>(smoothing_kernel(sigma));
  return Denoiser("gaussian(sigma=" + detail::fmt_param(sigma) + ")",
                  [kernel](const Image& x) { return convolve_periodic(x, *kernel); });
}

// x -> beta * x, beta in [0, 1].
inline Denoiser scaled_identity(double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error("scaled_identity: beta must lie in [0, 1]");
  return Denoiser("scaled_identity(beta=" + detail::fmt_param(beta) + ")",
                  [beta](const Image& x) { return x * beta; });
}

// x -> G x + lambda (x - G x). Linear, fixes constants, and amplifies the
// frequencies G removes, so its Lipschitz constant exceeds one.
inline Denoiser unsharp_expansive(double lambda, double base_sigma) {
  if (!(lambda > 1.0)) throw Error("unsharp_expansive: lambda must be > 1");
  auto kernel = std::make_shared<const Kernel>(smoothing_kernel(base_sigma));
  return Denoiser("unsharp(lambda=" + detail::fmt_param(lambda) +
                      ",sigma=" + detail::fmt_param(base_sigma) + ")",
                  [kernel, lambda](const Image& x) {
                    const Image g = convolve_periodic(x, *kernel);
                    return lincomb(1.0 - lambda, g, lambda, x);
                  });
}

}  // namespace vista
