#pragma once

// Independent reference computations used as test oracles.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "vista/forward_model.hpp"
#include "vista/image.hpp"

namespace oracle {

// |DFT| of a kernel embedded in an H x W periodic grid. The eigenvalues of
// periodic convolution with the kernel are exactly these values (up to a
// phase that does not change the magnitude).
inline std::vector<double> kernel_dft_abs(const vista::Kernel& k, std::size_t H, std::size_t W) {
  std::vector<double> out(H * W);
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v) {
      std::complex<double> s = 0.0;
      for (std::size_t a = 0; a < k.height; ++a)
        for (std::size_t b = 0; b < k.width; ++b) {
          const double phase = -2.0 * std::numbers::pi *
                               (static_cast<double>(u * a) / static_cast<double>(H) +
                                static_cast<double>(v * b) / static_cast<double>(W));
          s += k.at(a, b) * std::polar(1.0, phase);
        }
      out[u * W + v] = std::abs(s);
    }
  return out;
}

// Real DFT values of a symmetric (centered, even) kernel, i.e. the signed
// eigenvalues of a symmetric circulant.
inline std::vector<double> symmetric_kernel_eigenvalues(const vista::Kernel& k, std::size_t H,
                                                        std::size_t W) {
  std::vector<double> out(H * W);
  const long ch = static_cast<long>(k.center_row()), cw = static_cast<long>(k.center_col());
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < W; ++v) {
      double s = 0.0;
      for (std::size_t a = 0; a < k.height; ++a)
        for (std::size_t b = 0; b < k.width; ++b) {
          const double phase = 2.0 * std::numbers::pi *
                               (static_cast<double>(u) * static_cast<double>(static_cast<long>(a) - ch) /
                                    static_cast<double>(H) +
                                static_cast<double>(v) * static_cast<double>(static_cast<long>(b) - cw) /
                                    static_cast<double>(W));
          s += k.at(a, b) * std::cos(phase);
        }
      out[u * W + v] = s;
    }
  return out;
}

// Brute-force periodic convolution straight from the definition.
inline vista::Image convolve_bruteforce(const vista::Image& x, const vista::Kernel& k) {
  vista::Image out(x.dims());
  const long H = static_cast<long>(x.height()), W = static_cast<long>(x.width());
  const long ch = static_cast<long>(k.center_row()), cw = static_cast<long>(k.center_col());
  for (std::size_t c = 0; c < x.channels(); ++c)
    for (long i = 0; i < H; ++i)
      for (long j = 0; j < W; ++j) {
        double s = 0.0;
        for (long a = 0; a < static_cast<long>(k.height); ++a)
          for (long b = 0; b < static_cast<long>(k.width); ++b) {
            const long yi = ((i - (a - ch)) % H + H) % H;
            const long xj = ((j - (b - cw)) % W + W) % W;
            s += k.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b)) *
                 x.at(c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xj));
          }
        out.at(c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s;
      }
  return out;
}

}  // namespace oracle
