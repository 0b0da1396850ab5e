#pragma once

// Empirical operator diagnostics. Sampled ratios are lower bounds on the
// true Lipschitz / stability constants; certified bounds are out of reach
// for general nonlinear maps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "vista/denoiser.hpp"
#include "vista/error.hpp"
#include "vista/image.hpp"

namespace vista {

struct ContractionReport {
  double max_ratio = 0.0;
  double mean_ratio = 0.0;
  std::size_t num_pairs = 0;
  std::uint64_t seed = 0;
  std::string descriptor;
};

namespace detail {

// Pair i: uniform random pair for i % 3 == 0, otherwise x and x + s * u with
// a random unit-RMS direction u and s = 1e-1 or 1e-3.
inline std::pair<Image, Image> sample_pair(const Dims& dims, std::size_t i, Rng& rng) {
  Image a = random_uniform_image(dims, rng);
  switch (i % 3) {
    case 0:
      for (;;) {
        Image b = random_uniform_image(dims, rng);
        if (distance(a, b) > 0.0) return {std::move(a), std::move(b)};
      }
    default: {
      const double scale = (i % 3 == 1) ? 1e-1 : 1e-3;
      for (;;) {
        Image dir = random_normal_image(dims, rng);
        const double n = norm(dir);
        if (!(n > 0.0)) continue;
        Image b = lincomb(1.0, a, scale * std::sqrt(static_cast<double>(dims.size())) / n, dir);
        if (distance(a, b) > 0.0) return {std::move(a), std::move(b)};
      }
    }
  }
}

}  // namespace detail

inline ContractionReport contraction_ratio(const ImageMap& op, const Dims& dims, std::size_t pairs,
                                           Rng& rng, std::string descriptor = {}) {
  if (pairs < 1) throw Error("contraction_ratio: need at least one pair");
  ContractionReport report;
  report.seed = rng.seed();
  report.descriptor = std::move(descriptor);
  double total = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    auto [a, b] = detail::sample_pair(dims, i, rng);
    const double ratio = distance(op(a), op(b)) / distance(a, b);
    report.max_ratio = std::max(report.max_ratio, ratio);
    total += ratio;
  }
  report.num_pairs = pairs;
  report.mean_ratio = total / static_cast<double>(pairs);
  return report;
}

// Lower bound on the Lipschitz constant of a denoiser.
inline double estimate_lipschitz(const Denoiser& d, const Dims& dims, std::size_t trials, Rng& rng) {
  if (trials < 1) throw Error("estimate_lipschitz: trials must be >= 1");
  return contraction_ratio([&d](const Image& x) { return d(x); }, dims, trials, rng,
                           d.descriptor())
      .max_ratio;
}

struct NormEstimate {
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct PowerIterationOptions {
  std::size_t iters = 500;
  double tol = 1e-6;
  std::uint64_t seed = 1;
  bool assume_linear = false;  // skip the linearity probe
  ImageMap adjoint;            // when set, iterate on op^T op
};

// Max relative deviation of op(a x + b u) from a op(x) + b op(u).
inline double linearity_defect(const ImageMap& op, const Dims& dims, Rng& rng) {
  const Image x = random_normal_image(dims, rng), u = random_normal_image(dims, rng);
  const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
  const Image lhs = op(lincomb(a, x, b, u));
  const Image rhs = lincomb(a, op(x), b, op(u));
  const double scale = std::max({norm(rhs), std::abs(a) * norm(op(x)), std::abs(b) * norm(op(u)),
                                 1e-300});
  return distance(lhs, rhs) / scale;
}

// Spectral norm of a linear map by power iteration. With an adjoint the
// iteration runs on op^T op and converges to ||op||; without one it tracks
// ||op^k x|| growth, which equals ||op|| for normal operators (circulant,
// symmetric) and is a lower bound otherwise.
inline NormEstimate linear_operator_norm(const ImageMap& op, const Dims& dims,
                                         const PowerIterationOptions& opts = {}) {
  Rng rng(opts.seed);
  if (!opts.assume_linear) {
    const double defect = linearity_defect(op, dims, rng);
    if (!(defect <= 1e-6))
      throw Error("linear_operator_norm: linearity probe failed (defect " +
                  std::to_string(defect) + ")");
  }
  Image x = random_normal_image(dims, rng);
  x *= 1.0 / norm(x);
  NormEstimate est;
  double prev = 0.0;
  for (std::size_t it = 0; it < opts.iters; ++it) {
    Image y = op(x);
    double value;
    if (opts.adjoint) {
      y = opts.adjoint(y);
      value = std::sqrt(std::max(0.0, dot(x, y)));
    } else {
      value = norm(y);
    }
    est.value = value;
    est.iterations = it + 1;
    const double ny = norm(y);
    if (!(ny > 0.0)) {
      est.converged = true;
      break;
    }
    x = y * (1.0 / ny);
    if (it > 0 && std::abs(value - prev) <= opts.tol * value) {
      est.converged = true;
      break;
    }
    prev = value;
  }
  return est;
}

// max ||T(x) - p|| / ||x - p|| over random x at several distances from p.
// Each sample is refined by re-aiming along T(x) - p at the same distance,
// which climbs toward the worst direction for maps that are linear about p.
inline double eta_stability_probe(const ImageMap& t, const Image& p, std::size_t samples, Rng& rng,
                                  std::size_t refine_steps = 10) {
  if (samples < 1) throw Error("eta_stability_probe: samples must be >= 1");
  static constexpr double kScales[] = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
  const double rms = std::sqrt(static_cast<double>(p.size()));
  double worst = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double radius = kScales[i % std::size(kScales)] * rms;
    Image dir = random_normal_image(p.dims(), rng);
    for (std::size_t step = 0; step <= refine_steps; ++step) {
      const double n = norm(dir);
      if (!(n > 0.0) || !std::isfinite(n)) break;
      const Image x = lincomb(1.0, p, radius / n, dir);
      const double den = distance(x, p);
      if (!(den > 0.0)) break;
      const Image tx = t(x);
      worst = std::max(worst, distance(tx, p) / den);
      dir = tx - p;
    }
  }
  return worst;
}

}  // namespace vista
