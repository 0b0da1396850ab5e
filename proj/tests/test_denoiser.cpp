#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vista/analysis.hpp"
#include "vista/denoiser.hpp"
#include "vista/equivariant.hpp"

using namespace vista;

namespace {

ImageMap as_map(const Denoiser& d) {
  return [d](const Image& x) { return d(x); };
}

double unsharp_norm_oracle(double lambda, double sigma, std::size_t n) {
  const auto g = oracle::symmetric_kernel_eigenvalues(smoothing_kernel(sigma), n, n);
  double best = 0.0;
  for (double v : g) best = std::max(best, std::abs(v + lambda * (1.0 - v)));
  return best;
}

}  // namespace

TEST(Denoiser, RejectsDimensionChange) {
  const Denoiser bad("bad", [](const Image&) { return Image(2, 2); });
  EXPECT_THROW(bad(Image(4, 4)), DimensionError);
}

TEST(GaussianSmoother, ConstantImageUnchanged) {
  const Image c(16, 16, 3, 0.37);
  EXPECT_LE(max_abs_diff(gaussian_smoother(1.3)(c), c), 1e-14);
}

TEST(GaussianSmoother, DeltaBecomesUnitMassBump) {
  Image d(32, 32);
  d.at(0, 16, 16) = 1.0;
  const Image out = gaussian_smoother(2.0)(d);
  double s = 0.0;
  for (double v : out.data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_GT(out.at(0, 16, 16), out.at(0, 16, 17));
  EXPECT_DOUBLE_EQ(out.at(0, 16, 17), out.at(0, 17, 16));
}

TEST(GaussianSmoother, LipschitzAtMostOne) {
  const Dims dims{32, 32, 1};
  PowerIterationOptions opts;
  opts.iters = 300;
  const NormEstimate est = linear_operator_norm(as_map(gaussian_smoother(1.5)), dims, opts);
  const auto eig = oracle::symmetric_kernel_eigenvalues(smoothing_kernel(1.5), 32, 32);
  double top = 0.0;
  for (double v : eig) top = std::max(top, std::abs(v));
  EXPECT_LE(top, 1.0 + 1e-12);
  EXPECT_LE(est.value, 1.0 + 1e-6);
  Rng rng(1);
  EXPECT_LE(estimate_lipschitz(gaussian_smoother(1.5), dims, 60, rng), 1.0 + 1e-12);
}

TEST(GaussianSmoother, InvalidSigmaThrows) { EXPECT_THROW(gaussian_smoother(0.0), Error); }

TEST(ScaledIdentity, BetaOneIsIdentity) {
  Rng rng(2);
  const Image x = random_uniform_image({8, 8, 1}, rng);
  EXPECT_EQ(scaled_identity(1.0)(x), x);
}

TEST(ScaledIdentity, ScalesOnes) {
  const Image out = scaled_identity(0.95)(Image(4, 4, 1, 1.0));
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.95);
}

TEST(ScaledIdentity, OutOfRangeBetaThrows) {
  EXPECT_THROW(scaled_identity(-0.1), Error);
  EXPECT_THROW(scaled_identity(1.1), Error);
}

TEST(ScaledIdentity, LipschitzEstimateIsBeta) {
  Rng rng(3);
  EXPECT_NEAR(estimate_lipschitz(scaled_identity(0.95), {16, 16, 1}, 30, rng), 0.95, 1e-9);
}

TEST(UnsharpExpansive, ConstantImageUnchanged) {
  const Image c(16, 16, 1, 0.6);
  EXPECT_LE(max_abs_diff(unsharp_expansive(1.5, 0.4)(c), c), 1e-14);
}

TEST(UnsharpExpansive, ApproachesIdentityAsLambdaApproachesOne) {
  Rng rng(4);
  const Image x = random_uniform_image({16, 16, 1}, rng);
  EXPECT_LE(max_abs_diff(unsharp_expansive(1.0 + 1e-9, 1.5)(x), x), 1e-8);
}

TEST(UnsharpExpansive, RejectsNonExpansiveLambda) {
  EXPECT_THROW(unsharp_expansive(1.0, 1.5), Error);
  EXPECT_THROW(unsharp_expansive(0.5, 1.5), Error);
}

TEST(UnsharpExpansive, NormMatchesDftOracle) {
  const std::size_t n = 32;
  const auto g = oracle::symmetric_kernel_eigenvalues(smoothing_kernel(0.6), n, n);
  const double g_min = *std::min_element(g.begin(), g.end());
  const double expected = unsharp_norm_oracle(2.0, 0.6, n);
  EXPECT_NEAR(expected, 2.0 - g_min, 1e-12);
  EXPECT_GT(expected, 1.0);
  PowerIterationOptions opts;
  opts.iters = 5000;
  opts.tol = 1e-13;
  const NormEstimate est = linear_operator_norm(as_map(unsharp_expansive(2.0, 0.6)), {n, n, 1}, opts);
  EXPECT_NEAR(est.value, expected, 1e-5);
}

TEST(UnsharpExpansive, LipschitzEstimateBetweenOneAndOracle) {
  Rng rng(5);
  const double est = estimate_lipschitz(unsharp_expansive(2.0, 1.5), {64, 64, 1}, 30, rng);
  EXPECT_GT(est, 1.0);
  EXPECT_LE(est, unsharp_norm_oracle(2.0, 1.5, 64) + 1e-9);
}

TEST(Equivariant, D4ElementsInvert) {
  Rng rng(6);
  const Image x = random_uniform_image({6, 6, 3}, rng);
  for (const auto& g : kD4) EXPECT_EQ(d4_inverse(g, d4_apply(g, x)), x);
}

TEST(Equivariant, D4ElementsAreDistinct) {
  Rng rng(7);
  const Image x = random_uniform_image({5, 5, 1}, rng);
  for (std::size_t a = 0; a < kD4.size(); ++a)
    for (std::size_t b = a + 1; b < kD4.size(); ++b)
      EXPECT_NE(d4_apply(kD4[a], x), d4_apply(kD4[b], x));
}

TEST(Equivariant, IdentityInnerIsIdentity) {
  Rng rng(8);
  const Image x = random_uniform_image({8, 8, 1}, rng);
  EXPECT_LE(max_abs_diff(equivariant_wrap(identity_denoiser(), EquivariantMode::averaged)(x), x), 1e-15);
  EXPECT_EQ(equivariant_wrap(identity_denoiser(), EquivariantMode::sampled, Rng(3))(x), x);
}

TEST(Equivariant, AveragedGaussianEqualsGaussian) {
  Rng rng(9);
  const Image x = random_uniform_image({16, 16, 3}, rng);
  const Denoiser g = gaussian_smoother(1.2);
  EXPECT_LE(max_abs_diff(equivariant_wrap(g, EquivariantMode::averaged)(x), g(x)), 1e-5);
}

TEST(Equivariant, AveragedCommutesWithGroup) {
  Rng rng(10);
  const Image x = random_uniform_image({8, 8, 1}, rng);
  // A deliberately non-equivariant inner map: shift right by one pixel.
  const Denoiser shift("shift", [](const Image& v) {
    Image out(v.dims());
    for (std::size_t y = 0; y < v.height(); ++y)
      for (std::size_t c = 0; c < v.width(); ++c)
        out.at(0, y, (c + 1) % v.width()) = v.at(0, y, c) * (1.0 + 0.1 * static_cast<double>(y));
    return out;
  });
  const Denoiser wrapped = equivariant_wrap(shift, EquivariantMode::averaged);
  for (const auto& g : kD4)
    EXPECT_LE(max_abs_diff(wrapped(d4_apply(g, x)), d4_apply(g, wrapped(x))), 1e-6);
}

TEST(Equivariant, SampledIsSeedDeterministic) {
  Rng rng(11);
  const Image x = random_uniform_image({8, 8, 1}, rng);
  const Denoiser inner = unsharp_expansive(1.5, 0.7);
  const Denoiser a = equivariant_wrap(inner, EquivariantMode::sampled, Rng(99));
  const Denoiser b = equivariant_wrap(inner, EquivariantMode::sampled, Rng(99));
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a(x), b(x));
}

TEST(Equivariant, NonSquareRejected) {
  const Denoiser w = equivariant_wrap(identity_denoiser(), EquivariantMode::averaged);
  EXPECT_THROW(w(Image(4, 6)), DimensionError);
}
