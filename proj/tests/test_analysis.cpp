#include <gtest/gtest.h>

#include "vista/analysis.hpp"
#include "vista/viscosity.hpp"

using namespace vista;

TEST(ContractionRatio, ScaledIdentityExact) {
  Rng rng(1);
  const auto r = contraction_ratio(scaled_identity(0.95), {16, 16, 1}, 60, rng, "beta");
  EXPECT_NEAR(r.max_ratio, 0.95, 1e-9);
  EXPECT_NEAR(r.mean_ratio, 0.95, 1e-9);
  EXPECT_EQ(r.num_pairs, 60u);
  EXPECT_EQ(r.seed, 1u);
  EXPECT_EQ(r.descriptor, "beta");
}

TEST(ContractionRatio, MaxAtLeastMean) {
  Rng rng(2);
  const auto r = contraction_ratio(gaussian_smoother(1.0), {16, 16, 1}, 30, rng);
  EXPECT_GE(r.max_ratio, r.mean_ratio);
  EXPECT_GE(r.mean_ratio, 0.0);
}

TEST(ContractionRatio, ExpansiveDetected) {
  Rng rng(3);
  EXPECT_GT(contraction_ratio(unsharp_expansive(2.0, 1.5), {32, 32, 1}, 30, rng).max_ratio, 1.0);
}

TEST(ContractionRatio, SameSeedSameReport) {
  Rng a(4), b(4);
  const auto ra = contraction_ratio(unsharp_expansive(2.0, 1.5), {16, 16, 1}, 12, a);
  const auto rb = contraction_ratio(unsharp_expansive(2.0, 1.5), {16, 16, 1}, 12, b);
  EXPECT_EQ(ra.max_ratio, rb.max_ratio);
  EXPECT_EQ(ra.mean_ratio, rb.mean_ratio);
}

TEST(ContractionRatio, CompositionHeuristic) {
  const Dims dims{16, 16, 1};
  const Denoiser f = unsharp_expansive(1.5, 1.0), g = gaussian_smoother(1.5);
  Rng r1(5), r2(5), r3(5);
  const double fg = contraction_ratio([&](const Image& x) { return f(g(x)); }, dims, 60, r1).max_ratio;
  const double rf = contraction_ratio(f, dims, 60, r2).max_ratio;
  const double rg = contraction_ratio(g, dims, 60, r3).max_ratio;
  EXPECT_LE(fg, rf * rg + 0.05);
}

TEST(ContractionRatio, ZeroPairsRejected) {
  Rng rng(6);
  EXPECT_THROW(contraction_ratio(identity_denoiser(), {4, 4, 1}, 0, rng), Error);
}

TEST(LinearOperatorNorm, IdentityAndScaling) {
  const Dims dims{16, 16, 1};
  EXPECT_NEAR(linear_operator_norm(identity_denoiser(), dims).value, 1.0, 1e-12);
  EXPECT_NEAR(linear_operator_norm(scaled_identity(0.5), dims).value, 0.5, 1e-12);
}

TEST(LinearOperatorNorm, Homogeneous) {
  const Dims dims{16, 16, 1};
  const Denoiser u = unsharp_expansive(2.0, 1.5);
  PowerIterationOptions opts;
  opts.iters = 5000;
  opts.tol = 1e-12;
  const double base = linear_operator_norm(u, dims, opts).value;
  for (double a : {-3.0, 0.25, 7.0}) {
    const double scaled = linear_operator_norm([&](const Image& x) { return a * u(x); }, dims, opts).value;
    EXPECT_NEAR(scaled, std::abs(a) * base, 1e-6 * std::abs(a) * base);
  }
}

TEST(LinearOperatorNorm, NonlinearRejected) {
  const ImageMap square = [](const Image& x) {
    Image out = x;
    for (double& v : out.data()) v *= v;
    return out;
  };
  EXPECT_THROW(linear_operator_norm(square, {8, 8, 1}), Error);
}

TEST(LinearOperatorNorm, ReportsConvergence) {
  const NormEstimate est = linear_operator_norm(scaled_identity(0.5), {8, 8, 1});
  EXPECT_TRUE(est.converged);
  EXPECT_LE(est.iterations, 3u);
}

TEST(EtaProbe, BoundedByLipschitzThroughFixedPoint) {
  Rng rng(7);
  const Image p = random_uniform_image({16, 16, 1}, rng);
  const Denoiser g = gaussian_smoother(1.0);
  const ImageMap t = [&](const Image& x) { return p + 0.9 * g(x - p); };
  EXPECT_LE(eta_stability_probe(t, p, 25, rng), 0.9 + 1e-6);
}

TEST(EtaProbe, TranslationExceedsOneNearP) {
  Rng rng(8);
  const Image p(8, 8, 1, 0.5);
  const Image c(8, 8, 1, 0.01);
  EXPECT_GT(eta_stability_probe([&](const Image& x) { return x + c; }, p, 10, rng), 1.0);
}

TEST(EtaProbe, ApproachesSpectralNormOfLinearMap) {
  // Symmetric circulant with known spectrum; p = 0.
  const Dims dims{32, 32, 1};
  const Denoiser u = unsharp_expansive(1.8, 1.0);
  PowerIterationOptions opts;
  opts.iters = 5000;
  opts.tol = 1e-12;
  const double spectral = linear_operator_norm(u, dims, opts).value;
  Rng rng(9);
  const double probe = eta_stability_probe(u, Image(dims), 10, rng);
  EXPECT_LE(probe, spectral + 1e-9);
  EXPECT_GE(probe, 0.95 * spectral);
}

TEST(EtaProbe, ZeroSamplesRejected) {
  Rng rng(10);
  EXPECT_THROW(eta_stability_probe(identity_denoiser(), Image(4, 4), 0, rng), Error);
}
