#pragma once

// Viscosity-stabilized PnP:
//   x_{k+1} = (1 - theta_k) T(x_k) + theta_k S(x_k)
// with S a contraction whose fixed point p anchors the adaptive index
//   eta_k  = ||T(x_k) - p|| / ||x_k - p||
//   beta_k = ||S(x_k) - p|| / ||x_k - p||
//   theta_k = 0                                 if eta_k <= 1
//           = min((eta_k - 1)/(eta_k - beta_k), cap) otherwise
// and theta_k = cap when x_k is within a small neighborhood of p.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "vista/error.hpp"
#include "vista/image.hpp"
#include "vista/nlm.hpp"
#include "vista/pnp.hpp"

namespace vista {

enum class Schedule { adaptive, constant, reciprocal };

struct ViscosityConfig {
  double theta_cap = 0.2;
  Schedule schedule = Schedule::adaptive;
  double theta = 0.0;  // constant schedule only; may be 0 or 1
  double neighborhood_eps = 1e-3;
  double fixed_point_tol = 1e-3;
  std::size_t fixed_point_max_iter = 50;

  void validate() const {
    if (!(theta_cap > 0.0 && theta_cap < 1.0)) throw ConfigError("theta_cap must lie in (0, 1)");
    if (schedule == Schedule::constant && !(theta >= 0.0 && theta <= 1.0))
      throw ConfigError("constant theta must lie in [0, 1]");
    if (!(neighborhood_eps > 0.0)) throw ConfigError("neighborhood_eps must be > 0");
    if (!(fixed_point_tol > 0.0)) throw ConfigError("fixed_point_tol must be > 0");
    if (fixed_point_max_iter < 1) throw ConfigError("fixed_point_max_iter must be >= 1");
  }
  friend bool operator==(const ViscosityConfig&, const ViscosityConfig&) = default;
};

struct FixedPointResult {
  Image point;
  double residual = 0.0;  // last ||x_{t+1} - x_t|| / max(1, ||x_t||)
  std::size_t iterations = 0;
  bool converged = false;
};

// Iterates x <- S(x) until the relative step falls below tol or max_iter is
// reached. Non-convergence is reported, not thrown: a rough estimate of p is
// enough for the viscosity index.
inline FixedPointResult fixed_point(const ImageMap& s, const Image& x0, double tol,
                                    std::size_t max_iter) {
  if (max_iter < 1) throw Error("fixed_point: max_iter must be >= 1");
  FixedPointResult result{x0};
  for (std::size_t t = 0; t < max_iter; ++t) {
    Image next = s(result.point);
    require_same_dims(next.dims(), x0.dims(), "fixed_point");
    const double step = distance(next, result.point);
    result.residual = step / std::max(1.0, norm(result.point));
    result.point = std::move(next);
    result.iterations = t + 1;
    if (result.residual <= tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

struct ViscosityIndex {
  double theta = 0.0;
  std::optional<double> eta;
  std::optional<double> beta;
  bool near_p = false;
  bool fallback = false;
};

inline ViscosityIndex viscosity_index(const Image& x, const Image& tx, const Image& sx,
                                      const Image& p, const ViscosityConfig& cfg) {
  ViscosityIndex out;
  const double dist = distance(x, p);
  if (dist > 0.0) {
    out.eta = distance(tx, p) / dist;
    out.beta = distance(sx, p) / dist;
  }
  if (dist <= cfg.neighborhood_eps * std::max(1.0, norm(p))) {
    out.near_p = true;
    out.theta = cfg.theta_cap;
    return out;
  }
  const double eta = *out.eta, beta = *out.beta;
  if (!(eta > 1.0)) {
    // NaN eta (non-finite T output) lands here too; the loop guard catches it.
    out.theta = std::isnan(eta) ? cfg.theta_cap : 0.0;
    return out;
  }
  if (eta - beta <= 1e-12) {
    out.theta = cfg.theta_cap;
    out.fallback = true;
    return out;
  }
  out.theta = std::min((eta - 1.0) / (eta - beta), cfg.theta_cap);
  return out;
}

// Algorithm: p is given (see the overload below); each iteration evaluates
// T(x_k) and S(x_k) once, picks theta_k from the schedule and combines.
inline IterationTrace vista_iterate(const ImageMap& t, const ImageMap& s, const Image& x0,
                                    const Image& p, const ViscosityConfig& cfg,
                                    const IterationOptions& opts, std::string method = "vista") {
  cfg.validate();
  require_same_dims(p.dims(), x0.dims(), "vista fixed point");
  std::size_t k = 0;
  return detail::run_iterations(std::move(method), x0, opts, [&](const Image& x, TraceRow& row) {
    const Image tx = t(x);
    const Image sx = s(x);
    require_same_dims(tx.dims(), x.dims(), "T(x)");
    require_same_dims(sx.dims(), x.dims(), "S(x)");
    double theta = 0.0;
    switch (cfg.schedule) {
      case Schedule::adaptive: {
        const ViscosityIndex idx = viscosity_index(x, tx, sx, p, cfg);
        theta = idx.theta;
        row.eta = idx.eta;
        row.beta = idx.beta;
        row.near_p = idx.near_p;
        row.theta_fallback = idx.fallback;
        break;
      }
      case Schedule::constant:
        theta = cfg.theta;
        break;
      case Schedule::reciprocal:
        theta = k == 0 ? cfg.theta_cap : std::min(1.0 / static_cast<double>(k), cfg.theta_cap);
        break;
    }
    if (cfg.schedule != Schedule::adaptive) {
      const double dist = distance(x, p);
      if (dist > 0.0) {
        row.eta = distance(tx, p) / dist;
        row.beta = distance(sx, p) / dist;
      }
    }
    ++k;
    row.theta = theta;
    row.dist_before = distance(x, p);
    Image next = lincomb(1.0 - theta, tx, theta, sx);
    row.dist_after = distance(next, p);
    return next;
  });
}

inline IterationTrace vista_iterate(const ImageMap& t, const ImageMap& s, const Image& x0,
                                    const ViscosityConfig& cfg, const IterationOptions& opts) {
  cfg.validate();
  const FixedPointResult fp = fixed_point(s, x0, cfg.fixed_point_tol, cfg.fixed_point_max_iter);
  IterationTrace trace = vista_iterate(t, s, x0, fp.point, cfg, opts);
  trace.fixed_point_residual = fp.residual;
  return trace;
}

// S_NLM = D_NLM o (I - rho grad f), with D_NLM the DSG-NLM smoother whose
// weights are frozen against the guide.
inline PnPOperator nlm_viscosity_operator(const Problem& problem, const Image& guide,
                                          const NlmParams& params, double rho) {
  if (!(rho > 0.0 && rho < 2.0)) throw Error("S_NLM step rho must lie in (0, 2)");
  return PnPOperator(Pgd{rho}, problem, dsg_nlm_denoiser(build_dsg_weights(guide, params)));
}

struct Summary {
  double peak_psnr = 0.0;
  std::size_t peak_iter = 0;
  double asymptotic_psnr = 0.0;
  std::size_t asymptotic_iter = 0;
  bool asymptotic_truncated = false;  // trace ended before asymptotic_at
  bool diverged = false;
  bool bridge_failed = false;
  double wall_seconds = 0.0;
};

// Peak PSNR over finite entries, and PSNR at iteration asymptotic_at (or at
// the last row when the trace is shorter).
inline Summary summarize(const IterationTrace& trace, std::size_t asymptotic_at) {
  Summary s;
  s.diverged = trace.diverged;
  s.bridge_failed = trace.bridge_failed;
  s.wall_seconds = trace.wall_seconds;
  bool any = false;
  for (const TraceRow& row : trace.rows) {
    if (!row.psnr || !std::isfinite(*row.psnr)) continue;
    if (!any || *row.psnr > s.peak_psnr) {
      s.peak_psnr = *row.psnr;
      s.peak_iter = row.k;
    }
    any = true;
  }
  if (!any) throw Error("summarize: trace has no PSNR entries");
  const TraceRow* at = nullptr;
  for (const TraceRow& row : trace.rows)
    if (row.k == asymptotic_at) at = &row;
  if (!at) {
    at = &trace.rows.back();
    s.asymptotic_truncated = true;
  }
  s.asymptotic_iter = at->k;
  s.asymptotic_psnr = at->psnr.value_or(std::nan(""));
  return s;
}

}  // namespace vista
