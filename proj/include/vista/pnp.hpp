#pragma once

// Vanilla-PnP fixed-point maps
//   PGD:  T = D o (I - gamma grad f)
//   HQS:  T = D o prox_{mu f}
//   ADMM: T = 1/2 (I + (2D - I) o (2 prox_{alpha f} - I))
// and the plain iteration x_{k+1} = T(x_k).

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vista/denoiser.hpp"
#include "vista/error.hpp"
#include "vista/forward_model.hpp"
#include "vista/image.hpp"

namespace vista {

struct Pgd {
  double gamma = 1.0;
};
struct Hqs {
  double mu = 1.0;
};
struct Admm {
  double alpha = 1.0;
};

using PnPVariant = std::variant<Pgd, Hqs, Admm>;

class PnPOperator {
 public:
  PnPOperator(PnPVariant variant, Problem problem, Denoiser denoiser, CgSettings cg = {})
      : variant_(variant), problem_(std::move(problem)), denoiser_(std::move(denoiser)), cg_(cg) {
    const double param = std::visit(
        [](const auto& v) {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, Pgd>) return v.gamma;
          else if constexpr (std::is_same_v<V, Hqs>) return v.mu;
          else return v.alpha;
        },
        variant_);
    // gamma = 0 is allowed for PGD (degenerate but well defined).
    const bool ok = std::holds_alternative<Pgd>(variant_) ? param >= 0.0 : param > 0.0;
    if (!ok) throw Error("PnP operator parameter must be positive");
  }

  const PnPVariant& variant() const noexcept { return variant_; }
  const Problem& problem() const noexcept { return problem_; }
  const Denoiser& denoiser() const noexcept { return denoiser_; }
  const CgSettings& cg() const noexcept { return cg_; }

  std::string describe() const {
    return std::visit(
        [&](const auto& v) -> std::string {
          using V = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<V, Pgd>) return "pgd(gamma=" + detail::fmt_param(v.gamma) + ")+" + denoiser_.descriptor();
          else if constexpr (std::is_same_v<V, Hqs>) return "hqs(mu=" + detail::fmt_param(v.mu) + ")+" + denoiser_.descriptor();
          else return "admm(alpha=" + detail::fmt_param(v.alpha) + ")+" + denoiser_.descriptor();
        },
        variant_);
  }

  Image operator()(const Image& x) const;

 private:
  PnPVariant variant_;
  Problem problem_;
  Denoiser denoiser_;
  CgSettings cg_;
};

inline Image eval_pgd(const PnPOperator& op, const Image& x) {
  const auto* v = std::get_if<Pgd>(&op.variant());
  if (!v) throw Error("eval_pgd: operator is not PGD");
  return op.denoiser()(lincomb(1.0, x, -v->gamma, grad_f(op.problem(), x)));
}

inline Image eval_hqs(const PnPOperator& op, const Image& x) {
  const auto* v = std::get_if<Hqs>(&op.variant());
  if (!v) throw Error("eval_hqs: operator is not HQS");
  return op.denoiser()(prox_f(op.problem(), x, v->mu, op.cg()));
}

inline Image eval_admm(const PnPOperator& op, const Image& x) {
  const auto* v = std::get_if<Admm>(&op.variant());
  if (!v) throw Error("eval_admm: operator is not ADMM");
  // r = (2 prox - I) x;  T x = 1/2 (x + 2 D(r) - r)
  const Image r = lincomb(2.0, prox_f(op.problem(), x, v->alpha, op.cg()), -1.0, x);
  const Image dr = op.denoiser()(r);
  Image out(x.dims());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (x[i] + 2.0 * dr[i] - r[i]);
  return out;
}

inline Image PnPOperator::operator()(const Image& x) const {
  if (std::holds_alternative<Pgd>(variant_)) return eval_pgd(*this, x);
  if (std::holds_alternative<Hqs>(variant_)) return eval_hqs(*this, x);
  return eval_admm(*this, x);
}

// One row per iterate x_k. For k >= 1, theta/eta/beta are the values used to
// produce x_k from x_{k-1}, and dist_before/dist_after are ||x_{k-1} - p|| and
// ||x_k - p|| (viscosity runs only).
struct TraceRow {
  std::size_t k = 0;
  std::optional<double> psnr;
  std::optional<double> theta;
  std::optional<double> eta;
  std::optional<double> beta;
  std::optional<double> residual;  // ||x_k - x_{k-1}||
  bool near_p = false;
  bool diverged = false;
  bool theta_fallback = false;  // eta - beta degenerate, theta forced to the cap
  std::optional<double> dist_before;
  std::optional<double> dist_after;
  double seconds = 0.0;  // elapsed since the loop started
};

struct IterationTrace {
  std::string method;
  std::vector<TraceRow> rows;
  bool diverged = false;
  bool bridge_failed = false;
  std::string failure;
  double wall_seconds = 0.0;
  std::optional<double> fixed_point_residual;

  std::size_t completed_iterations() const noexcept { return rows.empty() ? 0 : rows.size() - 1; }
};

using IterateObserver = std::function<void(std::size_t k, const Image& x)>;

struct IterationOptions {
  std::size_t iters = 500;
  std::optional<Image> ground_truth;
  double divergence_guard = 1e6;  // on max |x_k|
  IterateObserver observer;
};

namespace detail {

// Runs x_{k+1} = step(x_k, row) for the configured number of iterations;
// step may fill theta/eta/beta fields of the row it is given.
template <typename Step>
IterationTrace run_iterations(std::string method, const Image& x0, const IterationOptions& opts,
                              Step&& step) {
  if (opts.ground_truth) require_same_dims(opts.ground_truth->dims(), x0.dims(), "ground truth");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  IterationTrace trace;
  trace.method = std::move(method);
  auto record = [&](TraceRow& row, const Image& x) {
    if (opts.ground_truth) row.psnr = psnr(*opts.ground_truth, x);
    if (!all_finite(x) || max_abs(x) > opts.divergence_guard) {
      row.diverged = true;
      trace.diverged = true;
    }
    row.seconds = elapsed();
    trace.rows.push_back(row);
    if (opts.observer) opts.observer(row.k, x);
  };

  TraceRow first;
  record(first, x0);
  Image x = x0;
  for (std::size_t k = 0; k < opts.iters && !trace.diverged; ++k) {
    TraceRow row;
    row.k = k + 1;
    std::optional<Image> next;
    try {
      next = step(x, row);
    } catch (const BridgeError& e) {
      trace.bridge_failed = true;
      trace.failure = e.what();
      break;
    }
    require_same_dims(x.dims(), next->dims(), "iteration");
    row.residual = distance(*next, x);
    x = std::move(*next);
    record(row, x);
  }
  trace.wall_seconds = elapsed();
  return trace;
}

}  // namespace detail

// Vanilla-PnP: x_{k+1} = T(x_k). Stops early, flagging the trace, once an
// iterate is non-finite or exceeds the divergence guard.
inline IterationTrace vanilla_iterate(const ImageMap& t, const Image& x0,
                                      const IterationOptions& opts, std::string method = "vanilla") {
  return detail::run_iterations(std::move(method), x0, opts,
                                [&](const Image& x, TraceRow&) { return t(x); });
}

}  // namespace vista
