#pragma once

// Per-row checks on viscosity traces shared by the unit and acceptance suites.

#include <string>

#include "vista/pnp.hpp"
#include "vista/viscosity.hpp"

namespace trace_checks {

struct Result {
  bool ok = true;
  std::size_t checked = 0;
  std::string detail;
};

// ||x_{k+1} - p|| <= ((1 - theta) eta + theta beta) ||x_k - p|| on every row
// with finite eta and beta, to relative slack.
inline Result proof_inequality(const vista::IterationTrace& trace, double slack = 1e-6) {
  Result r;
  for (const auto& row : trace.rows) {
    if (row.k == 0 || !row.theta || !row.eta || !row.beta || !row.dist_before || !row.dist_after)
      continue;
    if (!std::isfinite(*row.eta) || !std::isfinite(*row.beta)) continue;
    const double theta = *row.theta;
    const double bound = ((1.0 - theta) * *row.eta + theta * *row.beta) * *row.dist_before;
    ++r.checked;
    if (*row.dist_after > bound * (1.0 + slack) + 1e-300) {
      r.ok = false;
      r.detail = "k=" + std::to_string(row.k) + " dist_after=" + std::to_string(*row.dist_after) +
                 " bound=" + std::to_string(bound);
      return r;
    }
  }
  return r;
}

// 0 <= theta <= cap everywhere, and theta == 0 exactly whenever eta <= 1
// outside the neighborhood of p.
inline Result theta_range(const vista::IterationTrace& trace, double cap) {
  Result r;
  for (const auto& row : trace.rows) {
    if (row.k == 0 || !row.theta) continue;
    ++r.checked;
    const double theta = *row.theta;
    if (!(theta >= 0.0 && theta <= cap)) {
      r.ok = false;
      r.detail = "k=" + std::to_string(row.k) + " theta=" + std::to_string(theta);
      return r;
    }
    if (!row.near_p && row.eta && *row.eta <= 1.0 && theta != 0.0) {
      r.ok = false;
      r.detail = "k=" + std::to_string(row.k) + " eta<=1 but theta=" + std::to_string(theta);
      return r;
    }
  }
  return r;
}

}  // namespace trace_checks
