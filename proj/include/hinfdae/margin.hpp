#pragma once

#include <utility>
#include <vector>

#include "hinfdae/flowdae.hpp"
#include "hinfdae/riccati.hpp"

namespace hinfdae {

struct MarginProbe {
  double gamma = 0.0;
  // Spectral radius of Y E^T X E at this gamma; -1 when the Riccati solves
  // themselves failed (divergence below the optimal margin).
  double rho = -1.0;
  bool feasible = false;
};

struct MarginReport {
  double gamma = 0.0;  // accepted margin: safety * (smallest feasible probe)
  bool feasible = false;
  double rho = 0.0;  // spectral radius at the accepted margin
  std::vector<MarginProbe> probes;  // sorted by gamma descending
  LowRankFactor x_factor;  // regulator factor at the accepted margin
  LowRankFactor y_factor;  // filter factor at the accepted margin
};

struct MarginOptions {
  double gamma_max = 1e6;
  double rel_gap = 0.01;  // relative width of the final bisection bracket
  double safety = 1.05;   // multiplicative clearance on the accepted margin
  RiccatiOptions riccati;
};

// Existence test for the central controller at margin gamma: feasible iff
// gamma^2 > rho(Y E^T X E) and both closed-loop pencils (filter and
// regulator, formed with beta^2 = 1 - 1/gamma^2) are stable on the
// constraint manifold. rho is computed in factored form through the small
// Gram matrix (Z_X^T E Z_Y)^T (Z_X^T E Z_Y); dense solutions are factored by
// an eigendecomposition first.
std::pair<bool, double> existence_check(const ConstrainedSystem& sys, const RiccatiSolution& x,
                                        const RiccatiSolution& y, double gamma);

// Feasible robustness margin by log-scale bisection: probe at gamma_max,
// halve the exponent until infeasible, then bisect the bracket until its
// relative width drops below rel_gap. Riccati solves that diverge
// (NoConvergence, RankRunaway, ...) count as infeasible probes — that is the
// expected signature below the optimal margin. Throws InfeasibleAtGammaMax
// when even gamma_max fails.
MarginReport compute_margin(const ConstrainedSystem& plant, const MarginOptions& opts = {});

}  // namespace hinfdae
