#include "hinfdae/margin.hpp"

#include <algorithm>
#include <cmath>

#include "hinfdae/errors.hpp"

namespace hinfdae {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

// PSD square-root factor of a solution: the stored low-rank factor when
// present, otherwise an eigendecomposition of the dense matrix with negative
// round-off clipped away.
MatrixXd solution_factor(const RiccatiSolution& sol) {
  if (sol.low_rank()) return sol.factor.Z;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (sol.dense + sol.dense.transpose()));
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

bool pencil_stable(const MatrixXd& e, const MatrixXd& a) {
  const Index n = a.rows();
  return is_stable({e, a, MatrixXd::Zero(n, 0), MatrixXd::Zero(0, n), MatrixXd::Zero(0, 0)})
      .stable;
}

}  // namespace

std::pair<bool, double> existence_check(const ConstrainedSystem& sys, const RiccatiSolution& x,
                                        const RiccatiSolution& y, double gamma) {
  if (!(gamma > 0.0)) throw InvalidInput("existence check needs gamma > 0");
  const MatrixXd zx = solution_factor(x);
  const MatrixXd zy = solution_factor(y);

  double rho = 0.0;
  if (zx.size() && zy.size()) {
    // Nonzero spectrum of Y E^T X E through the small Gram matrix: the
    // eigenvalues are the squared singular values of Z_X^T E Z_Y.
    const MatrixXd core = zx.transpose() * (sys.E * zy);
    if (core.size()) {
      const double smax = core.jacobiSvd().singularValues()(0);
      rho = smax * smax;
    }
  }

  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  CompressedSystem comp = compress_ker(sys);
  const MatrixXd theta_t = comp.theta.transpose();

  // Closed-loop pencils on the constraint manifold. The solutions live in
  // ker J, so the congruence by theta is exact.
  MatrixXd a_filter = comp.sys.A;
  if (zy.size()) {
    const MatrixXd ezy = theta_t * (sys.E * zy);
    a_filter -= beta_sq * ezy * (sys.C * zy).transpose() * comp.sys.C;
  }
  MatrixXd a_reg = comp.sys.A;
  if (zx.size()) {
    const MatrixXd bzx = sys.B.transpose() * zx;  // m x k
    a_reg -= beta_sq * comp.sys.B * bzx * (zx.transpose() * (sys.E * comp.theta));
  }

  const bool feasible = gamma * gamma > rho && pencil_stable(comp.sys.E, a_filter) &&
                        pencil_stable(comp.sys.E, a_reg);
  return {feasible, rho};
}

MarginReport compute_margin(const ConstrainedSystem& plant, const MarginOptions& opts) {
  if (!(opts.gamma_max > 1.0)) throw InvalidInput("margin search needs gamma_max > 1");
  if (!(opts.rel_gap > 0.0) || opts.rel_gap >= 1.0)
    throw InvalidInput("margin search needs rel_gap in (0, 1)");
  if (!(opts.safety >= 1.0)) throw InvalidInput("margin safety factor must be >= 1");

  struct ProbeResult {
    MarginProbe probe;
    RiccatiSolution x, y;
  };

  MarginReport report;
  auto probe = [&](double gamma) -> ProbeResult {
    ProbeResult out;
    out.probe.gamma = gamma;
    const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
    try {
      out.y = solve_projected_lr(RiccatiKind::filter, plant, beta_sq, opts.riccati);
      out.x = solve_projected_lr(RiccatiKind::regulator, plant, beta_sq, opts.riccati);
      auto [feasible, rho] = existence_check(plant, out.x, out.y, gamma);
      out.probe.feasible = feasible;
      out.probe.rho = rho;
    } catch (const NumericalFailure&) {
      // Divergence of the solves is the expected signature below the
      // optimal margin; record the probe as infeasible.
      out.probe.feasible = false;
      out.probe.rho = -1.0;
    }
    report.probes.push_back(out.probe);
    return out;
  };

  ProbeResult best = probe(opts.gamma_max);
  if (!best.probe.feasible)
    throw InfeasibleAtGammaMax("no feasible robustness margin at or below gamma_max");

  // Bracket: halve the exponent from gamma_max until an infeasible probe (or
  // the floor just above 1, where beta^2 degenerates).
  double lo = 1.0;
  double hi = opts.gamma_max;
  while (hi > 1.0 + 1e-6) {
    const double g = std::sqrt(hi);
    if (g <= 1.0 + 1e-6) break;
    ProbeResult r = probe(g);
    if (r.probe.feasible) {
      hi = g;
      best = std::move(r);
    } else {
      lo = g;
      break;
    }
  }

  // Log-scale bisection of [lo, hi] down to the requested relative width.
  if (lo > 1.0) {
    while (hi / lo - 1.0 > opts.rel_gap) {
      const double mid = std::sqrt(lo * hi);
      ProbeResult r = probe(mid);
      if (r.probe.feasible) {
        hi = mid;
        best = std::move(r);
      } else {
        lo = mid;
      }
    }
  }

  // Clearance re-solve strictly inside the feasible region.
  const double gamma_accept = std::min(opts.safety * hi, opts.gamma_max);
  ProbeResult accepted = probe(gamma_accept);
  if (!accepted.probe.feasible)
    throw NoConvergence("margin re-solve at the accepted gamma lost feasibility");

  std::sort(report.probes.begin(), report.probes.end(),
            [](const MarginProbe& a, const MarginProbe& b) { return a.gamma > b.gamma; });
  report.gamma = gamma_accept;
  report.feasible = true;
  report.rho = accepted.probe.rho;
  report.x_factor = std::move(accepted.x.factor);
  report.y_factor = std::move(accepted.y.factor);
  if (accepted.x.dense.size()) report.x_factor.Z = solution_factor(accepted.x);
  if (accepted.y.dense.size()) report.y_factor.Z = solution_factor(accepted.y);
  return report;
}

}  // namespace hinfdae
