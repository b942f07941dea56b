#include "hinfdae/norms.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "hinfdae/errors.hpp"

namespace hinfdae {

namespace {

// State-space data with E folded into A and B.
struct OdeRealization {
  Eigen::MatrixXd A, B, C, D;
};

OdeRealization fold_e(const DescriptorSystem& sys) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys.E);
  OdeRealization ode{lu.solve(sys.A), lu.solve(sys.B), sys.C, sys.D};
  const double resid = (sys.E * ode.A - sys.A).norm() / std::max(sys.A.norm(), 1e-300);
  if (!(resid < 1e-8)) throw SingularPencil("E is numerically singular");
  return ode;
}

// True when the Hamiltonian test matrix at level gamma has an eigenvalue on
// the imaginary axis, i.e. gamma is below some singular value of G(i omega).
bool level_is_crossed(const OdeRealization& ode, double gamma) {
  const Eigen::Index n = ode.A.rows(), m = ode.B.cols(), p = ode.C.rows();
  const Eigen::MatrixXd r = ode.D.transpose() * ode.D -
                            gamma * gamma * Eigen::MatrixXd::Identity(m, m);
  const Eigen::MatrixXd s = ode.D * ode.D.transpose() -
                            gamma * gamma * Eigen::MatrixXd::Identity(p, p);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu_r(r), lu_s(s);

  Eigen::MatrixXd h(2 * n, 2 * n);
  const Eigen::MatrixXd a_shift = ode.A - ode.B * lu_r.solve(ode.D.transpose() * ode.C);
  h.topLeftCorner(n, n) = a_shift;
  h.topRightCorner(n, n) = -gamma * ode.B * lu_r.solve(ode.B.transpose());
  h.bottomLeftCorner(n, n) = gamma * ode.C.transpose() * lu_s.solve(ode.C);
  h.bottomRightCorner(n, n) = -a_shift.transpose();

  Eigen::EigenSolver<Eigen::MatrixXd> es(h, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw EigFailure("eigenvalue iteration failed on the Hamiltonian test matrix");
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<double> lam = es.eigenvalues()(i);
    if (std::abs(lam.real()) <= 1e-9 * std::max(1.0, std::abs(lam))) return true;
  }
  return false;
}

}  // namespace

Eigen::VectorXd log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw InvalidInput("bad log grid");
  Eigen::VectorXd g(count);
  const double l0 = std::log10(lo), l1 = std::log10(hi);
  for (int i = 0; i < count; ++i)
    g(i) = std::pow(10.0, l0 + (l1 - l0) * i / (count - 1));
  return g;
}

double sigma_max_at(const DescriptorSystem& sys, double omega) {
  const Eigen::MatrixXcd g = eval_transfer(sys, std::complex<double>(0.0, omega));
  if (g.size() == 0) return 0.0;
  return g.jacobiSvd().singularValues()(0);
}

Eigen::VectorXd sweep_sigma_max(const DescriptorSystem& sys, const Eigen::VectorXd& omegas) {
  Eigen::VectorXd out(omegas.size());
  for (Eigen::Index i = 0; i < omegas.size(); ++i) out(i) = sigma_max_at(sys, omegas(i));
  return out;
}

double hinf_norm(const DescriptorSystem& sys, double tol) {
  check_dimensions(sys);
  if (!(tol > 0.0) || tol > 1e-2) throw InvalidInput("hinf_norm tolerance must be in (0, 1e-2]");
  if (sys.inputs() == 0 || sys.outputs() == 0) return 0.0;

  const StabilityReport stab = is_stable(sys);
  if (!stab.stable) throw UnstableSystem("hinf_norm requires a stable system");

  const double d_norm =
      sys.D.size() ? sys.D.jacobiSvd().singularValues()(0) : 0.0;
  if (sys.B.norm() == 0.0 || sys.C.norm() == 0.0) return d_norm;

  // Lower estimate by sampling, with local refinement around the best point.
  const Eigen::VectorXd grid = log_grid(1e-4, 1e4, 400);
  double peak = d_norm, peak_omega = -1.0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double s = sigma_max_at(sys, grid(i));
    if (s > peak) {
      peak = s;
      peak_omega = grid(i);
    }
  }
  if (peak_omega > 0.0) {
    double lo = peak_omega / std::pow(10.0, 8.0 / 399.0);
    double hi = peak_omega * std::pow(10.0, 8.0 / 399.0);
    for (int it = 0; it < 60; ++it) {
      const double w1 = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) / 3.0);
      const double w2 = std::exp(std::log(lo) + 2.0 * (std::log(hi) - std::log(lo)) / 3.0);
      const double s1 = sigma_max_at(sys, w1), s2 = sigma_max_at(sys, w2);
      peak = std::max({peak, s1, s2});
      if (s1 < s2)
        lo = w1;
      else
        hi = w2;
      if (hi - lo <= 1e-12 * hi) break;
    }
  }
  if (peak <= 1e-300) return 0.0;

  const OdeRealization ode = fold_e(sys);

  // Close the bracket from above with the Hamiltonian level test.
  double lo = peak * (1.0 - 1e-9);
  double hi = std::max(peak * (1.0 + tol), peak * 1.01);
  int expand = 0;
  while (level_is_crossed(ode, hi)) {
    lo = hi;
    hi *= 1.5;
    if (++expand > 200) throw BracketFailure("H-infinity level search failed to bracket");
  }
  while ((hi - lo) > 0.25 * tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (level_is_crossed(ode, mid))
      lo = mid;
    else
      hi = mid;
  }
  const double result = 0.5 * (lo + hi);
  if (std::abs(result - peak) > 10.0 * tol * std::max(result, peak))
    throw BracketFailure("frequency sweep and Hamiltonian bisection disagree");
  return result;
}

}  // namespace hinfdae
