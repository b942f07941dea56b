#pragma once

#include <Eigen/Dense>

#include "hinfdae/descriptor.hpp"

namespace hinfdae {

// Largest singular value of G(i omega).
double sigma_max_at(const DescriptorSystem& sys, double omega);

// sigma_max(G(i omega)) over a frequency grid; used for sweeps and oracles.
Eigen::VectorXd sweep_sigma_max(const DescriptorSystem& sys, const Eigen::VectorXd& omegas);

// Log-spaced grid helper (inclusive endpoints, count >= 2).
Eigen::VectorXd log_grid(double lo, double hi, int count);

// H-infinity norm of a stable descriptor system, to relative accuracy `tol`
// (0 < tol <= 1e-2). A 400-point log-spaced sweep over [1e-4, 1e4] with local
// refinement brackets the peak from below; a bisection on the imaginary-axis
// eigenvalues of the Hamiltonian matrix of the E-inverted realization closes
// the bracket from above. Throws UnstableSystem for unstable input and
// BracketFailure when the two estimates cannot be reconciled within 10*tol.
double hinf_norm(const DescriptorSystem& sys, double tol);

}  // namespace hinfdae
