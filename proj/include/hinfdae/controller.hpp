#pragma once

#include <Eigen/Dense>
#include <utility>

#include "hinfdae/descriptor.hpp"
#include "hinfdae/hinfbt.hpp"
#include "hinfdae/riccati.hpp"

namespace hinfdae {

enum class ControllerKind { full, reduced };

// Central (minimum-entropy) output-feedback controller
//
//   E_k x' = A_k x + B_k y,   u = C_k x,
//
// built from the two normalized Riccati solutions at margin gamma:
// A_k = A - (1 - 1/gamma^2) E Y C^T C - B B^T X E Z, B_k = E Y C^T,
// C_k = -B^T X E Z with the coupling Z = (I - gamma^{-2} Y E^T X E)^{-1}.
// The closed loop with the design plant satisfies ||F(G, K)||_inf < gamma.
struct CentralController {
  DescriptorSystem sys;  // E_k, A_k, B_k, C_k with D = 0
  ControllerKind kind = ControllerKind::full;
  double gamma = 0.0;

  Eigen::Index order() const { return sys.order(); }
};

// Full-order controller of a constrained plant, realized on an orthonormal
// basis of ker J (the congruence is exact for every closed-loop quantity and
// keeps E_k invertible for time integration). The coupling matrix is applied
// through the factored Woodbury identity with the k x k core. Throws
// SpectralRadiusViolation when gamma^2 <= rho(Y E^T X E) and NotStabilizing
// when the resulting closed loop fails the eigenvalue check.
CentralController central_controller_full(const ConstrainedSystem& sys, const RiccatiSolution& x,
                                          const RiccatiSolution& y, double gamma);

// Same formulas for an ordinary descriptor plant with dense solutions.
CentralController central_controller_full(const DescriptorSystem& sys, const Eigen::MatrixXd& x,
                                          const Eigen::MatrixXd& y, double gamma);

// Galerkin restriction of the full-order solution factors to the reduced
// basis: Y_hat = (W^T E Z_f)(W^T E Z_f)^T, X_hat = (T^T E^T Z_r)(T^T E^T Z_r)^T.
// At full order these reproduce the balanced diagonal Sigma_1 pair.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> reduced_riccati_lift(const ReducedModel& rom,
                                                                 const Eigen::SparseMatrix<double>& e,
                                                                 const LowRankFactor& z_f,
                                                                 const LowRankFactor& z_r);

// Order-r controller from the reduced model and the restricted solutions,
// with Z_hat = (I_r - gamma^{-2} Y_hat X_hat)^{-1}. Throws NearSingularZ when
// that matrix has condition number >= 1e12, NotStabilizing when the reduced
// closed loop fails the eigenvalue check.
CentralController central_controller_reduced(const ReducedModel& rom,
                                             const Eigen::MatrixXd& y_hat,
                                             const Eigen::MatrixXd& x_hat, double gamma);

// Coprime-factor robustness test: a controller with effective margin
// gamma_effective is guaranteed to stabilize every plant within factor
// distance delta_norm < 1/gamma_effective.
bool robustness_predicate(double delta_norm, double gamma_effective);

}  // namespace hinfdae
