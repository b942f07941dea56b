#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <vector>

#include "hinfdae/descriptor.hpp"
#include "hinfdae/flowdae.hpp"

namespace hinfdae {

// The two normalized H-infinity Riccati equations, with beta^2 = 1 - 1/gamma^2:
//
//   filter:     A Y E^T + E Y A^T - beta^2 E Y C^T C Y E^T + B B^T = 0
//   regulator:  A^T X E + E^T X A - beta^2 E^T X B B^T X E + C^T C = 0
//
// The regulator is solved as a filter equation on the transposed system
// (A^T with B and C^T swapped), so there is a single core implementation.
enum class RiccatiKind { filter, regulator };

struct LowRankFactor {
  Eigen::MatrixXd Z;         // X ~ Z Z^T
  double column_tol = 1e-12;  // relative tolerance of the column compression
};

struct RiccatiSolution {
  Eigen::MatrixXd dense;  // set by the dense solvers; empty for low-rank results
  LowRankFactor factor;   // set by the low-rank solver; Z empty for dense results
  double residual_rel = 0.0;
  int iterations = 0;
  std::vector<std::complex<double>> shifts_used;

  bool low_rank() const { return dense.size() == 0; }
  // X as a dense matrix, materializing Z Z^T if needed.
  Eigen::MatrixXd materialize() const {
    return low_rank() ? Eigen::MatrixXd(factor.Z * factor.Z.transpose()) : dense;
  }
};

struct RiccatiOptions {
  int max_iter = 30;     // Newton iterations
  int shift_count = 12;  // ADI shifts per cycle
  double tol = 1e-8;     // relative residual acceptance
  // When nonempty, one JSON line per inner iteration is appended here:
  // {"iter": .., "residual": .., "rank": .., "shift": ".."}.
  std::string log_path;
};

// Stabilizing solution via the invariant subspace of the Hamiltonian matrix
// of the E-inverted equation, refined by a few Newton steps. The closed-loop
// pencil (filter: (A - beta^2 E Y C^T C, E); regulator: (A - beta^2 B B^T X E,
// E)) is verified stable. Requires invertible E, order <= 2000, beta^2 in
// (0, 1].
RiccatiSolution solve_care_dense(RiccatiKind kind, const DescriptorSystem& sys, double beta_sq);

// Relative residual of the equation at a dense symmetric candidate:
// numerator Frobenius norm over (norm of the constant term + norm of the
// E-weighted cross term).
double riccati_residual(RiccatiKind kind, const DescriptorSystem& sys, double beta_sq,
                        const Eigen::MatrixXd& x);

// Same residual for the constrained projected equation with X = Z Z^T, in
// factored form (cost O(n k^2)); the system matrices enter only through
// products with the factor.
double riccati_residual_lr(RiccatiKind kind, const ConstrainedSystem& sys, double beta_sq,
                           const Eigen::MatrixXd& z);

// Low-rank Newton-Kleinman/ADI solver for the projected equations of the
// constrained system. All operator inverses are realized projector-free
// through shifted saddle solves; right-hand sides stay in ker J throughout.
// Starts from zero when the constrained pencil is stable, otherwise from the
// feedback of the beta^2 = 1 solution computed on the kernel-compressed
// system.
RiccatiSolution solve_projected_lr(RiccatiKind kind, const ConstrainedSystem& sys, double beta_sq,
                                   const RiccatiOptions& opts = {});

// Dense brute-force reference for solve_projected_lr: forms the discrete
// Leray projector explicitly, assembles the projected coefficients, solves on
// an orthonormal basis of ker J, and lifts back. Guarded at order 300.
RiccatiSolution oracle_projected_dense(RiccatiKind kind, const ConstrainedSystem& sys,
                                       double beta_sq);

}  // namespace hinfdae
