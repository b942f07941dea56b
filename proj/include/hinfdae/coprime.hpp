#pragma once

#include <Eigen/Dense>

#include "hinfdae/descriptor.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/riccati.hpp"

namespace hinfdae {

// Normalized left coprime factorization G = M^{-1} N built from the filter
// Riccati solution Y at margin gamma (beta^2 = 1 - 1/gamma^2):
//
//   [N M](s) = C (sE - A_o)^{-1} [beta B, -L] + [0 I_p],
//   A_o = A - L C,   L = beta^2 E Y C^T.
//
// The stored N channel carries the beta scaling, which is exactly what makes
// the pair normalized: with it, [N M](iw) [N M](iw)* = I_p on the whole
// imaginary axis. The plain (unscaled) factor N/beta satisfies G = M^{-1} N
// instead; coprime_error works with the unscaled channel.
struct CoprimePair {
  DescriptorSystem stacked;  // p outputs, m + p inputs, D = [0 I_p]
  double gamma = 0.0;
  double beta = 0.0;
  Eigen::Index m = 0;  // plant inputs (width of the N channel)
  Eigen::Index p = 0;  // plant outputs (width of the M channel)

  // Sub-realizations by input-column split of the stacked system.
  DescriptorSystem n_sys() const;
  DescriptorSystem m_sys() const;
};

// Factorization of an ordinary descriptor system from a dense filter
// solution. Throws NotStabilizing when the observer pencil (A_o, E) is not
// stable, InvalidInput for gamma <= 1 or shape mismatches.
CoprimePair coprime_realization(const DescriptorSystem& sys, const Eigen::MatrixXd& y,
                                double gamma);

// Factorization of a constrained system from a low-rank filter factor
// (Y ~ Z Z^T with range(Z) in ker J). The realization is formed on an
// orthonormal basis of ker J — exact for every frequency-domain quantity —
// and the low-rank structure E Y C^T = (E Z)(C Z)^T stays factored.
CoprimePair coprime_realization(const ConstrainedSystem& sys, const LowRankFactor& y,
                                double gamma);

// Plain difference of two stored stacked realizations taken at the same
// gamma: since both carry the beta-scaled N channel, its H-infinity norm is
// the scaled factor error ||[beta(N - N_d), M - M_d]||_inf.
DescriptorSystem stacked_difference(const CoprimePair& g, const CoprimePair& g_delta);

// Stacked factor-error system [N - N_d, M - M_d] of two factorizations taken
// at the same gamma, with the N channels unscaled so the norm matches the
// coprime-factor uncertainty measure of the robustness radius 1/gamma.
DescriptorSystem coprime_error_system(const CoprimePair& g, const CoprimePair& g_delta);

// || [N - N_d, M - M_d] ||_inf between the factorizations of two constrained
// plants at margin gamma. `y` is the filter factor of `g`; the perturbed
// plant's factor is solved internally at the same gamma. `tol` is the
// H-infinity norm tolerance.
double coprime_error(const ConstrainedSystem& g, const ConstrainedSystem& g_delta,
                     const LowRankFactor& y, double gamma, double tol);

}  // namespace hinfdae
