#pragma once

#include <Eigen/Dense>
#include <optional>

#include "hinfdae/coprime.hpp"
#include "hinfdae/descriptor.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/riccati.hpp"

namespace hinfdae {

// Square-root balanced truncation on the pair of normalized Riccati solution
// factors (X ~ L L^T regulator, Y ~ R R^T filter) at a common margin gamma.
// The balancing weights sigma_k are the singular values of L^T E R; their
// squares are the nonzero eigenvalues of Y E^T X E.
struct ReducedModel {
  DescriptorSystem rom;   // E = I_r structurally
  Eigen::MatrixXd W, T;   // n x r truncation matrices, W^T E T = I_r
  Eigen::VectorXd sigma;  // full nonincreasing list of balancing values
  Eigen::Index r = 0;
  double gamma = 0.0;
};

// Exactly one of the two cut rules is active: a fixed order r >= 1, or a
// threshold keeping every sigma_k >= tol.
struct ReductionCut {
  Eigen::Index order = -1;
  double tol = -1.0;
};

struct Certificate {
  double eps = 0.0;    // truncation-tail bound
  double beta = 0.0;   // sqrt(1 - 1/gamma^2)
  double gamma = 0.0;  // margin the reduction was taken at
  bool apriori_ok = false;
  // gamma + eps(1+gamma)(1+beta+gamma)/(1-eps(beta+gamma)); +inf when the
  // a-priori condition fails and the bound is vacuous.
  double gamma_GK = 0.0;
  std::optional<double> eps_hat;  // measured factor error, when evaluated
  std::optional<double> gamma_hat;
  std::optional<bool> aposteriori_ok;
};

// Singular values of L^T E R through the small k_L x k_R matrix.
Eigen::VectorXd characteristic_values(const LowRankFactor& l, const LowRankFactor& r,
                                      const Eigen::SparseMatrix<double>& e);

// Square-root truncation: W = L U1 S1^{-1/2}, T = R V1 S1^{-1/2} from the
// SVD of L^T E R, and the reduced realization (I_r, W^T A T, W^T B, C T).
// The factors are constraint-kernel compatible, so the projected A acts as a
// plain multiplication. Throws EmptyModel when the rule keeps nothing and
// TieAtCut when it would split a cluster (sigma_r - sigma_{r+1} <
// 1e-12 sigma_1).
ReducedModel reduce(const ConstrainedSystem& sys, const LowRankFactor& l, const LowRankFactor& r,
                    double gamma, const ReductionCut& cut);

// Truncation-tail bound 2 sum_k sigma_k / sqrt(1 + beta^2 sigma_k^2) over the
// discarded values.
double error_bound(const Eigen::VectorXd& sigma_tail, double gamma);

// Sufficient stabilization condition eps (beta + gamma) < 1.
bool apriori_stab_check(double eps, double gamma);

// Effective margin gamma + eps(1+gamma)(1+beta+gamma)/(1-eps(beta+gamma));
// its reciprocal is the guaranteed coprime-factor robustness radius of the
// reduced controller on the full plant. Throws BoundVacuous when
// eps (beta + gamma) >= 1.
double performance_bound(double eps, double gamma);

// Tail bound, a-priori check and effective margin for truncating after the
// first r values of sigma.
Certificate certify(const Eigen::VectorXd& sigma, Eigen::Index r, double gamma);

struct AposterioriCheck {
  bool ok = false;
  double eps_hat = 0.0;
  double gamma_hat = 0.0;
};

// Measured counterpart of the a-priori certificate: eps_hat is the scaled
// factor error beta^{-1} ||[beta(N - N_hat), M - M_hat]||_inf between the
// factorizations of the plant and of the reduced model at the margin
// rom.gamma, and gamma_hat = ||F(G_hat, K_hat)||_inf on the reduced closed
// loop. The check passes when eps_hat (beta + gamma_hat) < 1. `y` is the
// plant's filter factor; when empty it is re-solved internally. The reduced
// model's factorization uses its own dense filter solution.
AposterioriCheck aposteriori_stab_check(const ConstrainedSystem& g, const ReducedModel& rom,
                                        const DescriptorSystem& k_hat,
                                        const LowRankFactor& y = {}, double norm_tol = 1e-6);

}  // namespace hinfdae
