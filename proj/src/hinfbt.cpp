#include "hinfdae/hinfbt.hpp"

#include <cmath>
#include <limits>

#include "hinfdae/errors.hpp"
#include "hinfdae/norms.hpp"

namespace hinfdae {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd characteristic_values(const LowRankFactor& l, const LowRankFactor& r,
                               const Eigen::SparseMatrix<double>& e) {
  if (l.Z.size() == 0 || r.Z.size() == 0) return VectorXd();
  if (l.Z.rows() != e.rows() || r.Z.rows() != e.cols())
    throw DimensionMismatch("characteristic values: factor rows do not match E");
  const MatrixXd core = l.Z.transpose() * (e * r.Z);
  return core.jacobiSvd().singularValues();
}

ReducedModel reduce(const ConstrainedSystem& sys, const LowRankFactor& l, const LowRankFactor& r,
                    double gamma, const ReductionCut& cut) {
  if (!(gamma > 1.0)) throw InvalidInput("reduction needs gamma > 1");
  if ((cut.order >= 1) == (cut.tol > 0.0))
    throw InvalidInput("exactly one cut rule (order or tol) must be set");
  if (l.Z.rows() != sys.n_v() || r.Z.rows() != sys.n_v())
    throw DimensionMismatch("reduction: factor rows do not match the state dimension");

  const MatrixXd core = l.Z.transpose() * (sys.E * r.Z);
  if (core.size() == 0) throw EmptyModel("reduction: a solution factor is empty");
  Eigen::JacobiSVD<MatrixXd> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd sigma = svd.singularValues();
  const double s1 = sigma(0);
  if (!(s1 > 0.0)) throw EmptyModel("reduction: all balancing values are zero");

  Index k = 0;
  if (cut.order >= 1) {
    // Numerical rank of the core limits how far the square-root scaling
    // 1/sqrt(sigma) stays meaningful.
    Index rank = 0;
    while (rank < sigma.size() && sigma(rank) > 1e-14 * s1) ++rank;
    if (cut.order > rank)
      throw InvalidInput("requested order exceeds the numerical rank of the balancing core");
    k = cut.order;
  } else {
    while (k < sigma.size() && sigma(k) >= cut.tol) ++k;
    if (k == 0) throw EmptyModel("reduction threshold keeps no balancing values");
  }
  if (k < sigma.size() && sigma(k - 1) - sigma(k) < 1e-12 * s1)
    throw TieAtCut("truncation boundary would split a cluster of balancing values");

  const VectorXd scale = sigma.head(k).cwiseSqrt().cwiseInverse();
  ReducedModel out;
  out.W = l.Z * svd.matrixU().leftCols(k) * scale.asDiagonal();
  out.T = r.Z * svd.matrixV().leftCols(k) * scale.asDiagonal();
  out.sigma = sigma;
  out.r = k;
  out.gamma = gamma;
  out.rom = make_system(MatrixXd::Identity(k, k), out.W.transpose() * (sys.A * out.T),
                        out.W.transpose() * sys.B, sys.C * out.T);
  return out;
}

double error_bound(const VectorXd& sigma_tail, double gamma) {
  if (!(gamma > 1.0)) throw InvalidInput("error bound needs gamma > 1");
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  double eps = 0.0;
  for (Index i = 0; i < sigma_tail.size(); ++i)
    eps += 2.0 * sigma_tail(i) / std::sqrt(1.0 + beta_sq * sigma_tail(i) * sigma_tail(i));
  return eps;
}

bool apriori_stab_check(double eps, double gamma) {
  if (!(gamma > 1.0) || eps < 0.0) throw InvalidInput("stabilization check needs gamma > 1, eps >= 0");
  const double beta = std::sqrt(1.0 - 1.0 / (gamma * gamma));
  return eps * (beta + gamma) < 1.0;
}

double performance_bound(double eps, double gamma) {
  if (!(gamma > 1.0) || eps < 0.0) throw InvalidInput("performance bound needs gamma > 1, eps >= 0");
  const double beta = std::sqrt(1.0 - 1.0 / (gamma * gamma));
  if (!(eps * (beta + gamma) < 1.0))
    throw BoundVacuous("performance bound is vacuous: eps (beta + gamma) >= 1");
  return gamma + eps * (1.0 + gamma) * (1.0 + beta + gamma) / (1.0 - eps * (beta + gamma));
}

Certificate certify(const VectorXd& sigma, Index r, double gamma) {
  if (r < 0 || r > sigma.size()) throw InvalidInput("certificate: r outside the sigma list");
  Certificate cert;
  cert.gamma = gamma;
  cert.beta = std::sqrt(1.0 - 1.0 / (gamma * gamma));
  cert.eps = error_bound(sigma.tail(sigma.size() - r), gamma);
  cert.apriori_ok = apriori_stab_check(cert.eps, gamma);
  cert.gamma_GK = cert.apriori_ok ? performance_bound(cert.eps, gamma)
                                  : std::numeric_limits<double>::infinity();
  return cert;
}

AposterioriCheck aposteriori_stab_check(const ConstrainedSystem& g, const ReducedModel& rom,
                                        const DescriptorSystem& k_hat, const LowRankFactor& y,
                                        double norm_tol) {
  const double gamma = rom.gamma;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  const double beta = std::sqrt(beta_sq);

  LowRankFactor y_full = y;
  if (y_full.Z.size() == 0)
    y_full = solve_projected_lr(RiccatiKind::filter, g, beta_sq).factor;
  CoprimePair full = coprime_realization(g, y_full, gamma);

  // The reduced model is small: its own exact filter solution keeps the
  // factorization normalized instead of inheriting the truncation error of
  // the lifted one.
  RiccatiSolution y_rom = solve_care_dense(RiccatiKind::filter, rom.rom, beta_sq);
  CoprimePair reduced = coprime_realization(rom.rom, y_rom.dense, gamma);

  AposterioriCheck out;
  out.eps_hat = hinf_norm(stacked_difference(full, reduced), norm_tol) / beta;
  out.gamma_hat = hinf_norm(lft_closed_loop(build_normalized_plant(rom.rom), k_hat), norm_tol);
  out.ok = out.eps_hat * (beta + out.gamma_hat) < 1.0;
  return out;
}

}  // namespace hinfdae
