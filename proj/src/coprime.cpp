#include "hinfdae/coprime.hpp"

#include <cmath>

#include "hinfdae/errors.hpp"
#include "hinfdae/norms.hpp"

namespace hinfdae {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

// Assembles the stacked pair from the (possibly compressed) coefficients and
// the observer gain L = beta^2 E Y C^T.
CoprimePair assemble_pair(const MatrixXd& e, const MatrixXd& a, const MatrixXd& b,
                          const MatrixXd& c, const MatrixXd& l, double gamma) {
  const Index m = b.cols();
  const Index p = c.rows();
  const double beta = std::sqrt(1.0 - 1.0 / (gamma * gamma));

  MatrixXd a_o = a - l * c;
  const Index n = a_o.rows();
  StabilityReport stab =
      is_stable({e, a_o, MatrixXd::Zero(n, 0), MatrixXd::Zero(0, n), MatrixXd::Zero(0, 0)});
  if (!stab.stable)
    throw NotStabilizing("coprime factorization: the filter gain does not stabilize (A - LC, E)");

  MatrixXd b_stack(b.rows(), m + p);
  b_stack << beta * b, -l;
  MatrixXd d = MatrixXd::Zero(p, m + p);
  d.rightCols(p).setIdentity();

  CoprimePair pair;
  pair.stacked = make_system(e, std::move(a_o), std::move(b_stack), c, std::move(d));
  pair.gamma = gamma;
  pair.beta = beta;
  pair.m = m;
  pair.p = p;
  return pair;
}

}  // namespace

DescriptorSystem CoprimePair::n_sys() const {
  return make_system(stacked.E, stacked.A, stacked.B.leftCols(m), stacked.C,
                     stacked.D.leftCols(m));
}

DescriptorSystem CoprimePair::m_sys() const {
  return make_system(stacked.E, stacked.A, stacked.B.rightCols(p), stacked.C,
                     stacked.D.rightCols(p));
}

CoprimePair coprime_realization(const DescriptorSystem& sys, const MatrixXd& y, double gamma) {
  check_dimensions(sys);
  if (!(gamma > 1.0)) throw InvalidInput("coprime factorization needs gamma > 1");
  if (y.rows() != sys.order() || y.cols() != sys.order())
    throw DimensionMismatch("filter solution shape does not match the system order");
  if (sys.D.size() && sys.D.norm() != 0.0)
    throw InvalidInput("coprime factorization expects a strictly proper plant");

  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  MatrixXd l = beta_sq * (sys.E * y * sys.C.transpose());
  return assemble_pair(sys.E, sys.A, sys.B, sys.C, l, gamma);
}

CoprimePair coprime_realization(const ConstrainedSystem& sys, const LowRankFactor& y,
                                double gamma) {
  if (!(gamma > 1.0)) throw InvalidInput("coprime factorization needs gamma > 1");
  if (y.Z.size() && y.Z.rows() != sys.n_v())
    throw DimensionMismatch("filter factor rows do not match the state dimension");
  if (sys.n_p() > 0 && y.Z.size()) {
    const double drift = (sys.J * y.Z).norm();
    if (!(drift <= 1e-6 * std::max(1.0, y.Z.norm())))
      throw InvalidInput("filter factor is not constraint-kernel compatible");
  }

  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  CompressedSystem comp = compress_ker(sys);
  const Index r = comp.sys.order();

  // L restricted to the kernel basis, with Y entering only through its
  // factor: theta^T (E Z)(C Z)^T. Z = theta theta^T Z for kernel-compatible
  // factors, so C Z is the compressed output map applied to theta^T Z.
  MatrixXd l = MatrixXd::Zero(r, sys.outputs());
  if (y.Z.size()) {
    MatrixXd zc = comp.theta.transpose() * y.Z;
    l = beta_sq * (comp.sys.E * zc) * (comp.sys.C * zc).transpose();
  }
  return assemble_pair(comp.sys.E, comp.sys.A, comp.sys.B, comp.sys.C, l, gamma);
}

DescriptorSystem stacked_difference(const CoprimePair& g, const CoprimePair& g_delta) {
  if (g.m != g_delta.m || g.p != g_delta.p)
    throw DimensionMismatch("factor error: channel widths differ");
  if (std::abs(g.gamma - g_delta.gamma) > 1e-12 * g.gamma)
    throw InvalidInput("factor error: the factorizations were taken at different margins");

  const Index n1 = g.stacked.order();
  const Index n2 = g_delta.stacked.order();

  MatrixXd e = MatrixXd::Zero(n1 + n2, n1 + n2);
  e.topLeftCorner(n1, n1) = g.stacked.E;
  e.bottomRightCorner(n2, n2) = g_delta.stacked.E;
  MatrixXd a = MatrixXd::Zero(n1 + n2, n1 + n2);
  a.topLeftCorner(n1, n1) = g.stacked.A;
  a.bottomRightCorner(n2, n2) = g_delta.stacked.A;

  // The identity feedthroughs of the M channels cancel in the difference.
  MatrixXd b(n1 + n2, g.m + g.p);
  b.topRows(n1) = g.stacked.B;
  b.bottomRows(n2) = g_delta.stacked.B;
  MatrixXd c(g.p, n1 + n2);
  c << g.stacked.C, -g_delta.stacked.C;

  return make_system(std::move(e), std::move(a), std::move(b), std::move(c));
}

DescriptorSystem coprime_error_system(const CoprimePair& g, const CoprimePair& g_delta) {
  DescriptorSystem diff = stacked_difference(g, g_delta);
  // Undo the beta scaling of the N channel so the difference measures the
  // plain stacked factors [N - N_d, M - M_d].
  diff.B.leftCols(g.m).topRows(g.stacked.order()) /= g.beta;
  diff.B.leftCols(g.m).bottomRows(g_delta.stacked.order()) /= g_delta.beta;
  return diff;
}

double coprime_error(const ConstrainedSystem& g, const ConstrainedSystem& g_delta,
                     const LowRankFactor& y, double gamma, double tol) {
  if (g.inputs() != g_delta.inputs() || g.outputs() != g_delta.outputs())
    throw DimensionMismatch("factor error: the plants have different channel dimensions");

  CoprimePair pair = coprime_realization(g, y, gamma);
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  RiccatiSolution y_delta = solve_projected_lr(RiccatiKind::filter, g_delta, beta_sq);
  CoprimePair pair_delta = coprime_realization(g_delta, y_delta.factor, gamma);

  DescriptorSystem diff = coprime_error_system(pair, pair_delta);

  // Identical plants give an exactly-cancelling realization whose transfer is
  // zero but whose B, C blocks are not; skip the level test on a flat sweep.
  const Eigen::VectorXd omegas = log_grid(1e-4, 1e4, 40);
  const double peak = sweep_sigma_max(diff, omegas).maxCoeff();
  if (peak < 1e-10) return peak;
  return hinf_norm(diff, tol);
}

}  // namespace hinfdae
