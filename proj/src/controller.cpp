#include "hinfdae/controller.hpp"

#include <cmath>

#include "hinfdae/errors.hpp"

namespace hinfdae {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

// Controller realization from dense coefficients and solution factors
// (X = zx zx^T, Y = zy zy^T), shared by the compressed-constrained and the
// plain descriptor paths.
CentralController assemble_full(const MatrixXd& e, const MatrixXd& a, const MatrixXd& b,
                                const MatrixXd& c, const MatrixXd& zx, const MatrixXd& zy,
                                double gamma) {
  const double gm2 = 1.0 / (gamma * gamma);
  const double beta_sq = 1.0 - gm2;
  const Index n = a.rows();

  const MatrixXd ezy = e * zy;          // n x ky
  const MatrixXd xe = zx * (zx.transpose() * e);  // X E, n x n
  // Existence first: the coupling matrix is singular on the boundary.
  double rho = 0.0;
  if (zx.size() && zy.size()) {
    const MatrixXd core = zx.transpose() * ezy;
    if (core.size()) {
      const double smax = core.jacobiSvd().singularValues()(0);
      rho = smax * smax;
    }
  }
  if (!(gamma * gamma > rho))
    throw SpectralRadiusViolation("controller synthesis: gamma^2 <= rho(Y E^T X E)");

  // Z = (I - gm2 Y E^T X E)^{-1} applied from the left through the factored
  // Woodbury identity: Z = I + gm2 zy cap^{-1} (zy^T E^T X E) with the
  // k x k core cap = I - gm2 (zy^T E^T zx)(zx^T E zy).
  MatrixXd bxe = b.transpose() * xe;  // m x n,  B^T X E
  MatrixXd cz;                        // C_k = -B^T X E Z
  if (zy.size() && zx.size()) {
    const MatrixXd zy_e_zx = ezy.transpose() * zx;  // ky x kx
    const MatrixXd cap =
        MatrixXd::Identity(zy.cols(), zy.cols()) - gm2 * zy_e_zx * zy_e_zx.transpose();
    const MatrixXd vt = ezy.transpose() * xe;  // ky x n,  zy^T E^T X E
    cz = -(bxe + gm2 * (bxe * zy) * cap.ldlt().solve(vt));
  } else {
    cz = -bxe;
  }

  MatrixXd a_k = a - beta_sq * ezy * (zy.transpose() * c.transpose()) * c + b * cz;
  MatrixXd b_k = ezy * (zy.transpose() * c.transpose());

  CentralController out;
  out.sys = make_system(e, std::move(a_k), std::move(b_k), std::move(cz));
  out.kind = ControllerKind::full;
  out.gamma = gamma;

  // The defining property, not an assumption: the loop it was designed for
  // must be stable.
  MatrixXd e_cl = MatrixXd::Zero(2 * n, 2 * n);
  e_cl.topLeftCorner(n, n) = e;
  e_cl.bottomRightCorner(n, n) = out.sys.E;
  MatrixXd a_cl(2 * n, 2 * n);
  a_cl << a, b * out.sys.C, out.sys.B * c, out.sys.A;
  if (!is_stable({e_cl, a_cl, MatrixXd::Zero(2 * n, 0), MatrixXd::Zero(0, 2 * n),
                  MatrixXd::Zero(0, 0)})
           .stable)
    throw NotStabilizing("central controller failed the closed-loop eigenvalue check");
  return out;
}

MatrixXd dense_factor(const MatrixXd& x) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (x + x.transpose()));
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace

CentralController central_controller_full(const ConstrainedSystem& sys, const RiccatiSolution& x,
                                          const RiccatiSolution& y, double gamma) {
  if (!(gamma > 1.0)) throw InvalidInput("controller synthesis needs gamma > 1");
  CompressedSystem comp = compress_ker(sys);
  const MatrixXd zx_full = x.low_rank() ? x.factor.Z : dense_factor(x.dense);
  const MatrixXd zy_full = y.low_rank() ? y.factor.Z : dense_factor(y.dense);
  // Solutions live in ker J, so restricting the factors is exact.
  const MatrixXd zx = comp.theta.transpose() * zx_full;
  const MatrixXd zy = comp.theta.transpose() * zy_full;
  return assemble_full(comp.sys.E, comp.sys.A, comp.sys.B, comp.sys.C, zx, zy, gamma);
}

CentralController central_controller_full(const DescriptorSystem& sys, const MatrixXd& x,
                                          const MatrixXd& y, double gamma) {
  if (!(gamma > 1.0)) throw InvalidInput("controller synthesis needs gamma > 1");
  check_dimensions(sys);
  if (x.rows() != sys.order() || y.rows() != sys.order())
    throw DimensionMismatch("controller synthesis: solution shape mismatch");
  return assemble_full(sys.E, sys.A, sys.B, sys.C, dense_factor(x), dense_factor(y), gamma);
}

std::pair<MatrixXd, MatrixXd> reduced_riccati_lift(const ReducedModel& rom,
                                                   const Eigen::SparseMatrix<double>& e,
                                                   const LowRankFactor& z_f,
                                                   const LowRankFactor& z_r) {
  const Index r = rom.r;
  MatrixXd y_hat = MatrixXd::Zero(r, r);
  MatrixXd x_hat = MatrixXd::Zero(r, r);
  if (z_f.Z.size()) {
    const MatrixXd g = rom.W.transpose() * (e * z_f.Z);
    y_hat = g * g.transpose();
  }
  if (z_r.Z.size()) {
    const MatrixXd g = rom.T.transpose() * (e.transpose() * z_r.Z);
    x_hat = g * g.transpose();
  }
  return {y_hat, x_hat};
}

CentralController central_controller_reduced(const ReducedModel& rom, const MatrixXd& y_hat,
                                             const MatrixXd& x_hat, double gamma) {
  if (!(gamma > 1.0)) throw InvalidInput("controller synthesis needs gamma > 1");
  const Index r = rom.r;
  if (y_hat.rows() != r || y_hat.cols() != r || x_hat.rows() != r || x_hat.cols() != r)
    throw DimensionMismatch("controller synthesis: restricted solution shape mismatch");

  const double gm2 = 1.0 / (gamma * gamma);
  const MatrixXd z_core = MatrixXd::Identity(r, r) - gm2 * y_hat * x_hat;
  {
    const Eigen::VectorXd sv = z_core.jacobiSvd().singularValues();
    if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) >= 1e12)
      throw NearSingularZ("reduced coupling matrix is numerically singular");
  }
  const MatrixXd cz = -(z_core.transpose().partialPivLu().solve(
      (x_hat * rom.rom.B).eval()));  // Z^T X_hat B_hat, transposed below

  const MatrixXd& a = rom.rom.A;
  const MatrixXd& b = rom.rom.B;
  const MatrixXd& c = rom.rom.C;
  MatrixXd c_k = cz.transpose();  // -B_hat^T X_hat Z_hat
  MatrixXd a_k = a - (1.0 - gm2) * y_hat * c.transpose() * c + b * c_k;
  MatrixXd b_k = y_hat * c.transpose();

  CentralController out;
  out.sys = make_system(MatrixXd::Identity(r, r), std::move(a_k), std::move(b_k), std::move(c_k));
  out.kind = ControllerKind::reduced;
  out.gamma = gamma;

  if (!is_stable(lft_closed_loop(build_normalized_plant(rom.rom), out.sys)).stable)
    throw NotStabilizing("reduced central controller failed the design closed-loop check");
  return out;
}

bool robustness_predicate(double delta_norm, double gamma_effective) {
  if (delta_norm < 0.0 || !(gamma_effective > 0.0))
    throw InvalidInput("robustness predicate needs delta_norm >= 0, gamma_effective > 0");
  return delta_norm < 1.0 / gamma_effective;
}

}  // namespace hinfdae
