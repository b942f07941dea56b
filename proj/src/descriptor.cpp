#include "hinfdae/descriptor.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <vector>

#include "hinfdae/errors.hpp"

namespace hinfdae {

void check_dimensions(const DescriptorSystem& sys) {
  const Eigen::Index n = sys.A.rows();
  if (sys.A.cols() != n) throw DimensionMismatch("A must be square");
  if (sys.E.rows() != n || sys.E.cols() != n)
    throw DimensionMismatch("E must match the order of A");
  if (sys.B.rows() != n) throw DimensionMismatch("B must have as many rows as A");
  if (sys.C.cols() != n) throw DimensionMismatch("C must have as many columns as A");
  if (sys.D.rows() != sys.C.rows() || sys.D.cols() != sys.B.cols())
    throw DimensionMismatch("D must be outputs x inputs");
}

DescriptorSystem make_system(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B,
                             Eigen::MatrixXd C) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(C.rows(), B.cols());
  return make_system(std::move(E), std::move(A), std::move(B), std::move(C), std::move(D));
}

DescriptorSystem make_system(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B,
                             Eigen::MatrixXd C, Eigen::MatrixXd D) {
  DescriptorSystem sys{std::move(E), std::move(A), std::move(B), std::move(C), std::move(D)};
  check_dimensions(sys);
  return sys;
}

Eigen::MatrixXcd eval_transfer(const DescriptorSystem& sys, std::complex<double> s) {
  check_dimensions(sys);
  const Eigen::MatrixXcd pencil = s * sys.E.cast<std::complex<double>>() -
                                  sys.A.cast<std::complex<double>>();
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(pencil);
  const Eigen::MatrixXcd x = lu.solve(sys.B.cast<std::complex<double>>());
  const double rhs_norm = sys.B.norm();
  if (rhs_norm > 0.0) {
    const double resid = (pencil * x - sys.B.cast<std::complex<double>>()).norm() / rhs_norm;
    if (!(resid < 1e-8))
      throw SingularPencil("sE - A numerically singular at the requested point");
  }
  return sys.C.cast<std::complex<double>>() * x + sys.D.cast<std::complex<double>>();
}

StabilityReport is_stable(const DescriptorSystem& sys) {
  check_dimensions(sys);
  if (sys.order() == 0) return StabilityReport{true, Eigen::VectorXcd()};

  Eigen::GeneralizedEigenSolver<Eigen::MatrixXd> ges;
  ges.compute(sys.A, sys.E, /*computeEigenvectors=*/false);
  if (ges.info() != Eigen::Success)
    throw EigFailure("QZ iteration failed on the (A, E) pencil");

  const auto& alphas = ges.alphas();
  const auto& betas = ges.betas();
  const double scale = std::max(sys.A.norm(), 1.0);

  std::vector<std::complex<double>> finite;
  finite.reserve(static_cast<size_t>(alphas.size()));
  for (Eigen::Index i = 0; i < alphas.size(); ++i) {
    // Infinite eigenvalues of the pencil show up as beta == 0.
    if (std::abs(betas(i)) <= 1e-14 * scale) continue;
    finite.push_back(alphas(i) / betas(i));
  }
  std::sort(finite.begin(), finite.end(),
            [](const auto& a, const auto& b) { return a.real() > b.real(); });

  StabilityReport report;
  report.eigenvalues.resize(static_cast<Eigen::Index>(finite.size()));
  for (size_t i = 0; i < finite.size(); ++i)
    report.eigenvalues(static_cast<Eigen::Index>(i)) = finite[i];
  report.stable = finite.empty() || report.eigenvalues(0).real() < -1e-10;
  return report;
}

NormalizedPlant build_normalized_plant(const DescriptorSystem& sys) {
  check_dimensions(sys);
  return NormalizedPlant{sys};
}

PartitionedPlant materialize_partitioned(const NormalizedPlant& plant) {
  const DescriptorSystem& sys = plant.sys;
  const Eigen::Index m = sys.inputs(), p = sys.outputs();
  PartitionedPlant g;
  g.E = sys.E;
  g.A = sys.A;
  g.B1.resize(sys.order(), m + p);
  g.B1 << sys.B, Eigen::MatrixXd::Zero(sys.order(), p);
  g.B2 = sys.B;
  g.C1.resize(p + m, sys.order());
  g.C1 << sys.C, Eigen::MatrixXd::Zero(m, sys.order());
  g.C2 = sys.C;
  g.D11 = Eigen::MatrixXd::Zero(p + m, m + p);
  g.D12.resize(p + m, m);
  g.D12 << Eigen::MatrixXd::Zero(p, m), Eigen::MatrixXd::Identity(m, m);
  g.D21.resize(p, m + p);
  g.D21 << Eigen::MatrixXd::Zero(p, m), Eigen::MatrixXd::Identity(p, p);
  g.D22 = Eigen::MatrixXd::Zero(p, m);
  return g;
}

DescriptorSystem lft_closed_loop(const PartitionedPlant& plant, const DescriptorSystem& k) {
  if (k.D.size() && k.D.cwiseAbs().maxCoeff() != 0.0)
    throw InvalidInput("closed loop requires a strictly proper controller");
  if (k.order() > 0) {
    if (k.B.cols() != plant.C2.rows() || k.C.rows() != plant.B2.cols())
      throw DimensionMismatch("controller I/O must match the measurement/actuation channels");
  }
  const Eigen::Index n = plant.A.rows(), nk = k.order();
  const Eigen::Index m1 = plant.B1.cols(), p1 = plant.C1.rows();

  DescriptorSystem cl;
  cl.E = Eigen::MatrixXd::Zero(n + nk, n + nk);
  cl.E.topLeftCorner(n, n) = plant.E;
  cl.A = Eigen::MatrixXd::Zero(n + nk, n + nk);
  cl.A.topLeftCorner(n, n) = plant.A;
  cl.B = Eigen::MatrixXd::Zero(n + nk, m1);
  cl.B.topRows(n) = plant.B1;
  cl.C = Eigen::MatrixXd::Zero(p1, n + nk);
  cl.C.leftCols(n) = plant.C1;
  cl.D = plant.D11;
  if (nk > 0) {
    cl.E.bottomRightCorner(nk, nk) = k.E;
    cl.A.topRightCorner(n, nk) = plant.B2 * k.C;
    cl.A.bottomLeftCorner(nk, n) = k.B * plant.C2;
    cl.A.bottomRightCorner(nk, nk) = k.A + k.B * plant.D22 * k.C;
    cl.B.bottomRows(nk) = k.B * plant.D21;
    cl.C.rightCols(nk) = plant.D12 * k.C;
  }
  return cl;
}

DescriptorSystem lft_closed_loop(const NormalizedPlant& plant, const DescriptorSystem& k) {
  // Same as the general formula, written against the structural blocks of
  // the normalized plant so the identity/zero blocks never materialize.
  const DescriptorSystem& g = plant.sys;
  if (k.D.size() && k.D.cwiseAbs().maxCoeff() != 0.0)
    throw InvalidInput("closed loop requires a strictly proper controller");
  const Eigen::Index n = g.order(), nk = k.order();
  const Eigen::Index m = g.inputs(), p = g.outputs();
  if (nk > 0 && (k.B.cols() != p || k.C.rows() != m))
    throw DimensionMismatch("controller I/O must match the measurement/actuation channels");

  DescriptorSystem cl;
  cl.E = Eigen::MatrixXd::Zero(n + nk, n + nk);
  cl.E.topLeftCorner(n, n) = g.E;
  cl.A = Eigen::MatrixXd::Zero(n + nk, n + nk);
  cl.A.topLeftCorner(n, n) = g.A;
  cl.B = Eigen::MatrixXd::Zero(n + nk, m + p);
  cl.B.topLeftCorner(n, m) = g.B;
  cl.C = Eigen::MatrixXd::Zero(p + m, n + nk);
  cl.C.topLeftCorner(p, n) = g.C;
  cl.D = Eigen::MatrixXd::Zero(p + m, m + p);
  if (nk > 0) {
    cl.E.bottomRightCorner(nk, nk) = k.E;
    cl.A.topRightCorner(n, nk) = g.B * k.C;
    cl.A.bottomLeftCorner(nk, n) = k.B * g.C;
    cl.A.bottomRightCorner(nk, nk) = k.A;
    cl.B.bottomRightCorner(nk, p) = k.B;
    cl.C.bottomRightCorner(m, nk) = k.C;
  }
  return cl;
}

}  // namespace hinfdae
