#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "fixtures.hpp"
#include "hinfdae/coprime.hpp"
#include "hinfdae/errors.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/norms.hpp"
#include "hinfdae/riccati.hpp"

using namespace hinfdae;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using cplx = std::complex<double>;

namespace {

// Unconstrained scalar plant 1/(s - a) as a constrained system with an empty
// constraint block.
ConstrainedSystem scalar_plant(double a) {
  ConstrainedSystem sys;
  sys.E = MatrixXd::Identity(1, 1).sparseView();
  sys.A = (MatrixXd(1, 1) << a).finished().sparseView();
  sys.J = Eigen::SparseMatrix<double>(0, 1);
  sys.B = MatrixXd::Identity(1, 1);
  sys.C = MatrixXd::Identity(1, 1);
  return sys;
}

// Closed-form scalar filter solution (b = c = e = 1):
// beta^2 y^2 - 2 a y - 1 = 0, stabilizing root.
double scalar_y(double a, double beta_sq) {
  return (a + std::sqrt(a * a + beta_sq)) / beta_sq;
}

// Closed-form stacked factors of 1/(s - a): N = 1/(s + s1),
// M = (s - a)/(s + s1) with s1 = sqrt(a^2 + beta^2).
cplx scalar_n(double a, double beta_sq, cplx s) {
  return 1.0 / (s + std::sqrt(a * a + beta_sq));
}
cplx scalar_m(double a, double beta_sq, cplx s) {
  return (s - a) / (s + std::sqrt(a * a + beta_sq));
}

const ConstrainedSystem& seed7_system() { return testing::seed7(); }

// Filter factor of the synthetic plant at gamma = 40, solved once.
const LowRankFactor& seed7_y40() {
  static LowRankFactor y =
      solve_projected_lr(RiccatiKind::filter, seed7_system(), 1.0 - 1.0 / (40.0 * 40.0)).factor;
  return y;
}

double allpass_defect(const DescriptorSystem& stacked, double omega) {
  Eigen::MatrixXcd t = eval_transfer(stacked, cplx(0.0, omega));
  Eigen::MatrixXcd gram = t * t.adjoint();
  return (gram - Eigen::MatrixXcd::Identity(t.rows(), t.rows())).norm();
}

}  // namespace

TEST_CASE("scalar factorization matches its closed form") {
  const double a = -1.0, gamma = 2.0;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  const double s1 = std::sqrt(a * a + beta_sq);
  const double l = a + s1;

  MatrixXd y(1, 1);
  y << scalar_y(a, beta_sq);
  DescriptorSystem plant = make_system(MatrixXd::Identity(1, 1), (MatrixXd(1, 1) << a).finished(),
                                       MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  CoprimePair pair = coprime_realization(plant, y, gamma);

  CHECK(pair.beta == doctest::Approx(std::sqrt(beta_sq)).epsilon(1e-14));
  CHECK(pair.stacked.A(0, 0) == doctest::Approx(-s1).epsilon(1e-12));
  CHECK(pair.stacked.B(0, 0) == doctest::Approx(std::sqrt(beta_sq)).epsilon(1e-12));
  CHECK(pair.stacked.B(0, 1) == doctest::Approx(-l).epsilon(1e-12));
  CHECK(pair.stacked.D(0, 0) == 0.0);
  CHECK(pair.stacked.D(0, 1) == 1.0);

  // The stored pair carries the beta scaling on the first channel; the plain
  // factors recover the plant as M^{-1} N.
  const cplx s(1.0, 1.0);
  Eigen::MatrixXcd t = eval_transfer(pair.stacked, s);
  const cplx n_plain = t(0, 0) / pair.beta;
  const cplx m_val = t(0, 1);
  CHECK(std::abs(n_plain - scalar_n(a, beta_sq, s)) < 1e-12);
  CHECK(std::abs(m_val - scalar_m(a, beta_sq, s)) < 1e-12);
  CHECK(std::abs(n_plain / m_val - 1.0 / (s - a)) < 1e-8);
}

TEST_CASE("diagonal plant pair is all-pass on the axis") {
  // Three decoupled stable modes; the filter solution solves mode by mode.
  const double gamma = 2.0;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  MatrixXd a = (VectorXd(3) << -1.0, -2.0, -3.0).finished().asDiagonal();
  DescriptorSystem plant =
      make_system(MatrixXd::Identity(3, 3), a, MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3));
  RiccatiSolution y = solve_care_dense(RiccatiKind::filter, plant, beta_sq);
  for (int i = 0; i < 3; ++i)
    CHECK(y.dense(i, i) == doctest::Approx(scalar_y(a(i, i), beta_sq)).epsilon(1e-10));

  CoprimePair pair = coprime_realization(plant, y.dense, gamma);
  const VectorXd omegas = log_grid(1e-4, 1e4, 25);
  for (Eigen::Index i = 0; i < omegas.size(); ++i)
    CHECK(allpass_defect(pair.stacked, omegas(i)) < 1e-10);

  // M(infinity) = I: the feedthrough dominates far out on the axis.
  Eigen::MatrixXcd far = eval_transfer(pair.stacked, cplx(0.0, 1e9));
  CHECK((far.rightCols(3) - Eigen::MatrixXcd::Identity(3, 3)).norm() < 1e-6);
  CHECK(far.leftCols(3).norm() < 1e-6);
}

TEST_CASE("constrained factorization is all-pass and observer-stable") {
  const ConstrainedSystem& sys = seed7_system();
  const double gamma = 40.0;
  CoprimePair pair = coprime_realization(sys, seed7_y40(), gamma);

  CHECK(pair.m == 2);
  CHECK(pair.p == 2);
  CHECK(pair.stacked.order() == sys.n_v() - sys.n_p());
  CHECK(is_stable(make_system(pair.stacked.E, pair.stacked.A, MatrixXd::Zero(pair.stacked.order(), 0),
                              MatrixXd::Zero(0, pair.stacked.order())))
            .stable);

  const VectorXd omegas = log_grid(1e-4, 1e4, 25);
  for (Eigen::Index i = 0; i < omegas.size(); ++i)
    CHECK(allpass_defect(pair.stacked, omegas(i)) < 1e-6);
}

TEST_CASE("identical plants have vanishing factor error") {
  const ConstrainedSystem& sys = seed7_system();
  CHECK(coprime_error(sys, sys, seed7_y40(), 40.0, 1e-4) < 1e-8);
}

TEST_CASE("scalar factor error matches a dense frequency sweep") {
  const double a1 = -1.0, a2 = -1.1, gamma = 10.0;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);

  // Oracle: closed-form unscaled factors on a dense log grid.
  double oracle = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double omega = std::pow(10.0, -6.0 + 12.0 * i / 100000.0);
    const cplx s(0.0, omega);
    const cplx dn = scalar_n(a1, beta_sq, s) - scalar_n(a2, beta_sq, s);
    const cplx dm = scalar_m(a1, beta_sq, s) - scalar_m(a2, beta_sq, s);
    oracle = std::max(oracle, std::sqrt(std::norm(dn) + std::norm(dm)));
  }

  ConstrainedSystem g1 = scalar_plant(a1);
  ConstrainedSystem g2 = scalar_plant(a2);
  LowRankFactor y;
  y.Z = (MatrixXd(1, 1) << std::sqrt(scalar_y(a1, beta_sq))).finished();
  const double err = coprime_error(g1, g2, y, gamma, 1e-6);
  CHECK(err == doctest::Approx(oracle).epsilon(1e-4));
  CHECK(oracle > 1e-3);  // the oracle itself is nontrivial
}

TEST_CASE("factor error grows with the plant perturbation") {
  const double gamma = 10.0;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  ConstrainedSystem g = scalar_plant(-1.0);
  LowRankFactor y;
  y.Z = (MatrixXd(1, 1) << std::sqrt(scalar_y(-1.0, beta_sq))).finished();

  double prev = 0.0;
  for (double delta : {0.05, 0.1, 0.2, 0.4}) {
    const double err = coprime_error(g, scalar_plant(-1.0 - delta), y, gamma, 1e-6);
    CHECK(err > prev);
    prev = err;
  }
}

TEST_CASE("mismatched factorizations are rejected") {
  ConstrainedSystem g = scalar_plant(-1.0);
  LowRankFactor y1, y2;
  y1.Z = (MatrixXd(1, 1) << std::sqrt(scalar_y(-1.0, 1.0 - 1.0 / 100.0))).finished();
  y2.Z = (MatrixXd(1, 1) << std::sqrt(scalar_y(-1.0, 1.0 - 1.0 / 121.0))).finished();
  CoprimePair p1 = coprime_realization(g, y1, 10.0);
  CoprimePair p2 = coprime_realization(g, y2, 11.0);
  CHECK_THROWS_AS((void)stacked_difference(p1, p2), const InvalidInput&);

  // Channel mismatch: a two-output plant against the scalar one.
  ConstrainedSystem wide = scalar_plant(-1.0);
  wide.C = MatrixXd::Ones(2, 1);
  CoprimePair p3 = coprime_realization(wide, y1, 10.0);
  CHECK_THROWS_AS((void)stacked_difference(p1, p3), const DimensionMismatch&);
}

TEST_CASE("kernel-incompatible factors are rejected") {
  const ConstrainedSystem& sys = seed7_system();
  LowRankFactor bad;
  bad.Z = MatrixXd::Ones(sys.n_v(), 1);  // not in ker J
  CHECK_THROWS_AS((void)coprime_realization(sys, bad, 10.0), const InvalidInput&);
}

TEST_CASE("gamma at or below one is rejected") {
  DescriptorSystem plant = make_system(MatrixXd::Identity(1, 1), -MatrixXd::Identity(1, 1),
                                       MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  CHECK_THROWS_AS((void)coprime_realization(plant, MatrixXd::Identity(1, 1), 1.0),
                  const InvalidInput&);
}
