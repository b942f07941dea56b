#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fixtures.hpp"
#include "hinfdae/errors.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/margin.hpp"
#include "hinfdae/riccati.hpp"

using namespace hinfdae;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Scalar plant dv/dt = a v + b u, y = c v as a constrained system without
// constraints.
ConstrainedSystem scalar_system(double a, double b = 1.0, double c = 1.0) {
  ConstrainedSystem sys;
  sys.E = MatrixXd::Identity(1, 1).sparseView();
  sys.A = (MatrixXd(1, 1) << a).finished().sparseView();
  sys.J = Eigen::SparseMatrix<double>(0, 1);
  sys.B = (MatrixXd(1, 1) << b).finished();
  sys.C = (MatrixXd(1, 1) << c).finished();
  return sys;
}

// Stabilizing roots of the scalar normalized Riccati equations (b = c = 1).
double scalar_y(double a, double beta_sq) {
  return (a + std::sqrt(a * a + beta_sq)) / beta_sq;
}
double scalar_x(double a, double beta_sq) { return scalar_y(a, beta_sq); }

// Scalar feasibility: gamma is admissible iff gamma^2 > X Y and the closed
// loops a - beta^2 Y and a - beta^2 X (= -sqrt(a^2 + beta^2)) are stable,
// which holds automatically. Bisect the exact predicate for the boundary.
bool scalar_feasible(double a, double gamma) {
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
  return gamma * gamma > scalar_x(a, beta_sq) * scalar_y(a, beta_sq);
}

double scalar_boundary(double a) {
  double lo = 1.0 + 1e-9, hi = 1e6;
  REQUIRE(!scalar_feasible(a, lo));
  REQUIRE(scalar_feasible(a, hi));
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (scalar_feasible(a, mid) ? hi : lo) = mid;
  }
  return hi;
}

RiccatiSolution dense_solution(double value) {
  RiccatiSolution sol;
  sol.dense = (MatrixXd(1, 1) << value).finished();
  return sol;
}

const ConstrainedSystem& seed7_system() { return testing::seed7(); }
const MarginReport& seed7_margin() { return testing::seed7_margin(); }

}  // namespace

TEST_CASE("existence check reproduces the scalar coupling condition") {
  ConstrainedSystem sys = scalar_system(1.0);
  for (double gamma : {1.5, 2.0, 2.5, 2.8, 3.0, 5.0, 20.0}) {
    const double beta_sq = 1.0 - 1.0 / (gamma * gamma);
    RiccatiSolution x = dense_solution(scalar_x(1.0, beta_sq));
    RiccatiSolution y = dense_solution(scalar_y(1.0, beta_sq));
    const auto [feasible, rho] = existence_check(sys, x, y, gamma);
    CHECK(feasible == scalar_feasible(1.0, gamma));
    CHECK(rho == doctest::Approx(scalar_x(1.0, beta_sq) * scalar_y(1.0, beta_sq)).epsilon(1e-10));
  }
}

TEST_CASE("factored and dense existence checks agree") {
  const ConstrainedSystem& sys = seed7_system();
  const double gamma = 40.0;
  const double beta_sq = 1.0 - 1.0 / (gamma * gamma);

  RiccatiSolution x_lr = solve_projected_lr(RiccatiKind::regulator, sys, beta_sq);
  RiccatiSolution y_lr = solve_projected_lr(RiccatiKind::filter, sys, beta_sq);
  const auto [lr_feasible, lr_rho] = existence_check(sys, x_lr, y_lr, gamma);

  RiccatiSolution x_dense, y_dense;
  x_dense.dense = x_lr.materialize();
  y_dense.dense = y_lr.materialize();
  const auto [dn_feasible, dn_rho] = existence_check(sys, x_dense, y_dense, gamma);

  CHECK(lr_feasible == dn_feasible);
  CHECK(lr_rho == doctest::Approx(dn_rho).epsilon(1e-10));
  CHECK(lr_rho > 0.0);
}

TEST_CASE("computed margin brackets the scalar boundary") {
  const double oracle = scalar_boundary(1.0);
  MarginReport report = compute_margin(scalar_system(1.0));

  CHECK(report.feasible);
  // Accepted value sits a safety factor above the bisection, so slightly
  // above the true boundary but within safety * (1 + rel_gap) of it.
  CHECK(report.gamma > oracle);
  CHECK(report.gamma < 1.075 * oracle);
  CHECK(report.rho > 0.0);
  CHECK(report.x_factor.Z.size() > 0);
  CHECK(report.y_factor.Z.size() > 0);

  // Probe log is sorted by gamma descending and cleanly separated: every
  // feasible probe lies above every infeasible one.
  REQUIRE(report.probes.size() > 2);
  double min_feasible = 1e300, max_infeasible = 0.0;
  for (std::size_t i = 0; i + 1 < report.probes.size(); ++i)
    CHECK(report.probes[i].gamma >= report.probes[i + 1].gamma);
  for (const MarginProbe& probe : report.probes) {
    if (probe.feasible)
      min_feasible = std::min(min_feasible, probe.gamma);
    else
      max_infeasible = std::max(max_infeasible, probe.gamma);
  }
  CHECK(min_feasible > max_infeasible);
  CHECK(min_feasible > oracle);
  CHECK(max_infeasible < oracle);
}

TEST_CASE("stable plant margin collapses to the lower limit") {
  MarginReport report = compute_margin(scalar_system(-1.0));
  CHECK(report.feasible);
  // Every gamma > 1 is admissible for this plant, so the bracket collapses
  // onto the floor and only the safety factor remains.
  CHECK(report.gamma < 1.1);
  CHECK(report.gamma > 1.0);
}

TEST_CASE("margin search fails above the gamma cap") {
  MarginOptions opts;
  opts.gamma_max = 1.0001;
  CHECK_THROWS_AS((void)compute_margin(scalar_system(1.0), opts), const InfeasibleAtGammaMax&);
}

TEST_CASE("margin options are validated") {
  MarginOptions bad_cap;
  bad_cap.gamma_max = 1.0;
  CHECK_THROWS_AS((void)compute_margin(scalar_system(-1.0), bad_cap), const InvalidInput&);

  MarginOptions bad_gap;
  bad_gap.rel_gap = 0.0;
  CHECK_THROWS_AS((void)compute_margin(scalar_system(-1.0), bad_gap), const InvalidInput&);
  bad_gap.rel_gap = 1.5;
  CHECK_THROWS_AS((void)compute_margin(scalar_system(-1.0), bad_gap), const InvalidInput&);

  MarginOptions bad_safety;
  bad_safety.safety = 0.99;
  CHECK_THROWS_AS((void)compute_margin(scalar_system(-1.0), bad_safety), const InvalidInput&);
}

TEST_CASE("accepted margin of the synthetic plant is certified feasible") {
  const ConstrainedSystem& sys = seed7_system();
  const MarginReport& report = seed7_margin();

  CHECK(report.feasible);
  CHECK(report.gamma > 1.0);
  CHECK(report.gamma * report.gamma > report.rho);

  // Re-probe from scratch at the accepted gamma: the stored factors are not
  // reused, so this confirms the margin rather than the cache.
  const double beta_sq = 1.0 - 1.0 / (report.gamma * report.gamma);
  RiccatiSolution x = solve_projected_lr(RiccatiKind::regulator, sys, beta_sq);
  RiccatiSolution y = solve_projected_lr(RiccatiKind::filter, sys, beta_sq);
  CHECK(existence_check(sys, x, y, report.gamma).first);
}

TEST_CASE("margin factors are kernel-compatible Riccati solutions") {
  const ConstrainedSystem& sys = seed7_system();
  const MarginReport& report = seed7_margin();
  const double beta_sq = 1.0 - 1.0 / (report.gamma * report.gamma);

  const MatrixXd jx = MatrixXd(sys.J) * report.x_factor.Z;
  const MatrixXd jy = MatrixXd(sys.J) * report.y_factor.Z;
  CHECK(jx.norm() < 1e-6 * std::max(1.0, report.x_factor.Z.norm()));
  CHECK(jy.norm() < 1e-6 * std::max(1.0, report.y_factor.Z.norm()));

  CHECK(riccati_residual_lr(RiccatiKind::regulator, sys, beta_sq, report.x_factor.Z) < 1e-6);
  CHECK(riccati_residual_lr(RiccatiKind::filter, sys, beta_sq, report.y_factor.Z) < 1e-6);
}
