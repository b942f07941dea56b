#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "hinfdae/errors.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/riccati.hpp"

using namespace hinfdae;
using Eigen::MatrixXd;

namespace {

DescriptorSystem scalar_system(double a, double b, double c, double e = 1.0) {
  MatrixXd am(1, 1), bm(1, 1), cm(1, 1), em(1, 1);
  am << a;
  bm << b;
  cm << c;
  em << e;
  return make_system(em, am, bm, cm);
}

// Positive root of beta^2 c^2 y^2 - 2 a y - b^2 = 0 (the scalar filter
// equation with e = 1).
double scalar_filter_root(double a, double b, double c, double beta_sq) {
  double g = beta_sq * c * c;
  return (a + std::sqrt(a * a + g * b * b)) / g;
}

}  // namespace

TEST_CASE("scalar equations reproduce their closed-form roots") {
  auto stable = solve_care_dense(RiccatiKind::filter, scalar_system(-1.0, 1.0, 1.0), 1.0);
  CHECK(stable.dense(0, 0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-12));
  CHECK(stable.residual_rel < 1e-12);

  auto unstable = solve_care_dense(RiccatiKind::filter, scalar_system(1.0, 1.0, 1.0), 1.0);
  CHECK(unstable.dense(0, 0) == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-12));
  CHECK(unstable.residual_rel < 1e-12);

  // The scalar problem is self-dual, so the regulator solve lands on the same
  // root.
  auto reg = solve_care_dense(RiccatiKind::regulator, scalar_system(1.0, 1.0, 1.0), 1.0);
  CHECK(reg.dense(0, 0) == doctest::Approx(1.0 + std::sqrt(2.0)).epsilon(1e-12));

  // Sub-unit beta^2 (finite performance level).
  const double b2 = 0.75;
  auto mid = solve_care_dense(RiccatiKind::filter, scalar_system(-1.0, 1.0, 1.0), b2);
  CHECK(mid.dense(0, 0) == doctest::Approx(scalar_filter_root(-1.0, 1.0, 1.0, b2)).epsilon(1e-12));

  // Stable system with no disturbance input: the zero solution.
  auto zero = solve_care_dense(RiccatiKind::filter, scalar_system(-1.0, 0.0, 1.0), 1.0);
  CHECK(std::abs(zero.dense(0, 0)) < 1e-14);
}

TEST_CASE("residual functional is exactly one at zero and first-order accurate nearby") {
  auto sys = scalar_system(-1.0, 1.0, 1.0);
  CHECK(riccati_residual(RiccatiKind::filter, sys, 1.0, MatrixXd::Zero(1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(riccati_residual(RiccatiKind::regulator, sys, 1.0, MatrixXd::Zero(1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-14));

  const double a = -1.0, b2 = 1.0, eps = 1e-4;
  const double y = std::sqrt(2.0) - 1.0;
  MatrixXd ypert(1, 1);
  ypert << y + eps;
  double expected = std::abs(2.0 * (a - b2 * y) * eps) / (1.0 + std::abs(ypert(0, 0) * a));
  double got = riccati_residual(RiccatiKind::filter, sys, b2, ypert);
  CHECK(got > 0.5 * expected);
  CHECK(got < 2.0 * expected);
}

TEST_CASE("solutions grow as the performance level tightens") {
  double prev = 0.0;
  for (double gamma : {100.0, 10.0, 4.0, 2.0, 1.5}) {
    double b2 = 1.0 - 1.0 / (gamma * gamma);
    auto sol = solve_care_dense(RiccatiKind::filter, scalar_system(1.0, 1.0, 1.0), b2);
    CHECK(sol.dense(0, 0) > prev);
    CHECK(sol.dense(0, 0) ==
          doctest::Approx(scalar_filter_root(1.0, 1.0, 1.0, b2)).epsilon(1e-11));
    prev = sol.dense(0, 0);
  }
}

TEST_CASE("dense solutions are symmetric positive semidefinite with stable closed loops") {
  auto sys = gen_synthetic_dae({.n_v = 40, .n_p = 0, .m = 2, .p = 2, .n_unstable = 2, .seed = 5});
  DescriptorSystem d = make_system(MatrixXd(sys.E), MatrixXd(sys.A), sys.B, sys.C);
  for (RiccatiKind kind : {RiccatiKind::filter, RiccatiKind::regulator}) {
    auto sol = solve_care_dense(kind, d, 0.75);
    CHECK((sol.dense - sol.dense.transpose()).norm() <= 1e-12 * sol.dense.norm());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sol.dense);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
    CHECK(sol.residual_rel < 1e-8);
  }
}

TEST_CASE("undetectable unstable mode is rejected") {
  CHECK_THROWS_AS(solve_care_dense(RiccatiKind::filter, scalar_system(1.0, 1.0, 0.0), 1.0),
                  NoStabilizingSolution);
}

TEST_CASE("parameter validation") {
  auto sys = scalar_system(-1.0, 1.0, 1.0);
  CHECK_THROWS_AS(solve_care_dense(RiccatiKind::filter, sys, 0.0), InvalidInput);
  CHECK_THROWS_AS(solve_care_dense(RiccatiKind::filter, sys, 1.2), InvalidInput);
  CHECK_THROWS_AS(solve_care_dense(RiccatiKind::filter, scalar_system(-1.0, 1.0, 1.0, 0.0), 1.0),
                  InvalidInput);
}

TEST_CASE("low-rank solver matches the dense oracle on the constrained benchmark") {
  auto sys = gen_synthetic_dae({.seed = 7});
  const double b2 = 0.75;  // gamma = 2
  for (RiccatiKind kind : {RiccatiKind::filter, RiccatiKind::regulator}) {
    CAPTURE(kind == RiccatiKind::filter);
    auto lr = solve_projected_lr(kind, sys, b2);
    auto oracle = oracle_projected_dense(kind, sys, b2);
    MatrixXd xl = lr.materialize();
    CHECK(lr.residual_rel < 1e-8);
    CHECK((xl - oracle.dense).norm() <= 1e-6 * oracle.dense.norm());

    // The factor never leaves the constraint kernel.
    SaddleProjector proj(sys);
    CHECK((proj.pi_t(lr.factor.Z) - lr.factor.Z).norm() <= 1e-8 * lr.factor.Z.norm());

    // The oracle solution is invariant under the projector sandwich.
    MatrixXd pi = build_projector_dense(sys);
    CHECK((pi.transpose() * oracle.dense * pi - oracle.dense).norm() <=
          1e-10 * oracle.dense.norm());
  }
}

TEST_CASE("no disturbance input on a stable system yields an empty factor") {
  auto sys = gen_synthetic_dae({.n_v = 40, .n_p = 6, .m = 2, .p = 2, .n_unstable = 0, .seed = 3});
  sys.B.setZero();
  auto sol = solve_projected_lr(RiccatiKind::filter, sys, 0.75);
  CHECK(sol.factor.Z.cols() == 0);
  CHECK(sol.residual_rel == 0.0);
}

TEST_CASE("without algebraic constraints the low-rank solver agrees with the dense one") {
  auto sys = gen_synthetic_dae({.n_v = 60, .n_p = 0, .m = 2, .p = 2, .n_unstable = 2, .seed = 4});
  DescriptorSystem d = make_system(MatrixXd(sys.E), MatrixXd(sys.A), sys.B, sys.C);
  for (RiccatiKind kind : {RiccatiKind::filter, RiccatiKind::regulator}) {
    auto lr = solve_projected_lr(kind, sys, 0.96);
    auto dense = solve_care_dense(kind, d, 0.96);
    CHECK((lr.materialize() - dense.dense).norm() <= 1e-8 * dense.dense.norm());
  }
}

TEST_CASE("dense oracle reports a small factored residual") {
  auto sys = gen_synthetic_dae({.seed = 7});
  auto oracle = oracle_projected_dense(RiccatiKind::filter, sys, 0.96);
  CHECK(oracle.residual_rel < 1e-8);
}
