#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "hinfdae/controller.hpp"
#include "hinfdae/errors.hpp"
#include "hinfdae/flowdae.hpp"
#include "hinfdae/hinfbt.hpp"
#include "hinfdae/margin.hpp"
#include "hinfdae/simulate.hpp"

using namespace hinfdae;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Unconstrained scalar decay dv/dt = -v as a nonlinear plant with empty
// convection, for exact-solution convergence checks.
NonlinearPlant scalar_decay() {
  NonlinearPlant plant;
  plant.lin.E = MatrixXd::Identity(1, 1).sparseView();
  plant.lin.A = (-MatrixXd::Identity(1, 1)).sparseView();
  plant.lin.J = Eigen::SparseMatrix<double>(0, 1);
  plant.lin.B = MatrixXd::Identity(1, 1);
  plant.lin.C = MatrixXd::Identity(1, 1);
  plant.A_s = plant.lin.A;
  plant.convection.n = 1;
  plant.v_inf = VectorXd::Zero(1);
  plant.f = VectorXd::Zero(1);
  plant.reynolds_like = 1.0;
  plant.critical_re = 2.0;
  return plant;
}

SimulationTrace synthetic_trace(double growth, double t_end = 40.0, double h = 0.02,
                                double scale = 1.0) {
  const Index n = static_cast<Index>(t_end / h) + 1;
  SimulationTrace trace;
  trace.times = VectorXd::LinSpaced(n, 0.0, t_end);
  trace.y.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double t = trace.times(i);
    trace.y(i, 0) = scale * std::exp(growth * t) * std::sin(10.0 * t);
  }
  trace.u = MatrixXd::Zero(n, 1);
  trace.controller_norm = VectorXd::Zero(n);
  return trace;
}

// Reduced controller for the supercritical toy plant, built once.
const CentralController& toy_controller() {
  static CentralController k = [] {
    const MarginReport& m = testing::toy120_margin();
    ReductionCut cut;
    cut.tol = 1e-3;
    ReducedModel rom =
        reduce(testing::toy120().lin, m.x_factor, m.y_factor, m.gamma, cut);
    auto [y_hat, x_hat] =
        reduced_riccati_lift(rom, testing::toy120().lin.E, m.y_factor, m.x_factor);
    return central_controller_reduced(rom, y_hat, x_hat, m.gamma);
  }();
  return k;
}

// Settings that separate the controlled and uncontrolled responses: kick the
// system early, then watch the variance settle (or keep growing).
SimulationConfig discriminating_config() {
  SimulationConfig cfg;
  cfg.h = 1e-2;
  cfg.t_end = 200.0;
  cfg.perturb_amp = 1e-3;
  cfg.perturb_window_lo = 0.0;
  cfg.perturb_window_hi = 50.0;
  return cfg;
}

}  // namespace

TEST_CASE("steady state is a fixed point of the integrator") {
  const NonlinearPlant& plant = testing::toy120();
  SimulationConfig cfg;
  cfg.h = 1e-2;
  cfg.t_end = 1.0;
  cfg.perturb_amp = 0.0;

  SimulationTrace trace = simulate_closed_loop(plant, nullptr, cfg);
  REQUIRE(!trace.diverged_at);
  const VectorXd y_inf = plant.lin.C * plant.v_inf;
  double worst = 0.0;
  for (Index i = 0; i < trace.times.size(); ++i)
    worst = std::max(worst, (trace.y.row(i).transpose() - y_inf).norm());
  CHECK(worst < 1e-10 * (1.0 + y_inf.norm()));
  CHECK(trace.constraint_drift < 1e-10);
}

TEST_CASE("time integration converges at second order") {
  NonlinearPlant plant = scalar_decay();
  std::vector<double> errors;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    SimulationConfig cfg;
    cfg.h = h;
    cfg.t_end = 1.0;
    cfg.perturb_amp = 0.0;
    cfg.initial = VectorXd::Ones(1);
    SimulationTrace trace = simulate_closed_loop(plant, nullptr, cfg);
    REQUIRE(!trace.diverged_at);
    errors.push_back(std::abs(trace.y(trace.times.size() - 1, 0) - std::exp(-1.0)));
  }
  double mean_order = 0.0;
  for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
    const double order = std::log2(errors[i] / errors[i + 1]);
    CHECK(order > 1.8);
    CHECK(order < 2.2);
    mean_order += order / static_cast<double>(errors.size() - 1);
  }
  CHECK(mean_order > 1.9);
  CHECK(mean_order < 2.1);
}

TEST_CASE("verdict separates settling from growing signals") {
  Verdict settling = stabilization_verdict(synthetic_trace(-0.1));
  CHECK(settling.stabilized);
  CHECK(settling.rationale == VerdictRationale::negative_diff);
  CHECK(settling.diff < 0.0);

  Verdict growing = stabilization_verdict(synthetic_trace(0.1));
  CHECK_FALSE(growing.stabilized);
  CHECK(growing.rationale == VerdictRationale::growing);
  CHECK(growing.diff > 0.0);

  // Scaling the signal does not flip either verdict.
  CHECK(stabilization_verdict(synthetic_trace(-0.1, 40.0, 0.02, 10.0)).stabilized);
  CHECK_FALSE(stabilization_verdict(synthetic_trace(0.1, 40.0, 0.02, 10.0)).stabilized);

  // A constant output settles trivially.
  SimulationTrace flat = synthetic_trace(0.0);
  flat.y.setConstant(3.0);
  Verdict quiet = stabilization_verdict(flat);
  CHECK(quiet.stabilized);

  // Divergence overrides everything.
  SimulationTrace broken = synthetic_trace(-0.1);
  broken.diverged_at = 1.0;
  Verdict diverged = stabilization_verdict(broken);
  CHECK_FALSE(diverged.stabilized);
  CHECK(diverged.rationale == VerdictRationale::diverged);

  SimulationTrace tiny = synthetic_trace(-0.1, 0.1, 0.025);
  CHECK_THROWS_AS((void)stabilization_verdict(tiny), const InvalidInput&);
}

TEST_CASE("reduced controller stabilizes the supercritical toy flow") {
  const NonlinearPlant& plant = testing::toy120();
  const CentralController& k = toy_controller();
  SimulationConfig cfg = discriminating_config();

  SimulationTrace controlled = simulate_closed_loop(plant, &k, cfg);
  REQUIRE(!controlled.diverged_at);
  Verdict closed = stabilization_verdict(controlled);
  CHECK(closed.stabilized);
  CHECK(controlled.constraint_drift < 1e-8);

  SimulationTrace open = simulate_closed_loop(plant, nullptr, cfg);
  Verdict uncontrolled = stabilization_verdict(open);
  CHECK_FALSE(uncontrolled.stabilized);

  // The late-time controlled output is pinned to the steady state while the
  // open loop has wandered off.
  const VectorXd y_inf = plant.lin.C * plant.v_inf;
  const Index last = controlled.times.size() - 1;
  CHECK((controlled.y.row(last).transpose() - y_inf).norm() <
        0.01 * (open.y.row(open.times.size() - 1).transpose() - y_inf).norm());
}

TEST_CASE("coupled spectrum matches the verdicts") {
  const NonlinearPlant& plant = testing::toy120();

  Eigen::VectorXcd closed = closed_loop_spectrum(plant.lin, toy_controller());
  REQUIRE(closed.size() > 0);
  CHECK(closed(0).real() < 0.0);

  // An order-zero controller reproduces the open-loop spectrum.
  CentralController none;
  none.sys = make_system(MatrixXd(0, 0), MatrixXd(0, 0), MatrixXd::Zero(0, plant.lin.outputs()),
                         MatrixXd::Zero(plant.lin.inputs(), 0));
  none.gamma = 2.0;
  Eigen::VectorXcd open = closed_loop_spectrum(plant.lin, none);
  CHECK(open(0).real() > 0.0);  // supercritical: linearization is unstable

  StabilityReport report = is_stable(compress_ker(plant.lin).sys);
  CHECK(report.max_real() == doctest::Approx(open(0).real()).epsilon(1e-8));
}

TEST_CASE("bad simulation configurations are rejected") {
  const NonlinearPlant& plant = testing::toy120();

  SimulationConfig bad_h;
  bad_h.h = 0.0;
  CHECK_THROWS_AS((void)simulate_closed_loop(plant, nullptr, bad_h), const InvalidInput&);

  SimulationConfig short_horizon;
  short_horizon.h = 0.5;
  short_horizon.t_end = 1.0;
  CHECK_THROWS_AS((void)simulate_closed_loop(plant, nullptr, short_horizon), const InvalidInput&);

  SimulationConfig bad_window;
  bad_window.perturb_window_hi = 2.0;  // beyond t_end = 1
  CHECK_THROWS_AS((void)simulate_closed_loop(plant, nullptr, bad_window), const InvalidInput&);

  SimulationConfig cfg;
  cfg.initial = VectorXd::Ones(plant.lin.n_v());  // violates J v = 0
  CHECK_THROWS_AS((void)simulate_closed_loop(plant, nullptr, cfg), const InvalidInput&);
}
