#pragma once

#include <Eigen/Dense>
#include <optional>

#include "hinfdae/controller.hpp"
#include "hinfdae/flowdae.hpp"

namespace hinfdae {

struct SimulationConfig {
  double h = 1e-2;
  double t_end = 1.0;
  double perturb_amp = 1e-6;
  double perturb_window_lo = 0.0;
  double perturb_window_hi = 1.0;
  // Empty: start at the steady state v_inf. Otherwise the initial velocity
  // (must satisfy the constraint).
  Eigen::VectorXd initial;
};

struct SimulationTrace {
  Eigen::VectorXd times;            // uniform, spacing h
  Eigen::MatrixXd y;                // samples x outputs
  Eigen::MatrixXd u;                // samples x inputs (controller + perturbation)
  Eigen::VectorXd controller_norm;  // samples
  std::optional<double> diverged_at;
  // Largest relative constraint violation max_t ||J v|| / (||J|| ||v||).
  double constraint_drift = 0.0;
};

enum class VerdictRationale { negative_diff, noise_floor, diverged, growing };

struct Verdict {
  bool stabilized = false;
  double var_q3 = 0.0;  // mean output variance on [T/2, 3T/4]
  double var_q4 = 0.0;  // mean output variance on [3T/4, T]
  double diff = 0.0;    // var_q4 - var_q3
  VerdictRationale rationale = VerdictRationale::growing;
};

// amp * sin(2 pi t) inside [lo, hi], zero outside — applied identically to
// every input channel.
double perturbation_input(double t, double amp, double lo, double hi);

// Closed-loop time integration of the nonlinear constrained plant
//
//   E v' = A_S v + N(v, v) + J^T q + B (u_c + u_d) + f,  J v = 0,
//
// with the strictly proper controller (u_c = C_k x_k, E_k x_k' = A_k x_k +
// B_k C (v - v_inf)) or open loop when k is null. BDF2 with the convection
// extrapolated two-point explicitly and the controller coupled through the
// extrapolated measurement; the first step is one Heun step on the
// index-reduced form. Each step solves one fixed factorization of the saddle
// matrix [[(3/2)E - h A_S, h J^T], [J, 0]]. Divergence (||v|| above 1e6
// ||v_inf||) truncates the trace and records the time.
SimulationTrace simulate_closed_loop(const NonlinearPlant& plant, const CentralController* k,
                                     const SimulationConfig& cfg);

// Variance comparison of the output signal between the third and fourth
// quarters of the horizon: stabilized when the fourth-quarter variance does
// not exceed the third's beyond the 1e-14 noise floor. Diverged traces are
// never stabilized.
Verdict stabilization_verdict(const SimulationTrace& trace);

// Finite spectrum of the coupled plant-controller linearization on the
// constraint manifold, sorted by real part descending. Combined order
// guarded at 600.
Eigen::VectorXcd closed_loop_spectrum(const ConstrainedSystem& sys, const CentralController& k);

}  // namespace hinfdae
