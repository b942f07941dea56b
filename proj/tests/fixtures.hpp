#pragma once

// Shared heavyweight fixtures. Inline functions with static locals so every
// translation unit in the test binary sees the same computed-once instance.

#include "hinfdae/flowdae.hpp"
#include "hinfdae/margin.hpp"

namespace hinfdae::testing {

// Unstable synthetic constrained plant used across the suite.
inline const ConstrainedSystem& seed7() {
  static ConstrainedSystem sys = [] {
    SyntheticParams params;
    params.seed = 7;
    return gen_synthetic_dae(params);
  }();
  return sys;
}

inline const MarginReport& seed7_margin() {
  static MarginReport report = compute_margin(seed7());
  return report;
}

// Supercritical nonlinear toy plant (quadratic convection, unstable steady
// state) and the margin of its linearization.
inline const NonlinearPlant& toy120() {
  static NonlinearPlant plant = [] {
    ToyParams params;
    params.n_v = 40;
    params.n_p = 6;
    params.reynolds_like = 120.0;
    params.seed = 3;
    return gen_toy_nonlinear(params);
  }();
  return plant;
}

inline const MarginReport& toy120_margin() {
  static MarginReport report = compute_margin(toy120().lin);
  return report;
}

}  // namespace hinfdae::testing
