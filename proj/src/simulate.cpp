#include "hinfdae/simulate.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <vector>

#include "hinfdae/errors.hpp"

namespace hinfdae {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double perturbation_input(double t, double amp, double lo, double hi) {
  if (t < lo || t > hi) return 0.0;
  return amp * std::sin(2.0 * 3.14159265358979323846 * t);
}

SimulationTrace simulate_closed_loop(const NonlinearPlant& plant, const CentralController* k,
                                     const SimulationConfig& cfg) {
  const ConstrainedSystem& sys = plant.lin;
  const Index n = sys.n_v();
  const Index np = sys.n_p();
  const Index m = sys.inputs();
  const Index p = sys.outputs();

  if (!(cfg.h > 0.0)) throw InvalidInput("simulation needs a positive step size");
  if (!(cfg.t_end >= 4.0 * cfg.h)) throw InvalidInput("simulation horizon must cover >= 4 steps");
  if (cfg.perturb_window_lo < 0.0 || cfg.perturb_window_hi < cfg.perturb_window_lo ||
      cfg.perturb_window_hi > cfg.t_end + 1e-12)
    throw InvalidInput("perturbation window must lie inside [0, t_end]");
  if (k) {
    if (k->sys.inputs() != p || k->sys.outputs() != m)
      throw DimensionMismatch("controller channels do not match the plant");
  }

  VectorXd v0 = cfg.initial.size() ? cfg.initial : plant.v_inf;
  if (v0.size() != n) throw DimensionMismatch("initial state has the wrong dimension");
  if (np > 0) {
    const double viol = (sys.J * v0).norm();
    if (!(viol <= 1e-8 * std::max(1.0, v0.norm()) * sys.J.norm() + 1e-14))
      throw InvalidInput("initial state violates the constraint");
  }

  const Index nsteps = static_cast<Index>(std::llround(cfg.t_end / cfg.h));
  const double h = cfg.h;
  const double vinf_norm = plant.v_inf.norm();
  const double cap = 1e6 * (vinf_norm > 0.0 ? vinf_norm : std::max(v0.norm(), 1.0));

  // One saddle factorization for all steps: [[(3/2)E - h A_S, h J^T], [J, 0]].
  Eigen::SparseMatrix<double> kkt(n + np, n + np);
  {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(sys.E.nonZeros() + plant.A_s.nonZeros() + 2 * sys.J.nonZeros()));
    for (int j = 0; j < sys.E.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(sys.E, j); it; ++it)
        trip.emplace_back(it.row(), it.col(), 1.5 * it.value());
    for (int j = 0; j < plant.A_s.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(plant.A_s, j); it; ++it)
        trip.emplace_back(it.row(), it.col(), -h * it.value());
    for (int j = 0; j < sys.J.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(sys.J, j); it; ++it) {
        trip.emplace_back(it.col(), n + it.row(), h * it.value());
        trip.emplace_back(n + it.row(), it.col(), it.value());
      }
    kkt.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> kkt_lu;
  kkt_lu.compute(kkt);
  if (kkt_lu.info() != Eigen::Success)
    throw SaddleSingular("BDF2 saddle matrix could not be factorized");

  // Controller BDF2 matrix, factored once as well.
  const Index nk = k ? k->sys.order() : 0;
  Eigen::PartialPivLU<MatrixXd> ctrl_lu;
  if (k && nk > 0) {
    MatrixXd mk = 1.5 * k->sys.E - h * k->sys.A;
    ctrl_lu.compute(mk);
  }

  SaddleProjector proj(sys);

  SimulationTrace trace;
  trace.times.resize(nsteps + 1);
  trace.y.resize(nsteps + 1, p);
  trace.u.resize(nsteps + 1, m);
  trace.controller_norm.resize(nsteps + 1);

  const double jnorm = np > 0 ? sys.J.norm() : 0.0;
  double drift = 0.0;
  auto record = [&](Index i, double t, const VectorXd& v, const VectorXd& xk, const VectorXd& u) {
    trace.times(i) = t;
    trace.y.row(i) = (sys.C * v).transpose();
    trace.u.row(i) = u.transpose();
    trace.controller_norm(i) = xk.size() ? xk.norm() : 0.0;
    if (np > 0) {
      const double rel = (sys.J * v).norm() / (jnorm * std::max(v.norm(), 1e-300));
      drift = std::max(drift, rel);
    }
  };

  auto u_delta = [&](double t) {
    return perturbation_input(t, cfg.perturb_amp, cfg.perturb_window_lo, cfg.perturb_window_hi);
  };
  auto control_out = [&](const VectorXd& xk, double t) -> VectorXd {
    VectorXd u = VectorXd::Constant(m, u_delta(t));
    if (k && nk > 0) u += k->sys.C * xk;
    return u;
  };

  VectorXd v_prev = v0;
  VectorXd xk_prev = VectorXd::Zero(nk);
  VectorXd u0 = control_out(xk_prev, 0.0);
  record(0, 0.0, v_prev, xk_prev, u0);

  // First step: Heun on the index-reduced form v' = E^{-1} Pi (A_S v +
  // N(v, v) + B u + f); the controller states use their own explicit form.
  auto plant_rhs = [&](const VectorXd& v, const VectorXd& u) -> VectorXd {
    VectorXd w = plant.A_s * v + plant.convection.apply(v, v) + sys.B * u + plant.f;
    return proj.einv_pi(w);
  };
  VectorXd v_cur, xk_cur;
  {
    const VectorXd y0 = sys.C * (v_prev - plant.v_inf);
    const VectorXd k1v = plant_rhs(v_prev, u0);
    VectorXd k1x = VectorXd::Zero(nk);
    if (k && nk > 0) k1x = k->sys.E.partialPivLu().solve((k->sys.A * xk_prev + k->sys.B * y0).eval());
    const VectorXd vp = v_prev + h * k1v;
    const VectorXd xp = xk_prev + h * k1x;
    const VectorXd u1 = control_out(xp, h);
    const VectorXd yp = sys.C * (vp - plant.v_inf);
    const VectorXd k2v = plant_rhs(vp, u1);
    VectorXd k2x = VectorXd::Zero(nk);
    if (k && nk > 0) k2x = k->sys.E.partialPivLu().solve((k->sys.A * xp + k->sys.B * yp).eval());
    v_cur = v_prev + 0.5 * h * (k1v + k2v);
    xk_cur = xk_prev + 0.5 * h * (k1x + k2x);
    record(1, h, v_cur, xk_cur, control_out(xk_cur, h));
  }

  VectorXd conv_prev = plant.convection.apply(v_prev, v_prev);
  VectorXd conv_cur = plant.convection.apply(v_cur, v_cur);

  Index last = 1;
  for (Index step = 2; step <= nsteps; ++step) {
    const double t = step * h;

    // Controller first, coupled through the extrapolated measurement.
    VectorXd xk_next = xk_cur;
    if (k && nk > 0) {
      const VectorXd y_pred = sys.C * (2.0 * v_cur - v_prev - plant.v_inf);
      xk_next = ctrl_lu.solve((2.0 * (k->sys.E * xk_cur) - 0.5 * (k->sys.E * xk_prev) +
                               h * (k->sys.B * y_pred))
                                  .eval());
    }
    const VectorXd u_next = control_out(xk_next, t);

    VectorXd rhs(n + np);
    rhs.head(n) = 2.0 * (sys.E * v_cur) - 0.5 * (sys.E * v_prev) +
                  h * (2.0 * conv_cur - conv_prev + sys.B * u_next + plant.f);
    rhs.tail(np).setZero();
    const VectorXd sol = kkt_lu.solve(rhs);
    const VectorXd v_next = sol.head(n);

    record(step, t, v_next, xk_next, u_next);
    last = step;

    v_prev = v_cur;
    v_cur = v_next;
    xk_prev = xk_cur;
    xk_cur = xk_next;
    conv_prev = conv_cur;
    conv_cur = plant.convection.apply(v_cur, v_cur);

    if (v_cur.norm() > cap) {
      trace.diverged_at = t;
      break;
    }
  }

  if (last < nsteps) {
    trace.times.conservativeResize(last + 1);
    trace.y.conservativeResize(last + 1, p);
    trace.u.conservativeResize(last + 1, m);
    trace.controller_norm.conservativeResize(last + 1);
  }
  trace.constraint_drift = drift;
  return trace;
}

Verdict stabilization_verdict(const SimulationTrace& trace) {
  const Index nsamp = trace.times.size();
  Verdict verdict;
  if (trace.diverged_at) {
    verdict.rationale = VerdictRationale::diverged;
    return verdict;
  }
  if (nsamp < 8) throw InvalidInput("verdict needs at least 8 samples");

  auto quarter_var = [&](Index lo, Index hi) {
    // Mean over channels of the sample variance on rows [lo, hi).
    const Index len = hi - lo;
    double acc = 0.0;
    for (Index j = 0; j < trace.y.cols(); ++j) {
      const auto seg = trace.y.col(j).segment(lo, len);
      const double mean = seg.mean();
      acc += (seg.array() - mean).square().sum() / static_cast<double>(len - 1);
    }
    return acc / static_cast<double>(trace.y.cols());
  };

  verdict.var_q3 = quarter_var(nsamp / 2, 3 * nsamp / 4);
  verdict.var_q4 = quarter_var(3 * nsamp / 4, nsamp);
  verdict.diff = verdict.var_q4 - verdict.var_q3;
  if (verdict.diff <= 0.0) {
    verdict.stabilized = true;
    verdict.rationale = VerdictRationale::negative_diff;
  } else if (verdict.diff < 1e-14) {
    verdict.stabilized = true;
    verdict.rationale = VerdictRationale::noise_floor;
  } else {
    verdict.stabilized = false;
    verdict.rationale = VerdictRationale::growing;
  }
  return verdict;
}

Eigen::VectorXcd closed_loop_spectrum(const ConstrainedSystem& sys, const CentralController& k) {
  CompressedSystem comp = compress_ker(sys);
  const Index r = comp.sys.order();
  const Index nk = k.sys.order();
  if (r + nk > 600) throw InvalidInput("coupled spectrum guarded at combined order 600");
  if (nk > 0 && (k.sys.inputs() != sys.outputs() || k.sys.outputs() != sys.inputs()))
    throw DimensionMismatch("controller channels do not match the plant");

  MatrixXd e = MatrixXd::Zero(r + nk, r + nk);
  e.topLeftCorner(r, r) = comp.sys.E;
  MatrixXd a = MatrixXd::Zero(r + nk, r + nk);
  a.topLeftCorner(r, r) = comp.sys.A;
  if (nk > 0) {
    e.bottomRightCorner(nk, nk) = k.sys.E;
    a.topRightCorner(r, nk) = comp.sys.B * k.sys.C;
    a.bottomLeftCorner(nk, r) = k.sys.B * comp.sys.C;
    a.bottomRightCorner(nk, nk) = k.sys.A;
  }
  const Index nn = r + nk;
  return is_stable({e, a, MatrixXd::Zero(nn, 0), MatrixXd::Zero(0, nn), MatrixXd::Zero(0, 0)})
      .eigenvalues;
}

}  // namespace hinfdae
