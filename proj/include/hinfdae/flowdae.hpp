#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <memory>
#include <vector>

#include "hinfdae/descriptor.hpp"

namespace hinfdae {

// Linear system with a divergence-type algebraic constraint:
//
//   E v'(t) = A v(t) + J^T q(t) + B u(t),   0 = J v(t),   y = C v(t),
//
// E symmetric positive definite, J full row rank. n_p = 0 degrades to an
// ordinary (sparse) state-space system.
struct ConstrainedSystem {
  Eigen::SparseMatrix<double> E;
  Eigen::SparseMatrix<double> A;
  Eigen::SparseMatrix<double> J;  // n_p x n_v
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;

  Eigen::Index n_v() const { return A.rows(); }
  Eigen::Index n_p() const { return J.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }
};

// Checks dimensions, symmetry and definiteness of E, and full row rank of J.
// Throws DimensionMismatch / InvalidInput / RankDeficientJ.
void validate(const ConstrainedSystem& sys);

// Cached factorization of the symmetric saddle matrix [[E, J^T], [J, 0]].
// Provides both projector actions without ever forming the projector:
//   pi_t(w) = Pi^T w  (kernel projection of velocities),
//   pi(v)   = Pi v    (range projection of loads),
// where Pi^T = I - E^{-1} J^T (J E^{-1} J^T)^{-1} J.
class SaddleProjector {
 public:
  explicit SaddleProjector(const ConstrainedSystem& sys);

  Eigen::MatrixXd pi_t(const Eigen::MatrixXd& w) const;
  Eigen::MatrixXd pi(const Eigen::MatrixXd& v) const;
  // E^{-1} Pi v, at the cost of one saddle solve (no separate E solve).
  Eigen::MatrixXd einv_pi(const Eigen::MatrixXd& v) const;

  Eigen::Index n_v() const { return nv_; }
  Eigen::Index n_p() const { return np_; }

 private:
  Eigen::Index nv_, np_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
  Eigen::SparseMatrix<double> e_;
};

// Pi^T w via one saddle solve per column.
Eigen::MatrixXd leray_apply(const ConstrainedSystem& sys, const Eigen::MatrixXd& w);

// Dense Pi = I - J^T (J E^{-1} J^T)^{-1} J E^{-1}, for oracles and identity
// tests only (order guarded at 2000).
Eigen::MatrixXd build_projector_dense(const ConstrainedSystem& sys);

// Cached complex factorization of [[op(A) + p E, J^T], [J, 0]] for the
// shifted solves of the low-rank Riccati machinery (op = identity or
// transpose). solve(W) returns Z with (Pi op(A) Pi^T + p E) Z = E W for
// kernel-compatible W, together with the multiplier block.
class ShiftedSaddleSolver {
 public:
  ShiftedSaddleSolver(const ConstrainedSystem& sys, std::complex<double> p, bool transpose);

  struct Result {
    Eigen::MatrixXcd z;
    Eigen::MatrixXcd z_perp;
  };
  Result solve(const Eigen::MatrixXcd& w) const;

 private:
  Eigen::Index nv_, np_;
  double matrix_scale_ = 0.0;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<std::complex<double>>>> lu_;
  Eigen::SparseMatrix<std::complex<double>> k_;
  Eigen::SparseMatrix<double> e_;
};

// One-shot shifted solve; enforces the kernel-compatibility of W by
// projecting it first. Throws SaddleSingular / IllConditioned.
ShiftedSaddleSolver::Result saddle_shifted_solve(const ConstrainedSystem& sys,
                                                 std::complex<double> p,
                                                 const Eigen::MatrixXd& w,
                                                 bool transpose = false);

// Dense restriction to an orthonormal basis Theta of ker(J):
// (Theta^T E Theta, Theta^T A Theta, Theta^T B, C Theta). The restriction of
// the constrained dynamics to the constraint manifold — frequency-domain
// quantities of the constrained system equal those of the compressed one.
struct CompressedSystem {
  Eigen::MatrixXd theta;  // n_v x (n_v - n_p), orthonormal columns
  DescriptorSystem sys;
};

CompressedSystem compress_ker(const ConstrainedSystem& sys);

// ---------------------------------------------------------------------------
// Deterministic benchmarks
// ---------------------------------------------------------------------------

struct SyntheticParams {
  Eigen::Index n_v = 60;
  Eigen::Index n_p = 10;
  Eigen::Index m = 2;
  Eigen::Index p = 2;
  int n_unstable = 2;
  std::uint64_t seed = 0;
};

// Seeded sparse constrained system with SPD E = I + 0.1*(SPD perturbation),
// a stable bulk (negative-definite symmetric part plus skew coupling), and
// exactly n_unstable controllable/observable antistable modes planted on
// coordinates that J does not touch (hence inside ker J).
ConstrainedSystem gen_synthetic_dae(const SyntheticParams& params);

// Sparse bilinear convection analogue N(v, w) = sum_q s_q * v_{k_q} *
// (e_{i_q} w_{j_q} - e_{j_q} w_{i_q}). Each term acts skew-symmetrically in
// w, so v^T N(v, v) = 0 identically (energy neutrality).
struct BilinearQuad {
  int k, i, j;
  double s;
};

struct BilinearForm {
  Eigen::Index n = 0;
  std::vector<BilinearQuad> quads;

  Eigen::VectorXd apply(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const;
  // w -> N(vbar, w) as a sparse matrix.
  Eigen::SparseMatrix<double> frozen_first(const Eigen::VectorXd& vbar) const;
  // v -> N(v, wbar) as a sparse matrix.
  Eigen::SparseMatrix<double> frozen_second(const Eigen::VectorXd& wbar) const;
  // Jacobian of v -> N(v, v) at vbar: N(vbar, .) + N(., vbar).
  Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& vbar) const;
};

// Nonlinear constrained plant
//
//   E v' = A_S v + N(v, v) + J^T q + B u + f,   0 = J v,   y = C v,
//
// with A_S = -(1/reynolds_like) K for SPD K, a constructed steady state
// v_inf (J v_inf = 0, steady residual ~ machine precision), and the exact
// linearization A = A_S + N(v_inf, .) + N(., v_inf) stored in `lin`.
struct NonlinearPlant {
  ConstrainedSystem lin;  // A = linearization at v_inf
  Eigen::SparseMatrix<double> A_s;
  BilinearForm convection;
  Eigen::VectorXd v_inf;
  Eigen::VectorXd f;
  double reynolds_like = 0.0;
  // The linearized constrained system is unstable exactly when
  // reynolds_like > critical_re (property of the seeded construction).
  double critical_re = 0.0;
  std::uint64_t seed = 0;
};

struct ToyParams {
  Eigen::Index n_v = 80;
  Eigen::Index n_p = 12;
  Eigen::Index m = 2;
  Eigen::Index p = 2;
  double reynolds_like = 90.0;
  std::uint64_t seed = 0;
};

NonlinearPlant gen_toy_nonlinear(const ToyParams& params);

// Inexact-linearization families.
enum class PerturbationMode { picard_like, parameter_like };

struct PerturbedLinearization {
  ConstrainedSystem sys;  // A replaced by the inexact linearization
  double distance = 0.0;  // ||A_pert - A_exact||_F
  Eigen::VectorXd v_point;
};

// picard_like: v after ell damped frozen-convection fixed-point steps from
// 0.5 * v_inf. parameter_like: steady state recomputed by damped Newton with
// the diffusion scaled to reynolds_like * (1 + ell/1000).
PerturbedLinearization perturb_linearization(const NonlinearPlant& plant, PerturbationMode mode,
                                             int ell);

// Directory serialization: E.mtx, A.mtx, J.mtx, B.mtx, C.mtx + manifest.json;
// nonlinear plants add v_inf.mtx, f.mtx and carry the bilinear form inside the
// manifest.
void save_constrained_system(const std::string& dir, const ConstrainedSystem& sys,
                             const std::string& kind, std::uint64_t seed);
ConstrainedSystem load_constrained_system(const std::string& dir);

void save_nonlinear_plant(const std::string& dir, const NonlinearPlant& plant);
NonlinearPlant load_nonlinear_plant(const std::string& dir);

}  // namespace hinfdae
