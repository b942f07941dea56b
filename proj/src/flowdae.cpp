#include "hinfdae/flowdae.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "hinfdae/errors.hpp"
#include "hinfdae/matrix_market.hpp"
#include "hinfdae/rng.hpp"

namespace hinfdae {

namespace {

using Triplet = Eigen::Triplet<double>;
using SparseD = Eigen::SparseMatrix<double>;
using SparseZ = Eigen::SparseMatrix<std::complex<double>>;

void append_block(std::vector<Triplet>& t, const SparseD& m, Eigen::Index row0,
                  Eigen::Index col0, double scale = 1.0, bool transpose = false) {
  for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
    for (SparseD::InnerIterator it(m, k); it; ++it) {
      if (transpose) {
        t.emplace_back(row0 + it.col(), col0 + it.row(), scale * it.value());
      } else {
        t.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
      }
    }
  }
}

// [[E, J^T], [J, 0]] as one sparse matrix.
SparseD build_saddle(const ConstrainedSystem& sys) {
  const Eigen::Index nv = sys.n_v(), np = sys.n_p();
  std::vector<Triplet> t;
  t.reserve(sys.E.nonZeros() + 2 * sys.J.nonZeros());
  append_block(t, sys.E, 0, 0);
  append_block(t, sys.J, nv, 0);
  append_block(t, sys.J, 0, nv, 1.0, true);
  SparseD k(nv + np, nv + np);
  k.setFromTriplets(t.begin(), t.end());
  k.makeCompressed();
  return k;
}

Eigen::MatrixXcd sparse_times_complex(const SparseD& m, const Eigen::MatrixXcd& x) {
  Eigen::MatrixXcd out(m.rows(), x.cols());
  out.real() = m * x.real();
  out.imag() = m * x.imag();
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

void validate(const ConstrainedSystem& sys) {
  const Eigen::Index nv = sys.n_v(), np = sys.n_p();
  if (sys.E.rows() != nv || sys.E.cols() != nv || sys.A.cols() != nv) {
    throw DimensionMismatch("constrained system: E/A must be square of matching order");
  }
  if (sys.J.cols() != nv && np > 0) {
    throw DimensionMismatch("constrained system: J column count must equal the system order");
  }
  if (sys.B.rows() != nv || sys.C.cols() != nv) {
    throw DimensionMismatch("constrained system: B/C dimensions inconsistent with the order");
  }
  if (np >= nv) throw InvalidInput("constrained system: constraint count must be below the order");

  SparseD diff = SparseD(sys.E.transpose()) - sys.E;
  if (diff.norm() > 1e-12 * std::max(1.0, sys.E.norm())) {
    throw InvalidInput("constrained system: E is not symmetric");
  }
  Eigen::SimplicialLLT<SparseD> llt(sys.E);
  if (llt.info() != Eigen::Success) {
    throw InvalidInput("constrained system: E failed the positive-definiteness probe");
  }
  if (np > 0) {
    Eigen::MatrixXd jt = Eigen::MatrixXd(sys.J).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jt);
    qr.setThreshold(1e-10);
    if (qr.rank() < np) throw RankDeficientJ("constrained system: J is not full row rank");
  }
}

// ---------------------------------------------------------------------------
// SaddleProjector
// ---------------------------------------------------------------------------

SaddleProjector::SaddleProjector(const ConstrainedSystem& sys) : nv_(sys.n_v()), np_(sys.n_p()) {
  SparseD k = build_saddle(sys);
  lu_ = std::make_shared<Eigen::SparseLU<SparseD>>();
  lu_->compute(k);
  if (lu_->info() != Eigen::Success) {
    throw SaddleSingular("projector saddle matrix factorization failed");
  }
  e_ = sys.E;
}

Eigen::MatrixXd SaddleProjector::pi_t(const Eigen::MatrixXd& w) const {
  if (w.rows() != nv_) throw DimensionMismatch("projector input row count");
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nv_ + np_, w.cols());
  rhs.topRows(nv_) = e_ * w;
  Eigen::MatrixXd sol = lu_->solve(rhs);
  return sol.topRows(nv_);
}

Eigen::MatrixXd SaddleProjector::einv_pi(const Eigen::MatrixXd& v) const {
  if (v.rows() != nv_) throw DimensionMismatch("projector input row count");
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nv_ + np_, v.cols());
  rhs.topRows(nv_) = v;
  Eigen::MatrixXd sol = lu_->solve(rhs);
  return sol.topRows(nv_);
}

Eigen::MatrixXd SaddleProjector::pi(const Eigen::MatrixXd& v) const { return e_ * einv_pi(v); }

Eigen::MatrixXd leray_apply(const ConstrainedSystem& sys, const Eigen::MatrixXd& w) {
  return SaddleProjector(sys).pi_t(w);
}

Eigen::MatrixXd build_projector_dense(const ConstrainedSystem& sys) {
  const Eigen::Index nv = sys.n_v(), np = sys.n_p();
  if (nv > 2000) throw InvalidInput("dense projector restricted to order 2000");
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(nv, nv);
  if (np == 0) return id;
  Eigen::MatrixXd e = Eigen::MatrixXd(sys.E);
  Eigen::MatrixXd jt = Eigen::MatrixXd(sys.J).transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(e);
  if (llt.info() != Eigen::Success) throw InvalidInput("E failed the definiteness probe");
  Eigen::MatrixXd einv_jt = llt.solve(jt);                           // E^{-1} J^T
  Eigen::MatrixXd schur = jt.transpose() * einv_jt;                  // J E^{-1} J^T
  Eigen::MatrixXd x = schur.ldlt().solve(einv_jt.transpose());       // (J E^{-1} J^T)^{-1} J E^{-1}
  return id - jt * x;
}

// ---------------------------------------------------------------------------
// Shifted saddle solves
// ---------------------------------------------------------------------------

ShiftedSaddleSolver::ShiftedSaddleSolver(const ConstrainedSystem& sys, std::complex<double> p,
                                         bool transpose)
    : nv_(sys.n_v()), np_(sys.n_p()), e_(sys.E) {
  std::vector<Eigen::Triplet<std::complex<double>>> t;
  t.reserve(sys.A.nonZeros() + sys.E.nonZeros() + 2 * sys.J.nonZeros());
  for (Eigen::Index k = 0; k < sys.A.outerSize(); ++k) {
    for (SparseD::InnerIterator it(sys.A, k); it; ++it) {
      if (transpose) {
        t.emplace_back(it.col(), it.row(), std::complex<double>(it.value(), 0.0));
      } else {
        t.emplace_back(it.row(), it.col(), std::complex<double>(it.value(), 0.0));
      }
    }
  }
  for (Eigen::Index k = 0; k < sys.E.outerSize(); ++k) {
    for (SparseD::InnerIterator it(sys.E, k); it; ++it) {
      t.emplace_back(it.row(), it.col(), p * it.value());
    }
  }
  for (Eigen::Index k = 0; k < sys.J.outerSize(); ++k) {
    for (SparseD::InnerIterator it(sys.J, k); it; ++it) {
      t.emplace_back(nv_ + it.row(), it.col(), std::complex<double>(it.value(), 0.0));
      t.emplace_back(it.col(), nv_ + it.row(), std::complex<double>(it.value(), 0.0));
    }
  }
  k_ = SparseZ(nv_ + np_, nv_ + np_);
  k_.setFromTriplets(t.begin(), t.end());
  k_.makeCompressed();
  matrix_scale_ = k_.norm();

  lu_ = std::make_shared<Eigen::SparseLU<SparseZ>>();
  lu_->compute(k_);
  if (lu_->info() != Eigen::Success) {
    throw SaddleSingular("shifted saddle matrix factorization failed");
  }
}

ShiftedSaddleSolver::Result ShiftedSaddleSolver::solve(const Eigen::MatrixXcd& w) const {
  if (w.rows() != nv_) throw DimensionMismatch("shifted saddle right-hand side row count");
  Eigen::MatrixXcd rhs = Eigen::MatrixXcd::Zero(nv_ + np_, w.cols());
  rhs.topRows(nv_) = sparse_times_complex(e_, w);
  Eigen::MatrixXcd sol = lu_->solve(rhs);

  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0) {
    const double cond_estimate = matrix_scale_ * sol.norm() / rhs_norm;
    if (cond_estimate > 1e14) {
      throw IllConditioned("shifted saddle system condition estimate above 1e14");
    }
    Eigen::MatrixXcd residual = k_ * sol - rhs;
    const double denom = matrix_scale_ * sol.norm() + rhs_norm;
    if (residual.norm() > 1e-10 * denom) {
      throw SaddleSingular("shifted saddle solve residual above tolerance");
    }
  }
  Result r;
  r.z = sol.topRows(nv_);
  r.z_perp = sol.bottomRows(np_);
  return r;
}

ShiftedSaddleSolver::Result saddle_shifted_solve(const ConstrainedSystem& sys,
                                                 std::complex<double> p, const Eigen::MatrixXd& w,
                                                 bool transpose) {
  // Enforce kernel compatibility of the right-hand side before solving.
  Eigen::MatrixXd w_proj = SaddleProjector(sys).pi_t(w);
  ShiftedSaddleSolver solver(sys, p, transpose);
  return solver.solve(w_proj.cast<std::complex<double>>());
}

// ---------------------------------------------------------------------------
// Kernel compression
// ---------------------------------------------------------------------------

CompressedSystem compress_ker(const ConstrainedSystem& sys) {
  const Eigen::Index nv = sys.n_v(), np = sys.n_p();
  if (nv > 2500) throw InvalidInput("kernel compression restricted to order 2500");
  CompressedSystem out;
  if (np == 0) {
    out.theta = Eigen::MatrixXd::Identity(nv, nv);
  } else {
    Eigen::MatrixXd jt = Eigen::MatrixXd(sys.J).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jt);
    qr.setThreshold(1e-10);
    if (qr.rank() < np) throw RankDeficientJ("kernel compression: J is not full row rank");
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nv, nv);
    out.theta = q.rightCols(nv - np);
  }
  const Eigen::MatrixXd& th = out.theta;
  out.sys.E = th.transpose() * (sys.E * th);
  out.sys.A = th.transpose() * (sys.A * th);
  out.sys.B = th.transpose() * sys.B;
  out.sys.C = sys.C * th;
  out.sys.D = Eigen::MatrixXd::Zero(sys.C.rows(), sys.B.cols());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic constrained benchmark
// ---------------------------------------------------------------------------

namespace {

Eigen::Index draw_distinct(RandomStream& rs, Eigen::Index lo, Eigen::Index hi,
                           Eigen::Index avoid) {
  Eigen::Index j = avoid;
  while (j == avoid) j = lo + rs.uniform_int(0, static_cast<int>(hi - lo));
  return j;
}

// Symmetric strictly diagonally dominant (hence SPD) sparse block on
// coordinates [lo, n); diagonal entries scaled into (0, 1].
void spd_perturbation(RandomStream& rs, Eigen::Index lo, Eigen::Index n,
                      std::vector<Triplet>& out) {
  std::vector<double> offsum(n, 0.0);
  std::vector<Triplet> local;
  for (Eigen::Index i = lo; i < n; ++i) {
    for (int t = 0; t < 2; ++t) {
      Eigen::Index j = draw_distinct(rs, lo, n - 1, i);
      double v = rs.uniform(-1.0, 1.0);
      local.emplace_back(i, j, v);
      local.emplace_back(j, i, v);
      offsum[i] += std::abs(v);
      offsum[j] += std::abs(v);
    }
  }
  double max_diag = 0.0;
  std::vector<double> diag(n, 0.0);
  for (Eigen::Index i = lo; i < n; ++i) {
    diag[i] = offsum[i] + 0.1 + rs.uniform(0.0, 1.0);
    max_diag = std::max(max_diag, diag[i]);
  }
  for (auto& t : local) out.emplace_back(t.row(), t.col(), t.value() / max_diag);
  for (Eigen::Index i = lo; i < n; ++i) out.emplace_back(i, i, diag[i] / max_diag);
}

SparseD build_e_matrix(RandomStream& rs, Eigen::Index nv, Eigen::Index bulk0) {
  std::vector<Triplet> pt;
  spd_perturbation(rs, bulk0, nv, pt);
  std::vector<Triplet> et;
  for (Eigen::Index i = 0; i < nv; ++i) et.emplace_back(i, i, 1.0);
  for (const auto& t : pt) et.emplace_back(t.row(), t.col(), 0.1 * t.value());
  SparseD e(nv, nv);
  e.setFromTriplets(et.begin(), et.end());
  e.makeCompressed();
  return e;
}

// Symmetric positive definite "diffusion" block on [lo, n): diagonally
// dominant, O(1) entries.
void spd_diffusion(RandomStream& rs, Eigen::Index lo, Eigen::Index n, std::vector<Triplet>& out) {
  std::vector<double> offsum(n, 0.0);
  std::vector<Triplet> local;
  for (Eigen::Index i = lo; i < n; ++i) {
    for (int t = 0; t < 2; ++t) {
      Eigen::Index j = draw_distinct(rs, lo, n - 1, i);
      double v = rs.uniform(-0.5, 0.5);
      local.emplace_back(i, j, v);
      local.emplace_back(j, i, v);
      offsum[i] += std::abs(v);
      offsum[j] += std::abs(v);
    }
  }
  for (const auto& t : local) out.push_back(t);
  for (Eigen::Index i = lo; i < n; ++i) out.emplace_back(i, i, offsum[i] + 0.5 + rs.uniform(0.0, 1.0));
}

void skew_part(RandomStream& rs, Eigen::Index lo, Eigen::Index n, double amp,
               std::vector<Triplet>& out) {
  for (Eigen::Index i = lo; i < n; ++i) {
    for (int t = 0; t < 2; ++t) {
      Eigen::Index j = draw_distinct(rs, lo, n - 1, i);
      double v = rs.uniform(-amp, amp);
      out.emplace_back(i, j, v);
      out.emplace_back(j, i, -v);
    }
  }
}

// J with columns confined to [bulk0, nv); full row rank is checked by the
// caller (redraw on failure).
SparseD draw_constraint(RandomStream& rs, Eigen::Index np, Eigen::Index nv, Eigen::Index bulk0) {
  std::vector<Triplet> jt;
  for (Eigen::Index r = 0; r < np; ++r) {
    for (int t = 0; t < 4; ++t) {
      Eigen::Index c = bulk0 + rs.uniform_int(0, static_cast<int>(nv - bulk0 - 1));
      jt.emplace_back(r, c, rs.uniform(-1.0, 1.0));
    }
  }
  SparseD j(np, nv);
  j.setFromTriplets(jt.begin(), jt.end());
  j.makeCompressed();
  return j;
}

bool full_row_rank(const SparseD& j) {
  if (j.rows() == 0) return true;
  Eigen::MatrixXd jt = Eigen::MatrixXd(j).transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jt);
  qr.setThreshold(1e-10);
  return qr.rank() == j.rows();
}

Eigen::MatrixXd draw_input_map(RandomStream& rs, Eigen::Index nv, Eigen::Index m,
                               Eigen::Index n_special) {
  Eigen::MatrixXd b(nv, m);
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index c = 0; c < m; ++c) b(i, c) = rs.normal();
  }
  for (Eigen::Index i = 0; i < n_special; ++i) b(i, i % m) += 2.0;
  for (Eigen::Index c = 0; c < m; ++c) b.col(c) /= b.col(c).norm();
  return b;
}

Eigen::MatrixXd draw_output_map(RandomStream& rs, Eigen::Index p, Eigen::Index nv,
                                Eigen::Index n_special) {
  Eigen::MatrixXd c(p, nv);
  for (Eigen::Index r = 0; r < p; ++r) {
    for (Eigen::Index i = 0; i < nv; ++i) c(r, i) = rs.normal();
  }
  for (Eigen::Index i = 0; i < n_special; ++i) c(i % p, i) += 2.0;
  for (Eigen::Index r = 0; r < p; ++r) c.row(r) /= c.row(r).norm();
  return c;
}

}  // namespace

ConstrainedSystem gen_synthetic_dae(const SyntheticParams& params) {
  const Eigen::Index nv = params.n_v, np = params.n_p, m = params.m, p = params.p;
  const int k = params.n_unstable;
  if (k < 0 || k > 4) throw InvalidInput("planted instability count must lie in [0, 4]");
  if (np < 0 || 2 * np >= nv) throw InvalidInput("constraint count must stay below half the order");
  if (nv < 8 || m < 1 || p < 1) throw InvalidInput("generator needs n_v >= 8 and m, p >= 1");

  for (int attempt = 0; attempt < 50; ++attempt) {
    RandomStream rs(params.seed + 1000003ull * static_cast<std::uint64_t>(attempt));
    const Eigen::Index bulk0 = k;

    ConstrainedSystem sys;
    sys.E = build_e_matrix(rs, nv, bulk0);

    std::vector<Triplet> at;
    for (int i = 0; i < k; ++i) at.emplace_back(i, i, 0.2 + 0.15 * i);
    // weak one-way coupling from the planted modes into the bulk
    for (int i = 0; i < k; ++i) {
      for (int t = 0; t < 2; ++t) {
        Eigen::Index r = bulk0 + rs.uniform_int(0, static_cast<int>(nv - bulk0 - 1));
        at.emplace_back(r, i, rs.uniform(-0.05, 0.05));
      }
    }
    std::vector<Triplet> kt;
    spd_diffusion(rs, bulk0, nv, kt);
    for (const auto& t : kt) at.emplace_back(t.row(), t.col(), -t.value());
    skew_part(rs, bulk0, nv, 1.0, at);
    sys.A = SparseD(nv, nv);
    sys.A.setFromTriplets(at.begin(), at.end());
    sys.A.makeCompressed();

    sys.J = draw_constraint(rs, np, nv, bulk0);
    if (!full_row_rank(sys.J)) continue;

    sys.B = draw_input_map(rs, nv, m, k);
    sys.C = draw_output_map(rs, p, nv, k);
    return sys;
  }
  throw RankDeficientJ("could not draw a full-row-rank constraint in 50 attempts");
}

// ---------------------------------------------------------------------------
// Bilinear convection form
// ---------------------------------------------------------------------------

Eigen::VectorXd BilinearForm::apply(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const {
  if (v.size() != n || w.size() != n) throw DimensionMismatch("bilinear form operand size");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (const auto& q : quads) {
    const double vk = q.s * v[q.k];
    out[q.i] += vk * w[q.j];
    out[q.j] -= vk * w[q.i];
  }
  return out;
}

Eigen::SparseMatrix<double> BilinearForm::frozen_first(const Eigen::VectorXd& vbar) const {
  if (vbar.size() != n) throw DimensionMismatch("bilinear form operand size");
  std::vector<Triplet> t;
  t.reserve(2 * quads.size());
  for (const auto& q : quads) {
    const double vk = q.s * vbar[q.k];
    t.emplace_back(q.i, q.j, vk);
    t.emplace_back(q.j, q.i, -vk);
  }
  SparseD m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

Eigen::SparseMatrix<double> BilinearForm::frozen_second(const Eigen::VectorXd& wbar) const {
  if (wbar.size() != n) throw DimensionMismatch("bilinear form operand size");
  std::vector<Triplet> t;
  t.reserve(2 * quads.size());
  for (const auto& q : quads) {
    t.emplace_back(q.i, q.k, q.s * wbar[q.j]);
    t.emplace_back(q.j, q.k, -q.s * wbar[q.i]);
  }
  SparseD m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

Eigen::SparseMatrix<double> BilinearForm::jacobian(const Eigen::VectorXd& vbar) const {
  SparseD m = frozen_first(vbar) + frozen_second(vbar);
  m.makeCompressed();
  return m;
}

// ---------------------------------------------------------------------------
// Nonlinear toy plant
// ---------------------------------------------------------------------------

namespace {

// Linearization of the three-coordinate convection core at its steady value.
Eigen::Matrix3d core_linearization(const std::vector<BilinearQuad>& core,
                                   const Eigen::Vector3d& nu) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (const auto& q : core) {
    m(q.i, q.j) += q.s * nu[q.k];
    m(q.j, q.i) -= q.s * nu[q.k];
    m(q.i, q.k) += q.s * nu[q.j];
    m(q.j, q.k) -= q.s * nu[q.i];
  }
  return m;
}

double max_real_eig(const Eigen::Matrix3d& m) {
  Eigen::EigenSolver<Eigen::Matrix3d> es(m);
  return es.eigenvalues().real().maxCoeff();
}

double sign_draw(RandomStream& rs) { return rs.uniform() < 0.5 ? -1.0 : 1.0; }

}  // namespace

NonlinearPlant gen_toy_nonlinear(const ToyParams& params) {
  const Eigen::Index nv = params.n_v, np = params.n_p, m = params.m, p = params.p;
  if (np < 0 || 2 * np >= nv) throw InvalidInput("constraint count must stay below half the order");
  if (nv < 12 || m < 1 || p < 1) throw InvalidInput("generator needs n_v >= 12 and m, p >= 1");
  if (!(params.reynolds_like > 0.0)) throw InvalidInput("reynolds_like must be positive");

  for (int attempt = 0; attempt < 25; ++attempt) {
    RandomStream rs(params.seed + 1000003ull * static_cast<std::uint64_t>(attempt));
    const Eigen::Index bulk0 = 3;

    SparseD e = build_e_matrix(rs, nv, bulk0);

    // Three-coordinate convection core with an exactly computable stability
    // threshold: its linearization at the steady value is -kappa/re*I + M, so
    // the constrained system is unstable exactly when re > kappa / max Re
    // eig(M).
    std::vector<BilinearQuad> core;
    Eigen::Vector3d nu;
    double mu_max = 0.0;
    bool core_ok = false;
    for (int redraw = 0; redraw < 60 && !core_ok; ++redraw) {
      core.clear();
      const int triples[3][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
      for (const auto& tr : triples) {
        double sg = sign_draw(rs);
        double mag = rs.uniform(0.5, 1.5);
        core.push_back({tr[0], tr[1], tr[2], sg * mag});
      }
      for (int i = 0; i < 3; ++i) {
        double sg = sign_draw(rs);
        double mag = rs.uniform(0.5, 1.5);
        nu[i] = sg * mag;
      }
      Eigen::Matrix3d mcore = core_linearization(core, nu);
      mu_max = max_real_eig(mcore);
      if (mu_max < 0.05) continue;
      // The unstable core modes must be reachable and visible: every
      // component of their right and left eigenvectors must overlap the
      // actuation/sensing bumps placed on the core coordinates.
      core_ok = true;
      for (int side = 0; side < 2 && core_ok; ++side) {
        Eigen::Matrix3d mside = side == 0 ? mcore : Eigen::Matrix3d(mcore.transpose());
        Eigen::EigenSolver<Eigen::Matrix3d> es(mside);
        for (int i = 0; i < 3 && core_ok; ++i) {
          if (es.eigenvalues()[i].real() < 0.5 * mu_max) continue;
          if (es.eigenvectors().col(i).cwiseAbs().minCoeff() < 1e-4) core_ok = false;
        }
      }
    }
    if (!core_ok) continue;

    const double critical_target = rs.uniform(48.0, 72.0);
    const double kappa = critical_target * mu_max;
    const double critical_re = kappa / mu_max;

    BilinearForm convection;
    convection.n = nv;
    convection.quads = core;
    // One-way coupling: core amplitudes modulate skew convection in the bulk.
    for (int t = 0; t < 6; ++t) {
      int kk = t % 3;
      Eigen::Index i = bulk0 + rs.uniform_int(0, static_cast<int>(nv - bulk0 - 1));
      Eigen::Index j = draw_distinct(rs, bulk0, nv - 1, i);
      convection.quads.push_back({kk, static_cast<int>(i), static_cast<int>(j),
                                  rs.uniform(-0.4, 0.4)});
    }
    // Bulk-internal convection (vanishes in the linearization at the steady
    // state, which has zero bulk part, but drives the nonlinear dynamics).
    for (Eigen::Index t = 0; t < nv / 2; ++t) {
      Eigen::Index kk = bulk0 + rs.uniform_int(0, static_cast<int>(nv - bulk0 - 1));
      Eigen::Index i = draw_distinct(rs, bulk0, nv - 1, kk);
      Eigen::Index j = i;
      while (j == i || j == kk) j = bulk0 + rs.uniform_int(0, static_cast<int>(nv - bulk0 - 1));
      convection.quads.push_back({static_cast<int>(kk), static_cast<int>(i), static_cast<int>(j),
                                  rs.uniform(-0.5, 0.5)});
    }

    // Diffusion K: kappa on the core, diagonally dominant SPD bulk.
    std::vector<Triplet> kt;
    for (int i = 0; i < 3; ++i) kt.emplace_back(i, i, kappa);
    spd_diffusion(rs, bulk0, nv, kt);
    SparseD kmat(nv, nv);
    kmat.setFromTriplets(kt.begin(), kt.end());
    SparseD a_s = kmat * (-1.0 / params.reynolds_like);
    a_s.makeCompressed();

    SparseD j = draw_constraint(rs, np, nv, bulk0);
    if (!full_row_rank(j)) continue;

    Eigen::MatrixXd b = draw_input_map(rs, nv, m, 3);
    Eigen::MatrixXd c = draw_output_map(rs, p, nv, 3);

    Eigen::VectorXd v_inf = Eigen::VectorXd::Zero(nv);
    v_inf.head<3>() = nu;
    Eigen::VectorXd p_inf(np);
    for (Eigen::Index i = 0; i < np; ++i) p_inf[i] = rs.normal();

    Eigen::VectorXd f = -(a_s * v_inf) - convection.apply(v_inf, v_inf);
    if (np > 0) f -= SparseD(j.transpose()) * p_inf;

    NonlinearPlant plant;
    plant.lin.E = e;
    plant.lin.A = a_s + convection.jacobian(v_inf);
    plant.lin.A.makeCompressed();
    plant.lin.J = j;
    plant.lin.B = b;
    plant.lin.C = c;
    plant.A_s = a_s;
    plant.convection = convection;
    plant.v_inf = v_inf;
    plant.f = f;
    plant.reynolds_like = params.reynolds_like;
    plant.critical_re = critical_re;
    plant.seed = params.seed;

    // Verify the advertised threshold on the constrained linearization;
    // redraw if the construction was degenerate.
    CompressedSystem comp = compress_ker(plant.lin);
    StabilityReport rep = is_stable(comp.sys);
    const bool should_be_unstable = params.reynolds_like > critical_re;
    if (rep.stable == should_be_unstable) continue;
    return plant;
  }
  throw NumericalFailure("could not generate a verified nonlinear toy plant in 25 attempts");
}

// ---------------------------------------------------------------------------
// Linearization perturbation families
// ---------------------------------------------------------------------------

namespace {

// Solves [[A_lin, J^T], [J, 0]] [x; q] = [rhs; 0] for a real system matrix.
Eigen::VectorXd constrained_solve(const SparseD& a_lin, const SparseD& j,
                                  const Eigen::VectorXd& rhs) {
  const Eigen::Index nv = a_lin.rows(), np = j.rows();
  std::vector<Triplet> t;
  append_block(t, a_lin, 0, 0);
  append_block(t, j, nv, 0);
  append_block(t, j, 0, nv, 1.0, true);
  SparseD k(nv + np, nv + np);
  k.setFromTriplets(t.begin(), t.end());
  k.makeCompressed();
  Eigen::SparseLU<SparseD> lu(k);
  if (lu.info() != Eigen::Success) throw SaddleSingular("constrained solve factorization failed");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(nv + np);
  full.head(nv) = rhs;
  Eigen::VectorXd sol = lu.solve(full);
  return sol.head(nv);
}

}  // namespace

PerturbedLinearization perturb_linearization(const NonlinearPlant& plant, PerturbationMode mode,
                                             int ell) {
  if (ell < 0) throw InvalidInput("perturbation index must be nonnegative");
  const SparseD& a_s = plant.A_s;
  const BilinearForm& nform = plant.convection;

  Eigen::VectorXd v;
  if (mode == PerturbationMode::picard_like) {
    // Damped fixed-point iteration toward the steady state from a distant
    // start: each step solves the steady system with frozen convection.
    v = 0.5 * plant.v_inf;
    const int steps = std::min(ell, 200);
    const double tau = 0.5;
    for (int it = 0; it < steps; ++it) {
      SparseD frozen = a_s + nform.frozen_first(v);
      Eigen::VectorXd w = constrained_solve(frozen, plant.lin.J, -plant.f);
      v = (1.0 - tau) * v + tau * w;
    }
  } else {
    // Steady state recomputed at the scaled diffusion strength by damped
    // Newton on the constrained residual.
    const double scale = 1.0 / (1.0 + ell / 1000.0);
    SparseD a_scaled = a_s * scale;
    SaddleProjector proj(plant.lin);
    v = plant.v_inf;
    const double tol = 1e-11 * (1.0 + plant.f.norm());
    bool converged = false;
    for (int it = 0; it < 50 && !converged; ++it) {
      Eigen::VectorXd residual = a_scaled * v + nform.apply(v, v) + plant.f;
      double rnorm = proj.pi(residual).norm();
      if (rnorm <= tol) {
        converged = true;
        break;
      }
      SparseD jac = a_scaled + nform.jacobian(v);
      Eigen::VectorXd delta = constrained_solve(jac, plant.lin.J, -residual);
      double step = 1.0;
      bool accepted = false;
      while (step >= 1.0 / 1024.0) {
        Eigen::VectorXd trial = v + step * delta;
        Eigen::VectorXd trial_res = a_scaled * trial + nform.apply(trial, trial) + plant.f;
        if (proj.pi(trial_res).norm() < (1.0 - 1e-4 * step) * rnorm) {
          v = trial;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) throw SteadyStateDivergence("damped Newton stalled at the scaled strength");
    }
    if (!converged) {
      Eigen::VectorXd residual = a_scaled * v + nform.apply(v, v) + plant.f;
      if (proj.pi(residual).norm() > tol) {
        throw SteadyStateDivergence("damped Newton did not reach the steady-state tolerance");
      }
    }
  }

  PerturbedLinearization out;
  out.sys = plant.lin;
  out.sys.A = a_s + nform.jacobian(v);
  out.sys.A.makeCompressed();
  out.distance = SparseD(out.sys.A - plant.lin.A).norm();
  out.v_point = v;
  return out;
}

// ---------------------------------------------------------------------------
// Directory serialization
// ---------------------------------------------------------------------------

namespace {

namespace fs = std::filesystem;

void write_system_matrices(const std::string& dir, const ConstrainedSystem& sys) {
  fs::create_directories(dir);
  write_matrix_market(dir + "/E.mtx", sys.E);
  write_matrix_market(dir + "/A.mtx", sys.A);
  write_matrix_market(dir + "/J.mtx", sys.J);
  write_matrix_market(dir + "/B.mtx", sys.B);
  write_matrix_market(dir + "/C.mtx", sys.C);
}

ConstrainedSystem read_system_matrices(const std::string& dir) {
  ConstrainedSystem sys;
  sys.E = read_matrix_market_sparse(dir + "/E.mtx");
  sys.A = read_matrix_market_sparse(dir + "/A.mtx");
  sys.J = read_matrix_market_sparse(dir + "/J.mtx");
  sys.B = read_matrix_market_dense(dir + "/B.mtx");
  sys.C = read_matrix_market_dense(dir + "/C.mtx");
  return sys;
}

nlohmann::json base_manifest(const ConstrainedSystem& sys, const std::string& kind,
                             std::uint64_t seed) {
  return nlohmann::json{{"n_v", sys.n_v()}, {"n_p", sys.n_p()},   {"m", sys.inputs()},
                        {"p", sys.outputs()}, {"seed", seed}, {"kind", kind}};
}

void write_manifest(const std::string& dir, const nlohmann::json& manifest) {
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot open manifest for writing: " + dir);
  out << manifest.dump(2) << "\n";
}

}  // namespace

void save_constrained_system(const std::string& dir, const ConstrainedSystem& sys,
                             const std::string& kind, std::uint64_t seed) {
  write_system_matrices(dir, sys);
  write_manifest(dir, base_manifest(sys, kind, seed));
}

ConstrainedSystem load_constrained_system(const std::string& dir) {
  if (!fs::exists(dir + "/manifest.json")) throw IoError("missing manifest: " + dir);
  return read_system_matrices(dir);
}

void save_nonlinear_plant(const std::string& dir, const NonlinearPlant& plant) {
  write_system_matrices(dir, plant.lin);
  write_matrix_market(dir + "/A_s.mtx", plant.A_s);
  write_matrix_market(dir + "/v_inf.mtx", Eigen::MatrixXd(plant.v_inf));
  write_matrix_market(dir + "/f.mtx", Eigen::MatrixXd(plant.f));
  nlohmann::json manifest = base_manifest(plant.lin, "toy_nonlinear", plant.seed);
  manifest["reynolds_like"] = plant.reynolds_like;
  manifest["critical_re"] = plant.critical_re;
  nlohmann::json quads = nlohmann::json::array();
  for (const auto& q : plant.convection.quads) {
    quads.push_back({q.k, q.i, q.j, q.s});
  }
  manifest["quads"] = quads;
  write_manifest(dir, manifest);
}

NonlinearPlant load_nonlinear_plant(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw IoError("missing manifest: " + dir);
  nlohmann::json manifest = nlohmann::json::parse(in, nullptr, true, true);
  if (manifest.value("kind", "") != "toy_nonlinear") {
    throw IoError("directory does not hold a nonlinear plant: " + dir);
  }
  NonlinearPlant plant;
  plant.lin = read_system_matrices(dir);
  plant.A_s = read_matrix_market_sparse(dir + "/A_s.mtx");
  plant.v_inf = read_matrix_market_dense(dir + "/v_inf.mtx").col(0);
  plant.f = read_matrix_market_dense(dir + "/f.mtx").col(0);
  plant.reynolds_like = manifest.at("reynolds_like").get<double>();
  plant.critical_re = manifest.at("critical_re").get<double>();
  plant.seed = manifest.at("seed").get<std::uint64_t>();
  plant.convection.n = plant.lin.n_v();
  for (const auto& q : manifest.at("quads")) {
    plant.convection.quads.push_back(
        {q.at(0).get<int>(), q.at(1).get<int>(), q.at(2).get<int>(), q.at(3).get<double>()});
  }
  return plant;
}

}  // namespace hinfdae
