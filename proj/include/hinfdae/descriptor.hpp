#pragma once

#include <Eigen/Dense>
#include <complex>

namespace hinfdae {

// Linear time-invariant system in descriptor form
//
//   E x'(t) = A x(t) + B u(t),   y(t) = C x(t) + D u(t),
//
// with dense matrices. E is expected to be invertible (the constrained
// systems with algebraic conditions live in flowdae.hpp and are compressed
// to this form before any frequency-domain computation).
struct DescriptorSystem {
  Eigen::MatrixXd E;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  Eigen::MatrixXd D;

  Eigen::Index order() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }
};

// Builds a system with D = 0 and validates dimensions.
DescriptorSystem make_system(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B,
                             Eigen::MatrixXd C);
DescriptorSystem make_system(Eigen::MatrixXd E, Eigen::MatrixXd A, Eigen::MatrixXd B,
                             Eigen::MatrixXd C, Eigen::MatrixXd D);

// Throws DimensionMismatch when the blocks are inconsistent.
void check_dimensions(const DescriptorSystem& sys);

struct TransferSample {
  std::complex<double> s;
  Eigen::MatrixXcd value;
};

// G(s) = C (sE - A)^{-1} B + D. Throws SingularPencil when sE - A is
// numerically singular (relative solve residual above 1e-8).
Eigen::MatrixXcd eval_transfer(const DescriptorSystem& sys, std::complex<double> s);

struct StabilityReport {
  bool stable = false;
  // Finite generalized eigenvalues of (A, E), sorted by decreasing real part.
  Eigen::VectorXcd eigenvalues;
  double max_real() const {
    return eigenvalues.size() ? eigenvalues(0).real()
                              : -std::numeric_limits<double>::infinity();
  }
};

// Generalized spectrum of (A, E) via the QZ decomposition. An eigenvalue
// counts as stable when its real part is below -1e-10.
StabilityReport is_stable(const DescriptorSystem& sys);

// Plant with the doubled disturbance/performance channels used for output
// feedback design:
//
//   B1 = [B 0], C1 = [C; 0], D21 = [0 I_p], D12 = [0; I_m],
//   B2 = B,    C2 = C,       D11 = 0,       D22 = 0.
//
// The identity and zero blocks are implied by the structure and never
// materialized; `materialize_partitioned` expands them for small checks.
struct NormalizedPlant {
  DescriptorSystem sys;

  Eigen::Index disturbance_inputs() const { return sys.inputs() + sys.outputs(); }
  Eigen::Index performance_outputs() const { return sys.outputs() + sys.inputs(); }
};

NormalizedPlant build_normalized_plant(const DescriptorSystem& sys);

// Fully explicit two-port plant, used for small cross-checks and for plants
// that do not have the normalized structure.
struct PartitionedPlant {
  Eigen::MatrixXd E, A;
  Eigen::MatrixXd B1, B2;
  Eigen::MatrixXd C1, C2;
  Eigen::MatrixXd D11, D12, D21, D22;
};

PartitionedPlant materialize_partitioned(const NormalizedPlant& plant);

// Closed loop of the two-port plant with a strictly proper controller
// (E_k x_k' = A_k x_k + B_k y, u = C_k x_k). The controller may have order
// zero, which yields the open w -> z channel.
DescriptorSystem lft_closed_loop(const PartitionedPlant& plant, const DescriptorSystem& k);
DescriptorSystem lft_closed_loop(const NormalizedPlant& plant, const DescriptorSystem& k);

}  // namespace hinfdae
