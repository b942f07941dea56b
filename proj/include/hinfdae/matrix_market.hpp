#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>

namespace hinfdae {

// Minimal Matrix Market I/O: "coordinate real general" for sparse matrices
// and "array real general" for dense ones. Values are written with 17
// significant digits so a write/read round trip is exact for doubles.

void write_matrix_market(const std::string& path, const Eigen::SparseMatrix<double>& m);
void write_matrix_market(const std::string& path, const Eigen::MatrixXd& m);

Eigen::SparseMatrix<double> read_matrix_market_sparse(const std::string& path);
Eigen::MatrixXd read_matrix_market_dense(const std::string& path);

}  // namespace hinfdae
