#include <doctest.h>

#include <Eigen/Sparse>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hinfdae/errors.hpp"
#include "hinfdae/matrix_market.hpp"
#include "hinfdae/rng.hpp"

using namespace hinfdae;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sparse matrix market round trip is exact") {
  RandomStream rs(11);
  std::vector<Eigen::Triplet<double>> t;
  for (int k = 0; k < 40; ++k) {
    t.emplace_back(rs.uniform_int(0, 9), rs.uniform_int(0, 7), rs.normal() * 1e3);
  }
  t.emplace_back(0, 0, 1.0 / 3.0);
  Eigen::SparseMatrix<double> m(10, 8);
  m.setFromTriplets(t.begin(), t.end());

  std::string path = temp_path("hinfdae_sparse_rt.mtx");
  write_matrix_market(path, m);
  Eigen::SparseMatrix<double> back = read_matrix_market_sparse(path);
  REQUIRE(back.rows() == 10);
  REQUIRE(back.cols() == 8);
  CHECK(Eigen::SparseMatrix<double>(back - m).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("dense matrix market round trip is exact") {
  RandomStream rs(12);
  Eigen::MatrixXd m(5, 3);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = rs.normal() / 7.0;
  }
  std::string path = temp_path("hinfdae_dense_rt.mtx");
  write_matrix_market(path, m);
  Eigen::MatrixXd back = read_matrix_market_dense(path);
  CHECK((back - m).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("zero-row sparse matrices survive a round trip") {
  Eigen::SparseMatrix<double> j(0, 6);
  std::string path = temp_path("hinfdae_empty_rt.mtx");
  write_matrix_market(path, j);
  Eigen::SparseMatrix<double> back = read_matrix_market_sparse(path);
  CHECK(back.rows() == 0);
  CHECK(back.cols() == 6);
  std::remove(path.c_str());
}

TEST_CASE("malformed matrix market input is rejected") {
  std::string path = temp_path("hinfdae_bad.mtx");
  {
    std::ofstream out(path);
    out << "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 2.0 1.0\n";
  }
  CHECK_THROWS_AS(read_matrix_market_sparse(path), IoError);
  CHECK_THROWS_AS(read_matrix_market_sparse(temp_path("hinfdae_missing_file.mtx")), IoError);
  std::remove(path.c_str());
}
