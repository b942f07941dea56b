#include "hinfdae/matrix_market.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "hinfdae/errors.hpp"

namespace hinfdae {

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Header {
  bool coordinate = false;
  Eigen::Index rows = 0, cols = 0, nnz = 0;
};

Header read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty matrix market file: " + path);
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || object != "matrix")
    throw IoError("not a matrix market file: " + path);
  if (field != "real" && field != "integer")
    throw IoError("unsupported matrix market field '" + field + "' in " + path);
  if (symmetry != "general")
    throw IoError("unsupported matrix market symmetry '" + symmetry + "' in " + path);

  Header h;
  if (format == "coordinate")
    h.coordinate = true;
  else if (format != "array")
    throw IoError("unsupported matrix market format '" + format + "' in " + path);

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream sizes(line);
    if (h.coordinate) {
      if (!(sizes >> h.rows >> h.cols >> h.nnz))
        throw IoError("bad size line in " + path);
    } else {
      if (!(sizes >> h.rows >> h.cols)) throw IoError("bad size line in " + path);
    }
    return h;
  }
  throw IoError("missing size line in " + path);
}

}  // namespace

void write_matrix_market(const std::string& path, const Eigen::SparseMatrix<double>& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  for (int k = 0; k < m.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it)
      out << it.row() + 1 << " " << it.col() + 1 << " " << format_value(it.value()) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

void write_matrix_market(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "%%MatrixMarket matrix array real general\n";
  out << m.rows() << " " << m.cols() << "\n";
  // Array format is column major.
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out << format_value(m(i, j)) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

Eigen::SparseMatrix<double> read_matrix_market_sparse(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  Header h = read_header(in, path);
  Eigen::SparseMatrix<double> m(h.rows, h.cols);
  if (h.coordinate) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(h.nnz));
    Eigen::Index i, j;
    double v;
    for (Eigen::Index k = 0; k < h.nnz; ++k) {
      if (!(in >> i >> j >> v)) throw IoError("truncated coordinate data in " + path);
      if (i < 1 || i > h.rows || j < 1 || j > h.cols)
        throw IoError("index out of range in " + path);
      trips.emplace_back(i - 1, j - 1, v);
    }
    m.setFromTriplets(trips.begin(), trips.end());
  } else {
    std::vector<Eigen::Triplet<double>> trips;
    double v;
    for (Eigen::Index j = 0; j < h.cols; ++j)
      for (Eigen::Index i = 0; i < h.rows; ++i) {
        if (!(in >> v)) throw IoError("truncated array data in " + path);
        if (v != 0.0) trips.emplace_back(i, j, v);
      }
    m.setFromTriplets(trips.begin(), trips.end());
  }
  m.makeCompressed();
  return m;
}

Eigen::MatrixXd read_matrix_market_dense(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  Header h = read_header(in, path);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h.rows, h.cols);
  if (h.coordinate) {
    Eigen::Index i, j;
    double v;
    for (Eigen::Index k = 0; k < h.nnz; ++k) {
      if (!(in >> i >> j >> v)) throw IoError("truncated coordinate data in " + path);
      if (i < 1 || i > h.rows || j < 1 || j > h.cols)
        throw IoError("index out of range in " + path);
      m(i - 1, j - 1) += v;
    }
  } else {
    double v;
    for (Eigen::Index j = 0; j < h.cols; ++j)
      for (Eigen::Index i = 0; i < h.rows; ++i) {
        if (!(in >> v)) throw IoError("truncated array data in " + path);
        m(i, j) = v;
      }
  }
  return m;
}

}  // namespace hinfdae
