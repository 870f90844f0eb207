#pragma once

// Built-in Laplace test problems and Matrix Market coordinate I/O.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "ecg/core_linalg.hpp"

namespace ecg {

struct Problem {
  std::string name;
  CsrMatrix a;
  std::vector<double> rhs;
};

// tridiag(-1, 2, -1) of order n.
inline CsrMatrix laplace_1d(std::size_t n) {
  if (n == 0) throw std::invalid_argument("laplace1d: n must be positive");
  std::vector<std::tuple<std::size_t, std::size_t, double>> e;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) e.emplace_back(i, i - 1, -1.0);
    e.emplace_back(i, i, 2.0);
    if (i + 1 < n) e.emplace_back(i, i + 1, -1.0);
  }
  return CsrMatrix::from_triplets(n, n, std::move(e));
}

// Dirichlet Laplacian on an nx-by-ny grid, lexicographic ordering (x fastest).
// The 5-point stencil is [4; -1 x4], the 9-point stencil [8; -1 x8].
inline CsrMatrix laplace_2d(std::size_t nx, std::size_t ny, bool nine_point = false) {
  if (nx == 0 || ny == 0) throw std::invalid_argument("laplace2d: grid dimensions must be positive");
  const std::size_t n = nx * ny;
  std::vector<std::tuple<std::size_t, std::size_t, double>> e;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t row = j * nx + i;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0) {
            e.emplace_back(row, row, nine_point ? 8.0 : 4.0);
            continue;
          }
          if (!nine_point && di != 0 && dj != 0) continue;
          const long ii = long(i) + di, jj = long(j) + dj;
          if (ii < 0 || jj < 0 || ii >= long(nx) || jj >= long(ny)) continue;
          e.emplace_back(row, std::size_t(jj) * nx + std::size_t(ii), -1.0);
        }
    }
  return CsrMatrix::from_triplets(n, n, std::move(e));
}

namespace detail {
inline std::size_t parse_dim(const std::string& text, const std::string& spec) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || value == 0)
    throw std::invalid_argument("problem '" + spec + "': invalid dimension '" + text + "'");
  return value;
}
}  // namespace detail

// Specs: laplace1d:N, laplace2d:K or laplace2d:KxL (5-point), laplace2d9:K or laplace2d9:KxL.
inline Problem generate_problem(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("problem '" + spec + "': expected name:dims");
  const std::string kind = spec.substr(0, colon), dims = spec.substr(colon + 1);
  Problem prob;
  prob.name = spec;
  if (kind == "laplace1d") {
    prob.a = laplace_1d(detail::parse_dim(dims, spec));
  } else if (kind == "laplace2d" || kind == "laplace2d9") {
    const auto x = dims.find('x');
    const std::size_t nx = detail::parse_dim(dims.substr(0, x), spec);
    const std::size_t ny = x == std::string::npos ? nx : detail::parse_dim(dims.substr(x + 1), spec);
    prob.a = laplace_2d(nx, ny, kind == "laplace2d9");
  } else {
    throw std::invalid_argument("problem '" + spec + "': unknown generator '" + kind + "'");
  }
  prob.rhs.assign(prob.a.n_rows, 1.0);
  return prob;
}

class MatrixMarketError : public std::runtime_error {
 public:
  MatrixMarketError(std::size_t line, const std::string& what)
      : std::runtime_error("matrix market line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct MatrixMarketHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t entries = 0;
  bool symmetric = false;
};

namespace detail {
inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}
}  // namespace detail

// Reads the banner, comments and size line. line_no is left on the size line.
inline MatrixMarketHeader read_matrix_market_header(std::istream& in, std::size_t& line_no) {
  std::string line;
  line_no = 0;
  if (!std::getline(in, line)) throw MatrixMarketError(1, "empty file");
  ++line_no;
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry, extra;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket") throw MatrixMarketError(line_no, "missing %%MatrixMarket banner");
  if (detail::lower(object) != "matrix" || detail::lower(format) != "coordinate")
    throw MatrixMarketError(line_no, "only 'matrix coordinate' files are supported");
  if (detail::lower(field) != "real") throw MatrixMarketError(line_no, "only real fields are supported");
  symmetry = detail::lower(symmetry);
  if (symmetry != "general" && symmetry != "symmetric")
    throw MatrixMarketError(line_no, "symmetry must be general or symmetric");
  if (banner >> extra) throw MatrixMarketError(line_no, "trailing tokens in banner");

  MatrixMarketHeader h;
  h.symmetric = symmetry == "symmetric";
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream size_line(line);
    if (!(size_line >> h.rows >> h.cols >> h.entries) || (size_line >> extra))
      throw MatrixMarketError(line_no, "malformed size line");
    return h;
  }
  throw MatrixMarketError(line_no, "missing size line");
}

inline CsrMatrix read_matrix_market(std::istream& in) {
  std::size_t line_no = 0;
  const MatrixMarketHeader h = read_matrix_market_header(in, line_no);
  if (h.rows != h.cols)
    throw MatrixMarketError(line_no, "matrix is not square (" + std::to_string(h.rows) + "x" +
                                         std::to_string(h.cols) + ")");

  std::vector<std::tuple<std::size_t, std::size_t, double>> e;
  e.reserve(h.symmetric ? 2 * h.entries : h.entries);
  std::string line, extra;
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '%' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream entry(line);
    std::size_t i = 0, j = 0;
    double v = 0.0;
    if (!(entry >> i >> j >> v) || (entry >> extra)) throw MatrixMarketError(line_no, "malformed entry");
    if (i == 0 || j == 0 || i > h.rows || j > h.cols) throw MatrixMarketError(line_no, "index out of range");
    if (++seen > h.entries) throw MatrixMarketError(line_no, "more entries than declared");
    e.emplace_back(i - 1, j - 1, v);
    if (h.symmetric && i != j) e.emplace_back(j - 1, i - 1, v);
  }
  if (seen != h.entries)
    throw MatrixMarketError(line_no, "expected " + std::to_string(h.entries) + " entries, found " +
                                         std::to_string(seen));
  return CsrMatrix::from_triplets(h.rows, h.cols, std::move(e));
}

inline CsrMatrix load_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file: " + path);
  return read_matrix_market(in);
}

// General storage, one entry per stored nonzero, values round-trip exactly.
inline void write_matrix_market(std::ostream& out, const CsrMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.n_rows << ' ' << a.n_cols << ' ' << a.nnz() << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < a.n_rows; ++r)
    for (std::size_t k = a.row_offsets[r]; k < a.row_offsets[r + 1]; ++k)
      out << r + 1 << ' ' << a.col_indices[k] + 1 << ' ' << a.values[k] << '\n';
}

}  // namespace ecg
