#pragma once

// Sequential building blocks: CSR storage, column-major block vectors and
// the small t x t kernels that every rank performs redundantly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace ecg {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when Z^T A Z stops being numerically positive definite.
class BreakdownError : public std::runtime_error {
 public:
  BreakdownError(const std::string& what, std::size_t pivot, double value)
      : std::runtime_error(what), pivot_(pivot), value_(value) {}
  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

enum class Kernel : std::size_t { spmbv, inner_product, cholesky, tri_solve, block_add, block_axpy };
inline constexpr std::size_t kKernelCount = 6;

inline const char* to_string(Kernel k) {
  static constexpr const char* names[kKernelCount] = {"spmbv",     "inner_product", "cholesky",
                                                      "tri_solve", "block_add",     "block_axpy"};
  return names[std::size_t(k)];
}

// Per-kernel flop charges and call counts. Each call is charged its line of
// the ECG kernel table (e.g. a block inner product 2 n t^2, a triangular
// solve t^2 / 2); Cholesky is t^3 / 6, hence doubles.
struct KernelFlops {
  std::array<double, kKernelCount> flops{};
  std::array<std::size_t, kKernelCount> calls{};

  void charge(Kernel k, double amount) noexcept {
    flops[std::size_t(k)] += amount;
    calls[std::size_t(k)] += 1;
  }
  double operator[](Kernel k) const noexcept { return flops[std::size_t(k)]; }
  std::size_t calls_of(Kernel k) const noexcept { return calls[std::size_t(k)]; }

  double total() const noexcept {
    double sum = 0.0;
    for (double f : flops) sum += f;
    return sum;
  }

  KernelFlops& operator+=(const KernelFlops& o) noexcept {
    for (std::size_t i = 0; i < kKernelCount; ++i) {
      flops[i] += o.flops[i];
      calls[i] += o.calls[i];
    }
    return *this;
  }

  friend bool operator==(const KernelFlops&, const KernelFlops&) = default;
};

namespace flops {
inline double spmbv(std::size_t nnz, std::size_t t) { return 2.0 * double(nnz) * double(t); }
inline double gram(std::size_t n_rows, std::size_t t) { return 2.0 * double(n_rows) * double(t * t); }
inline double cholesky(std::size_t t) { return double(t * t * t) / 6.0; }
inline double tri_solve(std::size_t t) { return 0.5 * double(t * t); }
inline double block_update(std::size_t n_rows, std::size_t t) { return 2.0 * double(n_rows) * double(t); }
}  // namespace flops

struct CsrMatrix {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::size_t> col_indices;
  std::vector<double> values;

  CsrMatrix() = default;
  CsrMatrix(std::size_t rows, std::size_t cols)
      : n_rows(rows), n_cols(cols), row_offsets(rows + 1, 0) {}

  std::size_t nnz() const noexcept { return col_indices.size(); }
  std::size_t row_nnz(std::size_t row) const { return row_offsets[row + 1] - row_offsets[row]; }

  // Throws DimensionError when any structural invariant is violated.
  void validate() const {
    if (row_offsets.size() != n_rows + 1 || row_offsets.front() != 0)
      throw DimensionError("csr: row_offsets must have n_rows+1 entries starting at 0");
    if (row_offsets.back() != col_indices.size() || col_indices.size() != values.size())
      throw DimensionError("csr: row_offsets/col_indices/values length mismatch");
    for (std::size_t i = 0; i < n_rows; ++i) {
      if (row_offsets[i] > row_offsets[i + 1]) throw DimensionError("csr: row_offsets decreasing");
      for (std::size_t k = row_offsets[i]; k < row_offsets[i + 1]; ++k) {
        if (col_indices[k] >= n_cols) throw DimensionError("csr: column index out of range");
        if (k > row_offsets[i] && col_indices[k] <= col_indices[k - 1])
          throw DimensionError("csr: column indices not strictly increasing in row " + std::to_string(i));
      }
    }
  }

  double at(std::size_t row, std::size_t col) const {
    auto first = col_indices.begin() + std::ptrdiff_t(row_offsets[row]);
    auto last = col_indices.begin() + std::ptrdiff_t(row_offsets[row + 1]);
    auto it = std::lower_bound(first, last, col);
    return (it != last && *it == col) ? values[std::size_t(it - col_indices.begin())] : 0.0;
  }

  // Builds a CSR matrix from unordered (row, col, value) triplets; duplicates are summed.
  static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                 std::vector<std::tuple<std::size_t, std::size_t, double>> entries) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    CsrMatrix m(rows, cols);
    std::size_t last_row = 0;
    for (const auto& [r, c, v] : entries) {
      if (r >= rows || c >= cols) throw DimensionError("triplet outside matrix bounds");
      if (!m.col_indices.empty() && last_row == r && m.col_indices.back() == c) {
        m.values.back() += v;
        continue;
      }
      m.col_indices.push_back(c);
      m.values.push_back(v);
      m.row_offsets[r + 1] += 1;
      last_row = r;
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_offsets[i + 1] += m.row_offsets[i];
    return m;
  }
};

// n_rows x t multivector stored column-major: column j occupies
// data[j*n_rows, (j+1)*n_rows).
class BlockVector {
 public:
  BlockVector() = default;
  BlockVector(std::size_t n_rows, std::size_t t) : n_rows_(n_rows), t_(t), data_(n_rows * t, 0.0) {
    if (t == 0) throw DimensionError("block vector width must be at least 1");
  }

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t t() const noexcept { return t_; }

  double& operator()(std::size_t row, std::size_t col) { return data_[col * n_rows_ + row]; }
  double operator()(std::size_t row, std::size_t col) const { return data_[col * n_rows_ + row]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * n_rows_, n_rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * n_rows_, n_rows_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const BlockVector&, const BlockVector&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t t_ = 1;
  std::vector<double> data_;
};

// Dense t x t matrix, row-major.
class SmallSquare {
 public:
  SmallSquare() = default;
  explicit SmallSquare(std::size_t t) : t_(t), data_(t * t, 0.0) {}

  static SmallSquare identity(std::size_t t) {
    SmallSquare s(t);
    for (std::size_t i = 0; i < t; ++i) s(i, i) = 1.0;
    return s;
  }

  static SmallSquare from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    SmallSquare s(rows.size());
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != s.t_) throw DimensionError("small square: ragged initializer");
      std::size_t j = 0;
      for (double v : row) s(i, j++) = v;
      ++i;
    }
    return s;
  }

  std::size_t t() const noexcept { return t_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * t_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * t_ + j]; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  SmallSquare transposed() const {
    SmallSquare out(t_);
    for (std::size_t i = 0; i < t_; ++i)
      for (std::size_t j = 0; j < t_; ++j) out(j, i) = (*this)(i, j);
    return out;
  }

  double frobenius() const {
    double sum = 0.0;
    for (double v : data_) sum += v * v;
    return std::sqrt(sum);
  }

  friend bool operator==(const SmallSquare&, const SmallSquare&) = default;

 private:
  std::size_t t_ = 0;
  std::vector<double> data_;
};

inline SmallSquare operator*(const SmallSquare& a, const SmallSquare& b) {
  if (a.t() != b.t()) throw DimensionError("small square product: size mismatch");
  SmallSquare c(a.t());
  for (std::size_t i = 0; i < a.t(); ++i)
    for (std::size_t k = 0; k < a.t(); ++k)
      for (std::size_t j = 0; j < a.t(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline SmallSquare operator-(const SmallSquare& a, const SmallSquare& b) {
  if (a.t() != b.t()) throw DimensionError("small square difference: size mismatch");
  SmallSquare c(a.t());
  for (std::size_t k = 0; k < a.data().size(); ++k) c.data()[k] = a.data()[k] - b.data()[k];
  return c;
}

inline constexpr double kDefaultPivotTolerance = 1e-13;

// Lower-triangular C with C C^T = s. Reads the lower triangle of s only.
// A pivot at or below pivot_rel_tol * max(diag(s)) raises BreakdownError.
inline SmallSquare cholesky(const SmallSquare& s, double pivot_rel_tol = kDefaultPivotTolerance,
                            KernelFlops* counter = nullptr) {
  const std::size_t t = s.t();
  double max_diag = 0.0;
  for (std::size_t i = 0; i < t; ++i) max_diag = std::max(max_diag, s(i, i));
  const double tol = pivot_rel_tol * max_diag;

  SmallSquare c(t);
  for (std::size_t j = 0; j < t; ++j) {
    double pivot = s(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= c(j, k) * c(j, k);
    if (!(pivot > tol) || max_diag <= 0.0)
      throw BreakdownError("cholesky breakdown at pivot " + std::to_string(j), j, pivot);
    c(j, j) = std::sqrt(pivot);
    for (std::size_t i = j + 1; i < t; ++i) {
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= c(i, k) * c(j, k);
      c(i, j) = v / c(j, j);
    }
  }
  if (counter) counter->charge(Kernel::cholesky, flops::cholesky(t));
  return c;
}

namespace detail {
inline void check_lower(const SmallSquare& c, std::size_t t) {
  if (c.t() != t) throw DimensionError("triangular solve: width mismatch");
  for (std::size_t j = 0; j < t; ++j)
    if (c(j, j) == 0.0) throw BreakdownError("triangular solve: zero diagonal", j, 0.0);
}
}  // namespace detail

// Solves X * C = b for X, C lower triangular, one block row at a time.
inline BlockVector tri_solve_multi_rhs(const BlockVector& b, const SmallSquare& c,
                                       KernelFlops* counter = nullptr) {
  const std::size_t t = b.t();
  detail::check_lower(c, t);
  BlockVector x(b.n_rows(), t);
  for (std::size_t row = 0; row < b.n_rows(); ++row) {
    for (std::size_t jj = t; jj-- > 0;) {
      double v = b(row, jj);
      for (std::size_t k = jj + 1; k < t; ++k) v -= x(row, k) * c(k, jj);
      x(row, jj) = v / c(jj, jj);
    }
  }
  if (counter) counter->charge(Kernel::tri_solve, flops::tri_solve(t));
  return x;
}

// Solves X * C^T = b for X, C lower triangular (so C^T is the upper factor).
inline BlockVector tri_solve_multi_rhs_transposed(const BlockVector& b, const SmallSquare& c,
                                                  KernelFlops* counter = nullptr) {
  const std::size_t t = b.t();
  detail::check_lower(c, t);
  BlockVector x(b.n_rows(), t);
  for (std::size_t row = 0; row < b.n_rows(); ++row) {
    for (std::size_t j = 0; j < t; ++j) {
      double v = b(row, j);
      for (std::size_t k = 0; k < j; ++k) v -= x(row, k) * c(j, k);
      x(row, j) = v / c(j, j);
    }
  }
  if (counter) counter->charge(Kernel::tri_solve, flops::tri_solve(t));
  return x;
}

// Local partial U^T V.
inline SmallSquare gram_product(const BlockVector& u, const BlockVector& v, KernelFlops* counter = nullptr) {
  if (u.n_rows() != v.n_rows() || u.t() != v.t()) throw DimensionError("gram product: shape mismatch");
  const std::size_t t = u.t();
  SmallSquare g(t);
  for (std::size_t i = 0; i < t; ++i) {
    const auto ui = u.col(i);
    for (std::size_t j = 0; j < t; ++j) {
      const auto vj = v.col(j);
      double sum = 0.0;
      for (std::size_t k = 0; k < ui.size(); ++k) sum += ui[k] * vj[k];
      g(i, j) = sum;
    }
  }
  if (counter) counter->charge(Kernel::inner_product, flops::gram(u.n_rows(), t));
  return g;
}

enum class UpdateKind { axpy, add };

// y += sign * x * coeff, in place.
inline void block_axpy_inplace(BlockVector& y, const BlockVector& x, const SmallSquare& coeff, double sign = 1.0,
                               KernelFlops* counter = nullptr, UpdateKind kind = UpdateKind::axpy) {
  if (y.n_rows() != x.n_rows() || y.t() != x.t() || coeff.t() != x.t())
    throw DimensionError("block axpy: shape mismatch");
  const std::size_t t = x.t();
  for (std::size_t i = 0; i < t; ++i) {
    auto yi = y.col(i);
    for (std::size_t j = 0; j < t; ++j) {
      const double a = sign * coeff(j, i);
      if (a == 0.0) continue;
      const auto xj = x.col(j);
      for (std::size_t k = 0; k < yi.size(); ++k) yi[k] += xj[k] * a;
    }
  }
  if (counter)
    counter->charge(kind == UpdateKind::add ? Kernel::block_add : Kernel::block_axpy, flops::block_update(x.n_rows(), t));
}

inline BlockVector block_axpy(BlockVector y, const BlockVector& x, const SmallSquare& coeff, double sign = 1.0,
                              KernelFlops* counter = nullptr) {
  block_axpy_inplace(y, x, coeff, sign, counter);
  return y;
}

// Row sums across the t columns: x = sum_i X_i.
inline std::vector<double> column_sum(const BlockVector& v) {
  std::vector<double> out(v.n_rows(), 0.0);
  for (std::size_t j = 0; j < v.t(); ++j) {
    const auto c = v.col(j);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += c[k];
  }
  return out;
}

// out = a * v (overwrites out). Columns of a index rows of v.
inline void csr_multiply(const CsrMatrix& a, const BlockVector& v, BlockVector& out) {
  if (a.n_cols != v.n_rows() || out.n_rows() != a.n_rows || out.t() != v.t())
    throw DimensionError("csr multiply: shape mismatch");
  for (std::size_t j = 0; j < v.t(); ++j) {
    const auto vj = v.col(j);
    auto oj = out.col(j);
    for (std::size_t row = 0; row < a.n_rows; ++row) {
      double sum = 0.0;
      for (std::size_t k = a.row_offsets[row]; k < a.row_offsets[row + 1]; ++k)
        sum += a.values[k] * vj[a.col_indices[k]];
      oj[row] = sum;
    }
  }
}

// out += a * v.
inline void csr_multiply_add(const CsrMatrix& a, const BlockVector& v, BlockVector& out) {
  if (a.n_cols != v.n_rows() || out.n_rows() != a.n_rows || out.t() != v.t())
    throw DimensionError("csr multiply: shape mismatch");
  for (std::size_t j = 0; j < v.t(); ++j) {
    const auto vj = v.col(j);
    auto oj = out.col(j);
    for (std::size_t row = 0; row < a.n_rows; ++row) {
      double sum = 0.0;
      for (std::size_t k = a.row_offsets[row]; k < a.row_offsets[row + 1]; ++k)
        sum += a.values[k] * vj[a.col_indices[k]];
      oj[row] += sum;
    }
  }
}

}  // namespace ecg
