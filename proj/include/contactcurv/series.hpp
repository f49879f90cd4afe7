#pragma once

// Truncated Taylor/Laurent series with square-matrix coefficients.
//
// A series stores the coefficients of t^k for k = k_min .. trunc.  Powers
// below k_min are exactly zero; powers above trunc are unknown.  Every
// operation propagates the truncation pessimistically, so a coefficient that
// is reported is exact given the operands (up to floating point rounding).
//
// The scalar type is a template parameter: double for production use, and an
// exact rational type (boost::multiprecision::cpp_rational) in tests.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "contactcurv/core.hpp"

namespace contactcurv {

// Zero tests used by the elimination.  Exact scalars compare with zero;
// doubles use a tolerance relative to the magnitude of the data.  The loose
// variant judges consistency of right-hand sides, which accumulate more
// rounding than the pivots do.
template <typename S>
struct ScalarTraits {
  static bool negligible(const S& v, const S& /*scale*/) { return v == S(0); }
  static bool loosely_negligible(const S& v, const S& /*scale*/) { return v == S(0); }
};

template <>
struct ScalarTraits<double> {
  static bool negligible(double v, double scale) { return std::abs(v) <= 1e-12 * scale; }
  static bool loosely_negligible(double v, double scale) { return std::abs(v) <= 1e-8 * scale; }
};

template <typename S = double>
class MatrixSeries {
 public:
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  MatrixSeries() = default;

  MatrixSeries(int n, int k_min, std::vector<Matrix> coeffs)
      : n_(n), k_min_(k_min), coeffs_(std::move(coeffs)) {
    for (const auto& c : coeffs_) {
      if (c.rows() != n_ || c.cols() != n_) {
        throw std::invalid_argument("MatrixSeries: coefficient is not " + std::to_string(n_) + "x" +
                                    std::to_string(n_));
      }
    }
  }

  // m * t^power, known exactly up to t^trunc.
  static MatrixSeries monomial(const Matrix& m, int power, int trunc) {
    if (trunc < power) throw std::invalid_argument("MatrixSeries::monomial: trunc < power");
    std::vector<Matrix> c(size_t(trunc - power + 1), Matrix::Zero(m.rows(), m.cols()));
    c[0] = m;
    return MatrixSeries(int(m.rows()), power, std::move(c));
  }

  static MatrixSeries identity(int n, int trunc) { return monomial(Matrix::Identity(n, n), 0, trunc); }

  int n() const { return n_; }
  int k_min() const { return k_min_; }
  int trunc() const { return k_min_ + int(coeffs_.size()) - 1; }
  int length() const { return int(coeffs_.size()); }
  const std::vector<Matrix>& coeffs() const { return coeffs_; }

  // Coefficient of t^power; zero below k_min, an error above trunc.
  Matrix coeff(int power) const {
    if (power > trunc()) {
      throw std::out_of_range("MatrixSeries::coeff: power " + std::to_string(power) +
                              " exceeds truncation " + std::to_string(trunc()));
    }
    if (power < k_min_) return Matrix::Zero(n_, n_);
    return coeffs_[size_t(power - k_min_)];
  }

  // Square sub-block with top-left corner (r, r) and size m, for every power.
  MatrixSeries diagonal_block(int r, int m) const {
    std::vector<Matrix> c;
    c.reserve(coeffs_.size());
    for (const auto& a : coeffs_) c.push_back(a.block(r, r, m, m));
    return MatrixSeries(m, k_min_, std::move(c));
  }

 private:
  int n_ = 0;
  int k_min_ = 0;
  std::vector<Matrix> coeffs_;
};

template <typename S>
void require_same_dim(const MatrixSeries<S>& a, const MatrixSeries<S>& b, const char* op) {
  if (a.n() != b.n()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch " + std::to_string(a.n()) +
                                " vs " + std::to_string(b.n()));
  }
}

template <typename S>
MatrixSeries<S> series_add(const MatrixSeries<S>& a, const MatrixSeries<S>& b) {
  require_same_dim(a, b, "series_add");
  const int lo = std::min(a.k_min(), b.k_min());
  const int hi = std::min(a.trunc(), b.trunc());
  std::vector<typename MatrixSeries<S>::Matrix> c;
  for (int k = lo; k <= hi; ++k) c.push_back(a.coeff(k) + b.coeff(k));
  return MatrixSeries<S>(a.n(), lo, std::move(c));
}

template <typename S>
MatrixSeries<S> series_scale(const MatrixSeries<S>& a, const S& s) {
  auto c = a.coeffs();
  for (auto& m : c) m *= s;
  return MatrixSeries<S>(a.n(), a.k_min(), std::move(c));
}

template <typename S>
MatrixSeries<S> series_mul(const MatrixSeries<S>& a, const MatrixSeries<S>& b) {
  require_same_dim(a, b, "series_mul");
  using Matrix = typename MatrixSeries<S>::Matrix;
  const int lo = a.k_min() + b.k_min();
  // c_m needs a_i for i <= m - k_min(b) and b_j for j <= m - k_min(a).
  const int hi = std::min(a.trunc() + b.k_min(), b.trunc() + a.k_min());
  std::vector<Matrix> c;
  for (int m = lo; m <= hi; ++m) {
    Matrix acc = Matrix::Zero(a.n(), a.n());
    for (int i = a.k_min(); i <= m - b.k_min(); ++i) acc += a.coeff(i) * b.coeff(m - i);
    c.push_back(std::move(acc));
  }
  return MatrixSeries<S>(a.n(), lo, std::move(c));
}

template <typename S>
MatrixSeries<S> series_derivative(const MatrixSeries<S>& a) {
  std::vector<typename MatrixSeries<S>::Matrix> c;
  for (int k = a.k_min(); k <= a.trunc(); ++k) c.push_back(a.coeff(k) * S(k));
  return MatrixSeries<S>(a.n(), a.k_min() - 1, std::move(c));
}

namespace detail {

// Gauss-Jordan reduction of a square matrix, kept so that the same reduction
// can be applied to many right-hand sides.  E * T = rref.
template <typename S>
struct ReducedSystem {
  using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix E;
  Matrix rref;
  std::vector<int> pivot_col;  // pivot column of each nonzero row
  S scale;

  explicit ReducedSystem(const Matrix& T) {
    using std::abs;
    const int rows = int(T.rows()), cols = int(T.cols());
    rref = T;
    E = Matrix::Identity(rows, rows);
    scale = S(0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (abs(T(i, j)) > scale) scale = abs(T(i, j));
    if (scale == S(0)) scale = S(1);
    int r = 0;
    for (int c = 0; c < cols && r < rows; ++c) {
      int best = r;
      for (int i = r + 1; i < rows; ++i)
        if (abs(rref(i, c)) > abs(rref(best, c))) best = i;
      if (ScalarTraits<S>::negligible(rref(best, c), scale)) {
        for (int i = r; i < rows; ++i) rref(i, c) = S(0);
        continue;
      }
      rref.row(r).swap(rref.row(best));
      E.row(r).swap(E.row(best));
      const S p = rref(r, c);
      rref.row(r) /= p;
      E.row(r) /= p;
      for (int i = 0; i < rows; ++i) {
        if (i == r || rref(i, c) == S(0)) continue;
        const S f = rref(i, c);
        rref.row(i) -= f * rref.row(r);
        E.row(i) -= f * E.row(r);
        rref(i, c) = S(0);
      }
      pivot_col.push_back(c);
      ++r;
    }
  }

  // True when every solution of T z = r shares its first `m` entries.
  bool leading_unknowns_determined(int m) const {
    std::vector<bool> is_pivot(size_t(rref.cols()), false);
    for (int c : pivot_col) is_pivot[size_t(c)] = true;
    for (int c = 0; c < m; ++c)
      if (!is_pivot[size_t(c)]) return false;
    for (size_t row = 0; row < pivot_col.size(); ++row) {
      if (pivot_col[row] >= m) continue;
      for (int f = 0; f < rref.cols(); ++f)
        if (!is_pivot[size_t(f)] && !ScalarTraits<S>::negligible(rref(int(row), f), S(1))) return false;
    }
    return true;
  }

  // Particular solution with free unknowns set to zero; throws if T z = rhs
  // is inconsistent.
  Matrix solve(const Matrix& rhs) const {
    using std::abs;
    Matrix r = E * rhs;
    S rscale = S(1);
    for (int i = 0; i < rhs.rows(); ++i)
      for (int j = 0; j < rhs.cols(); ++j)
        if (abs(rhs(i, j)) > rscale) rscale = abs(rhs(i, j));
    for (int i = int(pivot_col.size()); i < r.rows(); ++i)
      for (int j = 0; j < r.cols(); ++j)
        if (!ScalarTraits<S>::loosely_negligible(r(i, j), rscale))
          throw SingularSeries("coefficient matching is inconsistent");
    Matrix z = Matrix::Zero(rref.cols(), rhs.cols());
    for (size_t row = 0; row < pivot_col.size(); ++row) z.row(pivot_col[row]) = r.row(int(row));
    return z;
  }
};

}  // namespace detail

// Laurent inverse X of a Taylor series b with a pole of order <= pole_bound,
// found by matching b(t) X(t) = I power by power.  Writing X = t^{-p} Y, the
// equations for powers j..j+p form one fixed block-Toeplitz system whose
// solution always has a unique leading block y_j when t^p b^{-1} is analytic.
template <typename S>
MatrixSeries<S> series_invert(const MatrixSeries<S>& b, int pole_bound) {
  using Matrix = typename MatrixSeries<S>::Matrix;
  if (pole_bound < 0 || pole_bound > 3) {
    throw std::invalid_argument("series_invert: pole_bound must lie in [0, 3], got " +
                                std::to_string(pole_bound));
  }
  if (b.k_min() < 0) throw std::invalid_argument("series_invert: input must be a Taylor series");
  const int n = b.n();
  const int p = pole_bound;
  const int N = b.trunc();
  if (N < p) {
    throw std::invalid_argument("series_invert: series known only to order " + std::to_string(N) +
                                ", need at least " + std::to_string(p));
  }

  const int m = (p + 1) * n;
  Matrix T = Matrix::Zero(m, m);
  for (int r = 0; r <= p; ++r)
    for (int c = 0; c <= r; ++c) T.block(r * n, c * n, n, n) = b.coeff(r - c);
  detail::ReducedSystem<S> sys(T);
  if (!sys.leading_unknowns_determined(n)) {
    throw SingularSeries("series has order greater than pole bound " + std::to_string(p));
  }

  std::vector<Matrix> y;
  for (int j = 0; j <= N - p; ++j) {
    Matrix rhs = Matrix::Zero(m, n);
    for (int k = 0; k <= p; ++k) {
      const int power = j + k;
      Matrix blk = Matrix::Zero(n, n);
      if (power == p) blk = Matrix::Identity(n, n);
      for (int i = 0; i < j; ++i) blk -= b.coeff(power - i) * y[size_t(i)];
      rhs.block(k * n, 0, n, n) = blk;
    }
    y.push_back(sys.solve(rhs).topRows(n));
  }
  return MatrixSeries<S>(n, -p, std::move(y));
}

template <typename S>
MatrixSeries<S> operator+(const MatrixSeries<S>& a, const MatrixSeries<S>& b) {
  return series_add(a, b);
}
template <typename S>
MatrixSeries<S> operator*(const MatrixSeries<S>& a, const MatrixSeries<S>& b) {
  return series_mul(a, b);
}

}  // namespace contactcurv
