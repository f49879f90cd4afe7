#pragma once

// Small-time expansion of the geodesic cost operator
//   Q(t) = t^-2 I + Q0 + t Q1 + t^2 Q2 + O(t^3)
// on the distribution, in the basis f_1..f_2d projected from the canonical
// frame (f_1 spans S^b).
//
// Two independent routes are provided.  The series route solves the Cauchy
// problem for the pulled-back canonical frame as Taylor series, inverts B
// as a Laurent series and differentiates B^-1 A.  The closed route assembles
// the operators directly from R(0), R'(0), R''(0).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "contactcurv/canonical.hpp"
#include "contactcurv/core.hpp"
#include "contactcurv/series.hpp"
#include "json.hpp"

namespace contactcurv {

struct QExpansion {
  int d = 1;
  Mat I, Q0, Q1, Q2;
  // Largest entrywise gap between the two routes, NaN when not compared.
  double series_vs_closed_max_dev = std::numeric_limits<double>::quiet_NaN();

  const Mat& operator[](int i) const { return i == 0 ? Q0 : i == 1 ? Q1 : Q2; }

  nlohmann::json to_json() const {
    auto mat = [](const Mat& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(size_t(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[size_t(j)] = m(i, j);
        rows.push_back(r);
      }
      return rows;
    };
    nlohmann::json j = {{"d", d}, {"I", mat(I)}, {"Q0", mat(Q0)}, {"Q1", mat(Q1)}, {"Q2", mat(Q2)}, {"basis", "canonical"}};
    if (std::isnan(series_vs_closed_max_dev)) j["series_vs_closed_max_dev"] = nullptr;
    else j["series_vs_closed_max_dev"] = series_vs_closed_max_dev;
    return j;
  }
};

inline double max_abs_diff(const QExpansion& x, const QExpansion& y) {
  double m = (x.I - y.I).cwiseAbs().maxCoeff();
  for (int i = 0; i < 3; ++i) m = std::max(m, (x[i] - y[i]).cwiseAbs().maxCoeff());
  return m;
}

namespace detail {

inline void check_curvature_matrix(const Mat& R, int d, const char* who) {
  const int n = 2 * d + 1;
  if (R.rows() != n || R.cols() != n)
    throw ConfigError(std::string(who) + ": curvature data must be " + std::to_string(n) + "x" + std::to_string(n));
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw ConfigError(std::string(who) + ": curvature data must be symmetric");
  if (std::abs(R(0, 1)) > 1e-10 * scale)
    throw ConfigError(std::string(who) + ": the (a,b) entry of the curvature must vanish");
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

}  // namespace detail

// Taylor coefficients of A(t), B(t) through t^order for
//   d/dt [A B; C D] = [C1 -C2; R(t) -C1^T] [A B; C D],  A(0) = D(0) = I.
// R_taylor holds derivatives R(0), R'(0), R''(0), ...; the recursion to order
// N touches R^(j)(0) for j <= N - 2.
inline std::pair<MatrixSeries<>, MatrixSeries<>> cauchy_taylor(const std::vector<Mat>& R_taylor, int d, int order) {
  if (order < 1) throw ConfigError("cauchy_taylor: order must be positive");
  if (int(R_taylor.size()) < order - 1)
    throw ConfigError("cauchy_taylor: order " + std::to_string(order) + " needs " + std::to_string(order - 1) +
                      " curvature derivatives, got " + std::to_string(R_taylor.size()));
  const int n = 2 * d + 1;
  for (const auto& R : R_taylor) detail::check_curvature_matrix(R, d, "cauchy_taylor");
  const Mat C1 = jacobi_C1(n), C2 = jacobi_C2(n);

  // Blocks of the k-th coefficient, kept separately to use the sparsity of C1, C2.
  std::vector<Mat> A{Mat::Identity(n, n)}, B{Mat::Zero(n, n)}, C{Mat::Zero(n, n)}, D{Mat::Identity(n, n)};
  for (int k = 0; k < order; ++k) {
    Mat Cn = -C1.transpose() * C[size_t(k)], Dn = -C1.transpose() * D[size_t(k)];
    for (int j = 0; j <= k && j < int(R_taylor.size()); ++j) {
      const Mat Rj = R_taylor[size_t(j)] / detail::factorial(j);
      Cn += Rj * A[size_t(k - j)];
      Dn += Rj * B[size_t(k - j)];
    }
    const double inv = 1.0 / (k + 1);
    A.push_back((C1 * A[size_t(k)] - C2 * C[size_t(k)]) * inv);
    B.push_back((C1 * B[size_t(k)] - C2 * D[size_t(k)]) * inv);
    C.push_back(Cn * inv);
    D.push_back(Dn * inv);
  }
  return {MatrixSeries<>(n, 0, std::move(A)), MatrixSeries<>(n, 0, std::move(B))};
}

// Laurent series of S(t)^-1 = B(t)^-1 A(t); B has order 3 at t = 0.
inline MatrixSeries<> laurent_S_inverse(const MatrixSeries<>& A, const MatrixSeries<>& B) {
  return series_mul(series_invert(B, 3), A);
}

inline constexpr int kDefaultSeriesOrder = 9;

// Series route.  Derivatives of R beyond those supplied are taken as zero;
// the operators depend on R(0), R'(0), R''(0) only.
inline QExpansion q_operators_series(std::vector<Mat> R_taylor, int d, int order = kDefaultSeriesOrder) {
  if (R_taylor.size() < 3) throw ConfigError("q_operators_series: need R(0), R'(0) and R''(0)");
  if (order < kDefaultSeriesOrder) throw ConfigError("q_operators_series: order must be at least 9");
  const int n = 2 * d + 1;
  while (int(R_taylor.size()) < order - 1) R_taylor.push_back(Mat::Zero(n, n));
  const auto [A, B] = cauchy_taylor(R_taylor, d, order);
  const MatrixSeries<> dS = series_derivative(laurent_S_inverse(A, B)).diagonal_block(1, 2 * d);
  if (dS.trunc() < 2) throw SingularSeries("q_operators_series: expansion known only to order " + std::to_string(dS.trunc()));
  QExpansion q;
  q.d = d;
  q.I = dS.coeff(-2);
  q.Q0 = dS.coeff(0);
  q.Q1 = dS.coeff(1);
  q.Q2 = dS.coeff(2);
  if (dS.coeff(-1).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, q.I.cwiseAbs().maxCoeff()))
    throw SingularSeries("q_operators_series: unexpected t^-1 term");
  return q;
}

// Closed route, from the curvature and its first two derivatives at t = 0.
inline QExpansion q_operators_closed(const Mat& R0, const Mat& R1, const Mat& R2) {
  const int n = int(R0.rows());
  if (n < 3 || n % 2 == 0) throw ConfigError("q_operators_closed: curvature must be (2d+1)x(2d+1)");
  const int d = (n - 1) / 2, m = n - 2;
  for (const Mat* R : {&R0, &R1, &R2}) detail::check_curvature_matrix(*R, d, "q_operators_closed");

  const double Raa = R0(0, 0), Rbb = R0(1, 1);
  const Vec Rbc = R0.block(1, 2, 1, m).transpose();
  const Vec Rac = R0.block(0, 2, 1, m).transpose();
  const Mat Rcc = R0.bottomRightCorner(m, m);
  const double dRbb = R1(1, 1), ddRbb = R2(1, 1);
  const Vec dRbc = R1.block(1, 2, 1, m).transpose(), ddRbc = R2.block(1, 2, 1, m).transpose();
  const Vec dRac = R1.block(0, 2, 1, m).transpose();
  const Mat dRcc = R1.bottomRightCorner(m, m), ddRcc = R2.bottomRightCorner(m, m);

  auto assemble = [m](double bb, const Vec& bc, const Mat& cc) {
    Mat q(m + 1, m + 1);
    q(0, 0) = bb;
    q.block(0, 1, 1, m) = bc.transpose();
    q.block(1, 0, m, 1) = bc;
    q.bottomRightCorner(m, m) = cc;
    return q;
  };

  QExpansion q;
  q.d = d;
  q.I = Mat::Identity(2 * d, 2 * d);
  q.I(0, 0) = 4.0;
  q.Q0 = assemble(2.0 / 15.0 * Rbb, Rbc / 12.0, Rcc / 3.0);
  q.Q1 = assemble(dRbb / 15.0, Rac / 10.0 - dRbc / 30.0, dRcc / 6.0);
  const double bb2 = (240.0 * Raa + 44.0 * Rbb * Rbb + 65.0 * Rbc.squaredNorm() + 240.0 * ddRbb) / 35.0;
  const Vec bc2 = Rbb * Rbc - 2.0 * Rcc * Rbc + 12.0 * dRac - 6.0 * ddRbc;
  const Mat cc2 = 16.0 * Rcc * Rcc + Rbc * Rbc.transpose() + 12.0 * ddRcc;
  q.Q2 = assemble(bb2, bc2, cc2) / 240.0;
  return q;
}

struct GeodesicExpansion {
  QExpansion series;
  QExpansion closed;
  std::vector<Mat> R_taylor;  // R(0), R'(0), R''(0) in the canonical frame
};

struct ExpansionOptions {
  int order = kDefaultSeriesOrder;
  // R(t) is sampled at k * step, k = 0..samples-1, with step divided by the
  // rate scale of the extremal, and fitted by a polynomial of degree `degree`.
  double step = 1e-2;
  int samples = 9;
  int degree = 6;
  FlowOptions flow;
};

namespace detail {

// Derivatives at 0 of the least-squares polynomial through (t_k, R(t_k)).
inline std::vector<Mat> fit_derivatives(const std::vector<double>& t, const std::vector<Mat>& R, int degree, int count) {
  const int N = int(t.size());
  const double scale = t.back();
  Mat V(N, degree + 1);
  for (int k = 0; k < N; ++k)
    for (int p = 0; p <= degree; ++p) V(k, p) = std::pow(t[size_t(k)] / scale, p);
  const Eigen::ColPivHouseholderQR<Mat> qr(V);
  const int rows = int(R[0].rows()), cols = int(R[0].cols());
  std::vector<Mat> out(static_cast<size_t>(count), Mat::Zero(rows, cols));
  Vec y(N);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      for (int k = 0; k < N; ++k) y(k) = R[size_t(k)](i, j);
      const Vec c = qr.solve(y);
      for (int p = 0; p < count && p <= degree; ++p) out[size_t(p)](i, j) = c(p) * factorial(p) / std::pow(scale, p);
    }
  for (auto& m : out) m = (0.5 * (m + m.transpose())).eval();
  for (auto& m : out) m(0, 1) = m(1, 0) = 0.0;
  return out;
}

}  // namespace detail

// R(0), R'(0), R''(0) along the geodesic of a unit-speed covector, from
// curvature_blocks on the parallel transported frame.
inline std::vector<Mat> curvature_taylor(const ModelPtr& model, const ExtremalState& s0, const ExpansionOptions& opt = {}) {
  detail::require_unit_speed(s0, "curvature_taylor");
  const double rate = std::max({1.0, std::abs(s0.h(0)), std::sqrt(std::abs(s0.h(0)))});
  const double step = opt.step / rate;
  const double T = step * (opt.samples - 1);
  const MovingFrame mf = parallel_frame(model, s0, T, opt.flow);
  std::vector<double> ts;
  std::vector<Mat> Rs;
  for (int k = 0; k < opt.samples; ++k) {
    const double t = k * step;
    ts.push_back(t);
    Rs.push_back(curvature_blocks(mf, std::min(t, T)).assembled);
  }
  // Pin R(0) to the exact value; the fit supplies the derivatives.
  std::vector<Mat> out = detail::fit_derivatives(ts, Rs, opt.degree, 3);
  out[0] = Rs[0];
  return out;
}

inline GeodesicExpansion expansion_along_geodesic(const ModelPtr& model, const ExtremalState& s0,
                                                  const ExpansionOptions& opt = {}) {
  GeodesicExpansion e;
  e.R_taylor = curvature_taylor(model, s0, opt);
  e.series = q_operators_series(e.R_taylor, model->d(), opt.order);
  e.closed = q_operators_closed(e.R_taylor[0], e.R_taylor[1], e.R_taylor[2]);
  const double dev = max_abs_diff(e.series, e.closed);
  e.series.series_vs_closed_max_dev = dev;
  e.closed.series_vs_closed_max_dev = dev;
  return e;
}

// Curvature Taylor data of the covector alpha * lambda from that of lambda.
// The extremal of alpha * lambda is t -> alpha lambda(alpha t); its canonical
// frame is diag(alpha^-2, alpha^-1, alpha^-1) E(alpha t), diag(alpha, 1, 1)
// F(alpha t), so R scales by alpha^4 (aa), alpha^3 (ac) and alpha^2 (bb, bc,
// cc), and each derivative brings one more factor alpha.
inline std::vector<Mat> rescale_curvature_taylor(const std::vector<Mat>& R_taylor, double alpha) {
  std::vector<Mat> out;
  for (size_t k = 0; k < R_taylor.size(); ++k) {
    Mat R = R_taylor[k] * std::pow(alpha, 2.0 + double(k));
    R.row(0) *= alpha;
    R.col(0) *= alpha;
    out.push_back(R);
  }
  return out;
}

struct HomogeneityReport {
  double alpha = 1.0;
  double I_deviation = 0.0;      // max |I_{alpha lambda} - I_lambda|
  double Q_deviation[3] = {0.0, 0.0, 0.0};  // relative, per Q^(i)
  double max_relative_deviation = 0.0;

  nlohmann::json to_json() const {
    return {{"alpha", alpha},
            {"I_deviation", I_deviation},
            {"Q_relative_deviation", {Q_deviation[0], Q_deviation[1], Q_deviation[2]}},
            {"max_relative_deviation", max_relative_deviation}};
  }
};

// Expansion at alpha * lambda recomputed by the series route from rescaled
// curvature data, compared with alpha^(2+i) Q^(i)_lambda.  Deviations are
// relative to max(1, |alpha^(2+i) Q^(i)|).
inline HomogeneityReport homogeneity_check(const std::vector<Mat>& R_taylor, int d, double alpha,
                                           int order = kDefaultSeriesOrder) {
  if (!(alpha > 0.0)) throw ConfigError("homogeneity_check: alpha must be positive");
  const QExpansion base = q_operators_series(R_taylor, d, order);
  const QExpansion scaled = q_operators_series(rescale_curvature_taylor(R_taylor, alpha), d, order);
  HomogeneityReport r;
  r.alpha = alpha;
  r.I_deviation = (scaled.I - base.I).cwiseAbs().maxCoeff();
  r.max_relative_deviation = r.I_deviation;
  for (int i = 0; i < 3; ++i) {
    const Mat target = std::pow(alpha, 2 + i) * base[i];
    r.Q_deviation[i] = (scaled[i] - target).cwiseAbs().maxCoeff() / std::max(1.0, target.cwiseAbs().maxCoeff());
    r.max_relative_deviation = std::max(r.max_relative_deviation, r.Q_deviation[i]);
  }
  return r;
}

inline HomogeneityReport homogeneity_check(const ModelPtr& model, const ExtremalState& s0, double alpha,
                                           const ExpansionOptions& opt = {}) {
  return homogeneity_check(curvature_taylor(model, s0, opt), model->d(), alpha, opt.order);
}

}  // namespace contactcurv
