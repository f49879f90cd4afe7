#pragma once

// Test fixtures: random left-invariant contact structures and a
// non-left-invariant frame on the Heisenberg group.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "contactcurv/model.hpp"
#include "contactcurv/structure.hpp"

namespace testsupport {

using contactcurv::Generic3dParams;
using contactcurv::LieAlgebraModel;
using contactcurv::Mat;
using contactcurv::Tensor3;
using contactcurv::Vec;

// tau != 0 with every Jacobi constraint active: p = -s, a s = b r, p b = a q.
inline Generic3dParams generic3d_torsion_params() {
  Generic3dParams p;
  p.c12_1 = 1.0;
  p.c12_2 = 2.0;
  p.c20_2 = 1.0;
  p.c10_1 = -1.0;
  p.c20_1 = 0.5;
  p.c10_2 = -2.0;
  return p;
}

namespace detail {

// Structure constants K(a,b,g) of a (2d+1)-dimensional Lie algebra that
// carries contact forms.
inline Tensor3 base_algebra(int d, int family) {
  const int n = 2 * d + 1;
  Tensor3 k(n);
  auto set = [&k](int a, int b, int g, double v) {
    k(a, b, g) += v;
    k(b, a, g) -= v;
  };
  if (family == 0) {  // Heisenberg
    for (int i = 1; i <= d; ++i) set(i, i + d, 0, 1.0);
    return k;
  }
  // A three-dimensional algebra on e_0, e_1, e_2 plus affine-line factors
  // [a_j, b_j] = b_j on the remaining pairs.
  switch (family) {
    case 1:  // su(2)
      set(0, 1, 2, 1.0);
      set(1, 2, 0, 1.0);
      set(2, 0, 1, 1.0);
      break;
    case 2:  // sl(2)
      set(0, 1, 1, 2.0);
      set(0, 2, 2, -2.0);
      set(1, 2, 0, 1.0);
      break;
    case 3:  // euclidean motions of the plane
      set(0, 1, 2, 1.0);
      set(0, 2, 1, -1.0);
      break;
    case 4:  // sol
      set(0, 1, 1, 1.0);
      set(0, 2, 2, -1.0);
      break;
    default:  // three-dimensional Heisenberg
      set(1, 2, 0, 1.0);
      break;
  }
  for (int j = 1; j < d; ++j) set(1 + 2 * j, 2 + 2 * j, 2 + 2 * j, 1.0);
  return k;
}

inline double bracket_form(const Tensor3& k, const Vec& w, const Vec& u, const Vec& v) {
  const int n = int(w.size());
  double s = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int g = 0; g < n; ++g) s += u(a) * v(b) * k(a, b, g) * w(g);
  return s;
}

}  // namespace detail

// A random contact form on a random contact Lie algebra, with a random
// Darboux basis of its kernel declared orthonormal.  Every such model
// satisfies antisymmetry, the Reeb condition, J^2 = -I and Jacobi exactly up
// to rounding.
inline std::shared_ptr<const LieAlgebraModel> random_left_invariant_model(int d, std::mt19937& rng) {
  const int n = 2 * d + 1;
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<int> pick(0, 5);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Tensor3 k = detail::base_algebra(d, pick(rng));
    Vec w(n);
    for (int i = 0; i < n; ++i) w(i) = gauss(rng);
    Mat omega(n, n);  // omega([e_a, e_b])
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) omega(a, b) = detail::bracket_form(k, w, Vec::Unit(n, a), Vec::Unit(n, b));
    Eigen::JacobiSVD<Mat> svd(omega, Eigen::ComputeFullV);
    const Vec sv = svd.singularValues();
    if (sv(n - 2) < 0.2 * sv(0) || sv(n - 1) > 1e-10 * std::max(1.0, sv(0))) continue;
    Vec reeb = svd.matrixV().col(n - 1);
    const double wr = w.dot(reeb);
    if (std::abs(wr) < 0.3 * w.norm()) continue;
    reeb /= wr;

    auto to_kernel = [&](Vec v) { return Vec(v - w.dot(v) * reeb); };
    std::vector<Vec> rest;
    for (int i = 0; i < 2 * d; ++i) {
      Vec v(n);
      for (int j = 0; j < n; ++j) v(j) = gauss(rng);
      rest.push_back(to_kernel(v));
    }
    auto B = [&](const Vec& u, const Vec& v) { return detail::bracket_form(k, w, u, v); };
    std::vector<Vec> us, vs;
    bool ok = true;
    while (!rest.empty()) {
      const Vec u = rest.front();
      rest.erase(rest.begin());
      size_t best = 0;
      for (size_t i = 1; i < rest.size(); ++i)
        if (std::abs(B(u, rest[i])) > std::abs(B(u, rest[best]))) best = i;
      const double buv = B(u, rest[best]);
      if (std::abs(buv) < 0.2) {
        ok = false;
        break;
      }
      const Vec v = rest[best] / buv;
      rest.erase(rest.begin() + long(best));
      for (auto& r : rest) r = Vec(r - B(r, v) * u + B(r, u) * v);
      us.push_back(u);
      vs.push_back(v);
    }
    if (!ok) continue;
    Mat P(n, n);
    P.col(0) = reeb;
    for (int i = 0; i < d; ++i) {
      P.col(1 + i) = us[size_t(i)];
      P.col(1 + d + i) = vs[size_t(i)];
    }
    const Mat Pinv = P.inverse();
    Tensor3 c(n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        Vec br = Vec::Zero(n);
        for (int p = 0; p < n; ++p)
          for (int q = 0; q < n; ++q)
            for (int g = 0; g < n; ++g) br(g) += P(p, a) * P(q, b) * k(p, q, g);
        const Vec cc = Pinv * br;
        for (int g = 0; g < n; ++g) c(a, b, g) = cc(g);
      }
    // Clean rounding noise in the exact identities.
    for (int a = 0; a < n; ++a) {
      c(a, 0, 0) = 0.0;
      c(0, a, 0) = 0.0;
      for (int b = 0; b < n; ++b)
        for (int g = 0; g < n; ++g) {
          const double s = 0.5 * (c(a, b, g) - c(b, a, g));
          c(a, b, g) = s;
          c(b, a, g) = -s;
        }
    }
    for (int i = 1; i <= d; ++i)
      for (int j = 1; j < n; ++j) {
        const double v = (j == i + d) ? 1.0 : 0.0;
        c(i, j, 0) = v;
        c(j, i, 0) = -v;
      }
    if (c.max_abs() > 30.0) continue;
    return std::make_shared<LieAlgebraModel>("random", d, std::move(c));
  }
  throw std::runtime_error("random_left_invariant_model: no admissible sample");
}

// Heisenberg algebra of dimension 2d+1 with the Reeb field acting on the
// distribution by a random symmetric A anticommuting with J.  Such an A is a
// derivation of the Heisenberg bracket, so the result is a CR structure with
// torsion tau = A (up to sign) and Q = 0.
inline std::shared_ptr<const LieAlgebraModel> torsion_heisenberg(int d, std::mt19937& rng) {
  const int n = 2 * d + 1;
  std::normal_distribution<double> gauss;
  Tensor3 c(n);
  auto set = [&c](int a, int b, int g, double v) {
    c(a, b, g) += v;
    c(b, a, g) -= v;
  };
  for (int i = 1; i <= d; ++i) set(i, i + d, 0, 1.0);
  Mat J = Mat::Zero(2 * d, 2 * d);
  for (int i = 0; i < 2 * d; ++i)
    for (int j = 0; j < 2 * d; ++j) J(j, i) = c(i + 1, j + 1, 0);
  Mat S(2 * d, 2 * d);
  for (int i = 0; i < 2 * d; ++i)
    for (int j = 0; j < 2 * d; ++j) S(i, j) = gauss(rng);
  S = (S + S.transpose()).eval();
  const Mat A = 0.5 * (S + J * S * J);
  for (int i = 0; i < 2 * d; ++i)
    for (int j = 0; j < 2 * d; ++j)
      if (A(j, i) != 0.0) set(0, i + 1, j + 1, A(j, i));
  return std::make_shared<LieAlgebraModel>("torsion_heisenberg", d, std::move(c));
}

inline Vec random_unit_horizontal(int d, std::mt19937& rng) {
  std::normal_distribution<double> gauss;
  Vec t = Vec::Zero(2 * d + 1);
  for (int i = 1; i <= 2 * d; ++i) t(i) = gauss(rng);
  return t / t.norm();
}

inline Vec random_horizontal(int d, std::mt19937& rng) {
  std::normal_distribution<double> gauss;
  Vec t = Vec::Zero(2 * d + 1);
  for (int i = 1; i <= 2 * d; ++i) t(i) = gauss(rng);
  return t;
}

// Heisenberg group in exponential coordinates (x0, x1, x2) with the
// horizontal frame rotated by the angle x1:
//   X1' = cos x1 X1 + sin x1 X2,  X2' = -sin x1 X1 + cos x1 X2.
// Then [X1', X2'] = X0 - cos x1 X1' + sin x1 X2', and the frame derivatives
// follow from X1'(x1) = cos x1, X2'(x1) = -sin x1, X0(x1) = 0.
inline std::shared_ptr<const contactcurv::FunctionModel> rotated_heisenberg(bool supply_derivatives) {
  using contactcurv::FunctionModel;
  FunctionModel::Functions f;
  f.frame = [](const Vec& x) {
    const double C = std::cos(x(1)), S = std::sin(x(1));
    Vec X1(3), X2(3), X0(3);
    X0 << 1.0, 0.0, 0.0;
    X1 << -0.5 * x(2), 1.0, 0.0;
    X2 << 0.5 * x(1), 0.0, 1.0;
    Mat m(3, 3);
    m.col(0) = X0;
    m.col(1) = C * X1 + S * X2;
    m.col(2) = -S * X1 + C * X2;
    return m;
  };
  auto fill = [](double c121, double c122) {
    Tensor3 c(3);
    c(1, 2, 0) = 1.0;
    c(2, 1, 0) = -1.0;
    c(1, 2, 1) = c121;
    c(2, 1, 1) = -c121;
    c(1, 2, 2) = c122;
    c(2, 1, 2) = -c122;
    return c;
  };
  f.c = [fill](const Vec& x) { return fill(-std::cos(x(1)), std::sin(x(1))); };
  if (supply_derivatives) {
    // Directional rates g_mu = X_mu'(x1) and their x1-derivatives.
    auto g = [](int mu, double th) { return mu == 1 ? std::cos(th) : mu == 2 ? -std::sin(th) : 0.0; };
    auto gp = [](int mu, double th) { return mu == 1 ? -std::sin(th) : mu == 2 ? -std::cos(th) : 0.0; };
    f.dc = [fill, g](const Vec& x) {
      const double th = x(1);
      std::vector<Tensor3> out;
      Tensor3 zero(3);
      for (int mu = 0; mu < 3; ++mu) {
        // d/dth(-cos) = sin, d/dth(sin) = cos
        Tensor3 t = fill(std::sin(th) * g(mu, th), std::cos(th) * g(mu, th));
        t(1, 2, 0) = 0.0;
        t(2, 1, 0) = 0.0;
        out.push_back(t);
      }
      return out;
    };
    f.d2c = [fill, g, gp](const Vec& x) {
      const double th = x(1);
      std::vector<std::vector<Tensor3>> out(3);
      for (int nu = 0; nu < 3; ++nu)
        for (int mu = 0; mu < 3; ++mu) {
          // X_nu(f'(th) g_mu(th)) = (f'' g_mu + f' g_mu') g_nu
          const double a = (std::cos(th) * g(mu, th) + std::sin(th) * gp(mu, th)) * g(nu, th);
          const double b = (-std::sin(th) * g(mu, th) + std::cos(th) * gp(mu, th)) * g(nu, th);
          Tensor3 t = fill(a, b);
          t(1, 2, 0) = 0.0;
          t(2, 1, 0) = 0.0;
          out[size_t(nu)].push_back(t);
        }
      return out;
    };
  }
  Vec origin = Vec::Zero(3);
  return std::make_shared<FunctionModel>("rotated_heisenberg", 1, origin, f);
}

// Random chart point near the origin.
inline Vec random_point(int chart_dim, std::mt19937& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec x(chart_dim);
  for (int i = 0; i < chart_dim; ++i) x(i) = u(rng);
  return x;
}

}  // namespace testsupport
