#pragma once

// Tanno connection calculus in an orthonormal contact frame.
//
// All vectors and endomorphisms are expressed in the full frame
// (X_0, X_1, ..., X_2d): a vector is a length 2d+1 array, an endomorphism a
// (2d+1)x(2d+1) matrix acting on columns.  The connection satisfies
// nabla X_0 = 0, so row and column 0 of every connection matrix vanish.

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "contactcurv/core.hpp"
#include "contactcurv/model.hpp"
#include "json.hpp"

namespace contactcurv {

namespace detail {

// Gamma(a,b,g) with nabla_{X_a} X_b = sum_g Gamma(a,b,g) X_g.  Linear in c,
// so applying it to dc gives the frame derivatives of Gamma.
inline Tensor3 connection_from(const Tensor3& c) {
  const int n = c.dim(0);
  Tensor3 G(n);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j)
      for (int k = 1; k < n; ++k) G(i, j, k) = 0.5 * (c(i, j, k) + c(k, i, j) + c(k, j, i));
  for (int i = 1; i < n; ++i)
    for (int k = 1; k < n; ++k) G(0, i, k) = 0.5 * (c(k, 0, i) - c(i, 0, k));
  return G;
}

// tau as a matrix: tau(X_i) = sum_k tau(k, i) X_k.
inline Mat torsion_endomorphism_from(const Tensor3& c) {
  const int n = c.dim(0);
  Mat t = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i)
    for (int k = 1; k < n; ++k) t(k, i) = 0.5 * (c(k, 0, i) + c(i, 0, k));
  return t;
}

inline Mat complex_structure_from(const Tensor3& c) {
  const int n = c.dim(0);
  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) J(j, i) = c(i, j, 0);
  return J;
}

inline Mat commutator(const Mat& a, const Mat& b) { return a * b - b * a; }

}  // namespace detail

class TannoGeometry {
 public:
  explicit TannoGeometry(FrameJets jets) : jets_(std::move(jets)) {
    n_ = jets_.n();
    order_ = jets_.order();
    const Tensor3& c = jets_.c;
    gamma_ = detail::connection_from(c);
    J_ = detail::complex_structure_from(c);
    tau_ = detail::torsion_endomorphism_from(c);
    conn_.assign(size_t(n_), Mat::Zero(n_, n_));
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int g = 0; g < n_; ++g) conn_[size_t(a)](g, b) = gamma_(a, b, g);
    torsion_ = Tensor3(n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int g = 0; g < n_; ++g) torsion_(a, b, g) = gamma_(a, b, g) - gamma_(b, a, g) - c(a, b, g);
    if (order_ >= 1) build_first_order();
    if (order_ >= 2) build_second_order();
  }

  int n() const { return n_; }
  int d() const { return (n_ - 1) / 2; }
  int order() const { return order_; }
  const FrameJets& jets() const { return jets_; }

  double c(int a, int b, int g) const { return jets_.c(a, b, g); }
  double gamma(int a, int b, int g) const { return gamma_(a, b, g); }
  const Tensor3& gamma() const { return gamma_; }
  // Matrix of v -> nabla_{X_a} v acting on constant components.
  const Mat& connection(int a) const { return conn_[size_t(a)]; }
  Mat connection_along(const Vec& u) const {
    Mat m = Mat::Zero(n_, n_);
    for (int a = 0; a < n_; ++a)
      if (u(a) != 0.0) m += u(a) * conn_[size_t(a)];
    return m;
  }

  const Mat& J() const { return J_; }
  const Mat& tau() const { return tau_; }
  const Tensor3& torsion() const { return torsion_; }
  Vec torsion(const Vec& u, const Vec& v) const {
    Vec out = Vec::Zero(n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        const double w = u(a) * v(b);
        if (w == 0.0) continue;
        for (int g = 0; g < n_; ++g) out(g) += w * torsion_(a, b, g);
      }
    return out;
  }

  // nabla_{X_mu} J as an endomorphism; Q(u, v) = (nabla_v J) u.
  const Mat& nabla_J(int mu) const {
    require(1);
    return nabla_J_[size_t(mu)];
  }
  Vec Q(const Vec& u, const Vec& v) const {
    require(1);
    Vec out = Vec::Zero(n_);
    for (int mu = 0; mu < n_; ++mu)
      if (v(mu) != 0.0) out += v(mu) * (nabla_J_[size_t(mu)] * u);
    return out;
  }

  const Mat& nabla_tau(int mu) const {
    require(1);
    return nabla_tau_[size_t(mu)];
  }
  Mat nabla_tau(const Vec& u) const {
    require(1);
    Mat m = Mat::Zero(n_, n_);
    for (int mu = 0; mu < n_; ++mu)
      if (u(mu) != 0.0) m += u(mu) * nabla_tau_[size_t(mu)];
    return m;
  }

  // (nabla^2_{w,u} tau) = (nabla_w (nabla tau))(u).
  Mat nabla2_tau(const Vec& w, const Vec& u) const {
    require(2);
    Mat m = Mat::Zero(n_, n_);
    for (int nu = 0; nu < n_; ++nu)
      for (int mu = 0; mu < n_; ++mu) {
        const double s = w(nu) * u(mu);
        if (s != 0.0) m += s * nabla2_tau_[size_t(nu)][size_t(mu)];
      }
    return m;
  }

  // (nabla_w Q)(u, v).
  Vec nabla_Q(const Vec& w, const Vec& u, const Vec& v) const {
    require(2);
    Vec out = Vec::Zero(n_);
    for (int nu = 0; nu < n_; ++nu)
      for (int mu = 0; mu < n_; ++mu) {
        const double s = w(nu) * v(mu);
        if (s != 0.0) out += s * (nabla2_J_[size_t(nu)][size_t(mu)] * u);
      }
    return out;
  }

  // R(X_a, X_b, X_g, X_z) = g(R(X_a, X_b) X_g, X_z).
  double curvature(int a, int b, int g, int z) const {
    require(1);
    return curvature_[((size_t(a) * n_ + b) * n_ + g) * n_ + z];
  }
  double curvature(const Vec& x, const Vec& y, const Vec& z, const Vec& w) const {
    require(1);
    double s = 0.0;
    for (int a = 0; a < n_; ++a) {
      if (x(a) == 0.0) continue;
      for (int b = 0; b < n_; ++b) {
        const double xy = x(a) * y(b);
        if (xy == 0.0) continue;
        for (int g = 0; g < n_; ++g) {
          if (z(g) == 0.0) continue;
          const size_t base = ((size_t(a) * n_ + b) * n_ + g) * n_;
          for (int e = 0; e < n_; ++e) s += xy * z(g) * w(e) * curvature_[base + size_t(e)];
        }
      }
    }
    return s;
  }

  // (nabla_{X_nu} T)(X_a, X_b) as a vector.
  Vec nabla_torsion(int nu, int a, int b) const {
    require(1);
    const Tensor3& dG = dgamma_[size_t(nu)];
    const Tensor3& dc = jets_.dc[size_t(nu)];
    Vec out(n_);
    for (int g = 0; g < n_; ++g) {
      double s = dG(a, b, g) - dG(b, a, g) - dc(a, b, g);
      for (int e = 0; e < n_; ++e)
        s += gamma_(nu, e, g) * torsion_(a, b, e) - gamma_(nu, a, e) * torsion_(e, b, g) -
             gamma_(nu, b, e) * torsion_(a, e, g);
      out(g) = s;
    }
    return out;
  }

  // X_mu applied to the frame components of J.
  const Mat& frame_derivative_J(int mu) const {
    require(1);
    return dJ_[size_t(mu)];
  }

 private:
  void require(int order) const {
    if (order_ < order)
      throw InvalidModel("this quantity needs frame derivatives of order " + std::to_string(order) +
                         " of the structural functions");
  }

  void build_first_order() {
    dgamma_.clear();
    for (int mu = 0; mu < n_; ++mu) dgamma_.push_back(detail::connection_from(jets_.dc[size_t(mu)]));
    for (int mu = 0; mu < n_; ++mu) {
      dJ_.push_back(detail::complex_structure_from(jets_.dc[size_t(mu)]));
      dtau_.push_back(detail::torsion_endomorphism_from(jets_.dc[size_t(mu)]));
      nabla_J_.push_back(dJ_.back() + detail::commutator(conn_[size_t(mu)], J_));
      nabla_tau_.push_back(dtau_.back() + detail::commutator(conn_[size_t(mu)], tau_));
    }
    curvature_.assign(size_t(n_) * n_ * n_ * n_, 0.0);
    const Tensor3& c = jets_.c;
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int g = 0; g < n_; ++g)
          for (int z = 0; z < n_; ++z) {
            double s = dgamma_[size_t(a)](b, g, z) - dgamma_[size_t(b)](a, g, z);
            for (int e = 0; e < n_; ++e)
              s += gamma_(b, g, e) * gamma_(a, e, z) - gamma_(a, g, e) * gamma_(b, e, z) - c(a, b, e) * gamma_(e, g, z);
            curvature_[((size_t(a) * n_ + b) * n_ + g) * n_ + z] = s;
          }
  }

  void build_second_order() {
    nabla2_tau_.assign(size_t(n_), std::vector<Mat>(size_t(n_)));
    nabla2_J_.assign(size_t(n_), std::vector<Mat>(size_t(n_)));
    for (int nu = 0; nu < n_; ++nu)
      for (int mu = 0; mu < n_; ++mu) {
        const Tensor3& d2c = jets_.d2c[size_t(nu)][size_t(mu)];
        Mat dconn = Mat::Zero(n_, n_);  // X_nu of connection(mu)
        for (int b = 0; b < n_; ++b)
          for (int g = 0; g < n_; ++g) dconn(g, b) = dgamma_[size_t(nu)](mu, b, g);
        // X_nu(nabla_mu A) for A = tau, J, then the covariant correction.
        const Mat x_tau = detail::torsion_endomorphism_from(d2c) + detail::commutator(dconn, tau_) +
                          detail::commutator(conn_[size_t(mu)], dtau_[size_t(nu)]);
        const Mat x_J = detail::complex_structure_from(d2c) + detail::commutator(dconn, J_) +
                        detail::commutator(conn_[size_t(mu)], dJ_[size_t(nu)]);
        Mat t2 = x_tau + detail::commutator(conn_[size_t(nu)], nabla_tau_[size_t(mu)]);
        Mat j2 = x_J + detail::commutator(conn_[size_t(nu)], nabla_J_[size_t(mu)]);
        for (int e = 0; e < n_; ++e) {
          const double w = gamma_(nu, mu, e);
          if (w == 0.0) continue;
          t2 -= w * nabla_tau_[size_t(e)];
          j2 -= w * nabla_J_[size_t(e)];
        }
        nabla2_tau_[size_t(nu)][size_t(mu)] = t2;
        nabla2_J_[size_t(nu)][size_t(mu)] = j2;
      }
  }

  FrameJets jets_;
  int n_ = 0;
  int order_ = 0;
  Tensor3 gamma_;
  Tensor3 torsion_;
  Mat J_, tau_;
  std::vector<Mat> conn_;
  std::vector<Tensor3> dgamma_;
  std::vector<Mat> dJ_, dtau_, nabla_J_, nabla_tau_;
  std::vector<std::vector<Mat>> nabla2_tau_, nabla2_J_;
  std::vector<double> curvature_;
};

inline TannoGeometry tanno_at(const ContactModel& model, const Vec& x, int order) {
  return TannoGeometry(model.jets(x, order));
}

// ---------------------------------------------------------------------------
// Validation of the frame data.

struct ValidationReport {
  int points = 0;
  double antisymmetry = 0.0;
  double reeb = 0.0;
  double compatibility = 0.0;
  double jacobi = 0.0;
  double tolerance = 1e-9;

  bool ok() const {
    return antisymmetry <= tolerance && reeb <= tolerance && compatibility <= tolerance && jacobi <= tolerance;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> f;
    if (antisymmetry > tolerance) f.push_back("antisymmetry");
    if (reeb > tolerance) f.push_back("reeb");
    if (compatibility > tolerance) f.push_back("compatibility");
    if (jacobi > tolerance) f.push_back("jacobi");
    return f;
  }
  nlohmann::json to_json() const {
    return {{"points", points},
            {"tolerance", tolerance},
            {"residuals",
             {{"antisymmetry", antisymmetry}, {"reeb", reeb}, {"compatibility", compatibility}, {"jacobi", jacobi}}},
            {"failures", failures()},
            {"ok", ok()}};
  }
};

// The Jacobi residual includes the frame-derivative terms, so it applies to
// every model, not only to left-invariant ones.
inline ValidationReport validate(const ContactModel& model, const std::vector<Vec>& points, double tol = -1.0) {
  ValidationReport r;
  r.tolerance = tol > 0.0 ? tol : model.flag_tolerance();
  const std::vector<Vec> pts = points.empty() ? std::vector<Vec>{model.origin()} : points;
  const int n = model.dim();
  for (const Vec& x : pts) {
    const FrameJets j = model.jets(x, model.left_invariant() ? 0 : 1);
    const Tensor3& c = j.c;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int g = 0; g < n; ++g) r.antisymmetry = std::max(r.antisymmetry, std::abs(c(a, b, g) + c(b, a, g)));
    for (int a = 0; a < n; ++a) r.reeb = std::max(r.reeb, std::abs(c(a, 0, 0)));
    const Mat Jh = detail::complex_structure_from(c).bottomRightCorner(n - 1, n - 1);
    r.compatibility =
        std::max(r.compatibility, (Jh * Jh + Mat::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff());
    double jac = 0.0;
    if (j.dc.empty()) {
      jac = detail::jacobi_residual(c);
    } else {
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int g = 0; g < n; ++g)
            for (int z = 0; z < n; ++z) {
              double s = 0.0;
              for (int e = 0; e < n; ++e)
                s += c(b, g, e) * c(a, e, z) + c(g, a, e) * c(b, e, z) + c(a, b, e) * c(g, e, z);
              s += j.dc[size_t(a)](b, g, z) + j.dc[size_t(b)](g, a, z) + j.dc[size_t(g)](a, b, z);
              jac = std::max(jac, std::abs(s));
            }
    }
    r.jacobi = std::max(r.jacobi, jac);
    ++r.points;
  }
  return r;
}

// Reads a model file and rejects it unless validate() passes.
inline std::shared_ptr<const LieAlgebraModel> load_model_file(const std::string& path) {
  auto m = read_model_file(path);
  const ValidationReport r = validate(*m, {});
  if (!r.ok()) {
    std::string what = "model file " + path + " fails:";
    for (const auto& f : r.failures()) what += " " + f;
    throw InvalidModel(what);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Tensor summaries.

struct YangMillsReport {
  Vec tau_form;      // sum_i (nabla_{X_i} tau)(X_i)
  Mat torsion_form;  // column b: sum_i (nabla_{X_i} T)(X_i, X_b)
  double tau_residual = 0.0;
  double torsion_residual = 0.0;
  // Deviation of torsion_form from -g(tr Q, Y) X_0 - omega(Y) tau_form.
  double equivalence_gap = 0.0;
  bool is_yang_mills = false;
};

inline YangMillsReport yang_mills_residual(const TannoGeometry& geo, double tol) {
  const int n = geo.n();
  YangMillsReport r;
  r.tau_form = Vec::Zero(n);
  r.torsion_form = Mat::Zero(n, n);
  Vec trace_q = Vec::Zero(n);
  for (int i = 1; i < n; ++i) {
    const Vec e = Vec::Unit(n, i);
    r.tau_form += geo.nabla_tau(i) * e;
    trace_q += geo.Q(e, e);
    for (int b = 0; b < n; ++b) r.torsion_form.col(b) += geo.nabla_torsion(i, i, b);
  }
  Mat expected = Mat::Zero(n, n);
  expected.col(0) = -r.tau_form;
  for (int b = 1; b < n; ++b) expected(0, b) = -trace_q(b);
  r.tau_residual = r.tau_form.cwiseAbs().maxCoeff();
  r.torsion_residual = r.torsion_form.cwiseAbs().maxCoeff();
  r.equivalence_gap = (r.torsion_form - expected).cwiseAbs().maxCoeff();
  r.is_yang_mills = r.tau_residual <= tol && r.torsion_residual <= tol;
  return r;
}

inline YangMillsReport yang_mills_residual(const ContactModel& model, const Vec& x) {
  return yang_mills_residual(tanno_at(model, x, 1), model.flag_tolerance());
}

struct StructureFlags {
  bool is_K_type = false;
  bool is_CR = false;
  bool is_sasakian = false;
  bool is_yang_mills = false;
  double tau_norm = 0.0;
  double Q_norm = 0.0;
  double yang_mills_residual = 0.0;
  double tolerance = 0.0;
};

// Horizontal slices (frame indices 1..2d shifted to 0..2d-1).
struct TannoData {
  Vec point;
  Tensor3 gamma;  // gamma(i, j, k) = Gamma_ij^k
  Mat tau;
  Mat J;
  Tensor3 Q;  // Q(X_i, X_j) = sum_k Q(i, j, k) X_k
  StructureFlags flags;
};

inline TannoData tanno_tensors(const TannoGeometry& geo, const Vec& x, double tol) {
  const int n = geo.n(), m = n - 1;
  TannoData t;
  t.point = x;
  t.gamma = Tensor3(m);
  t.Q = Tensor3(m);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) {
      const Vec q = geo.Q(Vec::Unit(n, i), Vec::Unit(n, j));
      for (int k = 1; k < n; ++k) {
        t.gamma(i - 1, j - 1, k - 1) = geo.gamma(i, j, k);
        t.Q(i - 1, j - 1, k - 1) = q(k);
      }
    }
  t.tau = geo.tau().bottomRightCorner(m, m);
  t.J = geo.J().bottomRightCorner(m, m);
  const YangMillsReport ym = yang_mills_residual(geo, tol);
  t.flags.tolerance = tol;
  t.flags.tau_norm = t.tau.cwiseAbs().maxCoeff();
  t.flags.Q_norm = t.Q.max_abs();
  t.flags.yang_mills_residual = std::max(ym.tau_residual, ym.torsion_residual);
  t.flags.is_K_type = t.flags.tau_norm <= tol;
  t.flags.is_CR = t.flags.Q_norm <= tol;
  t.flags.is_sasakian = t.flags.is_K_type && t.flags.is_CR;
  t.flags.is_yang_mills = ym.is_yang_mills;
  return t;
}

inline TannoData tanno_tensors(const ContactModel& model, const Vec& x) {
  return tanno_tensors(tanno_at(model, x, 1), x, model.flag_tolerance());
}

inline Tensor3 christoffel(const ContactModel& model, const Vec& x) {
  const TannoGeometry geo = tanno_at(model, x, 0);
  const int n = geo.n();
  Tensor3 g(n - 1);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j)
      for (int k = 1; k < n; ++k) g(i - 1, j - 1, k - 1) = geo.gamma(i, j, k);
  return g;
}

inline double tanno_curvature(const ContactModel& model, const Vec& x, int i, int j, int k, int l) {
  return tanno_at(model, x, 1).curvature(i, j, k, l);
}

// Order 1: nabla_{X_mu} tau.  Order 2: nabla^2_{X_mu, X_mu} tau.
inline Mat covariant_derivative_tau(const ContactModel& model, const Vec& x, int mu, int order = 1) {
  if (order != 1 && order != 2) throw std::invalid_argument("covariant_derivative_tau: order must be 1 or 2");
  const TannoGeometry geo = tanno_at(model, x, order);
  if (order == 1) return geo.nabla_tau(mu);
  const Vec e = Vec::Unit(geo.n(), mu);
  return geo.nabla2_tau(e, e);
}

// Horizontal slice of (nabla_{X_mu} Q)(X_i, X_j).
inline Tensor3 covariant_derivative_Q(const ContactModel& model, const Vec& x, int mu) {
  const TannoGeometry geo = tanno_at(model, x, 2);
  const int n = geo.n();
  Tensor3 out(n - 1);
  const Vec w = Vec::Unit(n, mu);
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) {
      const Vec q = geo.nabla_Q(w, Vec::Unit(n, i), Vec::Unit(n, j));
      for (int k = 1; k < n; ++k) out(i - 1, j - 1, k - 1) = q(k);
    }
  return out;
}

// Max over frame pairs of |[J,J](X_a, X_b) + d omega(X_a, X_b) X_0|.  A
// diagnostic only; the Sasakian flag uses Q = tau = 0.
inline double nijenhuis_residual(const TannoGeometry& geo) {
  const int n = geo.n();
  const Tensor3& c = geo.jets().c;
  if (geo.order() < 1) throw InvalidModel("nijenhuis_residual needs first frame derivatives");
  const Mat& J = geo.J();
  auto bracket_const = [&](const Vec& u, const Vec& v) {
    Vec out = Vec::Zero(n);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (u(a) * v(b) != 0.0)
          for (int g = 0; g < n; ++g) out(g) += u(a) * v(b) * c(a, b, g);
    return out;
  };
  double worst = 0.0;
  for (int a = 1; a < n; ++a)
    for (int b = 1; b < n; ++b) {
      const Vec ea = Vec::Unit(n, a), eb = Vec::Unit(n, b);
      const Vec ja = J.col(a), jb = J.col(b);
      Vec jj = bracket_const(ja, jb);
      for (int m = 0; m < n; ++m) jj += ja(m) * geo.frame_derivative_J(m).col(b) - jb(m) * geo.frame_derivative_J(m).col(a);
      const Vec jx_y = bracket_const(ja, eb) - geo.frame_derivative_J(b).col(a);
      const Vec x_jy = bracket_const(ea, jb) + geo.frame_derivative_J(a).col(b);
      Vec nij = J * J * bracket_const(ea, eb) + jj - J * jx_y - J * x_jy;
      nij(0) += J(a, b);
      worst = std::max(worst, nij.cwiseAbs().maxCoeff());
    }
  return worst;
}

}  // namespace contactcurv
