#pragma once

// Canonical Jacobi frame along a normal extremal: adapted and parallel
// transported frames, the canonical splitting a + b + c of the tangent space
// and the blocks of the canonical curvature.
//
// Frames are stored as matrices whose columns are the reference-frame
// components of X_0, X_1 = -J T, X_2, ..., X_{2d-1}, X_{2d} = T.  The c-block
// of every curvature matrix is indexed by X_2, ..., X_{2d} with the tangent
// direction last.

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contactcurv/core.hpp"
#include "contactcurv/flow.hpp"
#include "contactcurv/model.hpp"
#include "contactcurv/structure.hpp"
#include "json.hpp"

namespace contactcurv {

namespace detail {

inline Vec horizontal_part(Vec v) {
  v(0) = 0.0;
  return v;
}

inline void require_unit_speed(const ExtremalState& s, const std::string& who) {
  const double e = 2.0 * hamiltonian(s);
  if (!(e > 0.0)) throw DegenerateCovector(who + ": covector has zero horizontal part");
  if (std::abs(e - 1.0) > 1e-8) throw ConfigError(who + ": needs a unit-speed covector (2H = 1)");
}

// Orthonormal completion of the columns of `fixed` by modified Gram-Schmidt
// over the seed vectors; each new vector has its first nonzero component
// positive.
inline Mat complete_orthonormal(const Mat& fixed, const Mat& seed, int count) {
  const Eigen::Index n = fixed.rows();
  Mat out(n, count);
  int found = 0;
  for (Eigen::Index k = 0; k < seed.cols() && found < count; ++k) {
    Vec v = seed.col(k);
    const double scale = v.norm();
    if (scale == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < fixed.cols(); ++j) v -= fixed.col(j).dot(v) * fixed.col(j);
      for (int j = 0; j < found; ++j) v -= out.col(j).dot(v) * out.col(j);
    }
    const double nv = v.norm();
    if (nv < 1e-8 * scale) continue;
    v /= nv;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    out.col(found++) = v;
  }
  if (found < count) throw InvalidModel("adapted frame: seed basis does not span the horizontal complement");
  return out;
}

}  // namespace detail

// Adapted frame at a single point.  The seed columns (default: the horizontal
// reference vectors X_1, ..., X_{2d}) are completed against X_0, T and J T.
inline Mat adapted_frame(const ContactModel& model, const ExtremalState& s, const Mat& seed = Mat()) {
  const int n = model.dim(), d = model.d();
  if (s.h.size() != n) throw ConfigError("covector needs " + std::to_string(n) + " components");
  if (!(hamiltonian(s) > 0.0)) throw DegenerateCovector("adapted frame: covector has zero horizontal part");
  const Mat J = tanno_at(model, s.x, 0).J();
  Vec T = detail::horizontal_part(s.h);
  T /= T.norm();
  Mat F = Mat::Zero(n, n);
  F(0, 0) = 1.0;
  F.col(1) = -J * T;
  F.col(n - 1) = T;
  if (d > 1) {
    Mat fixed(n, 3);
    fixed << F.col(0), F.col(1), T;
    Mat sd = seed;
    if (sd.size() == 0) sd = Mat::Identity(n, n).rightCols(n - 1);
    F.block(0, 2, n, n - 3) = detail::complete_orthonormal(fixed, sd, n - 3);
  }
  return F;
}

// ---------------------------------------------------------------------------
// Parallel transported frame

namespace detail {

// v' = -Gamma(T) v + (h0 J v + a(v) J T) / 2 with a(v) = g(h0 T - 2 Q(T, T), v).
struct TransportLaw {
  Mat gamma_T, J;
  Vec T, JT, A;
  double h0 = 0.0;

  TransportLaw(const TannoGeometry& g, const Vec& h) {
    h0 = h(0);
    T = horizontal_part(h);
    J = g.J();
    gamma_T = g.connection_along(T);
    JT = J * T;
    A = h0 * T - 2.0 * g.Q(T, T);
  }

  Vec operator()(const Vec& v) const { return -gamma_T * v + 0.5 * (h0 * (J * v) + A.dot(v) * JT); }
};

}  // namespace detail

class MovingFrame {
 public:
  MovingFrame(ModelPtr model, ExtremalState initial, double T, bool positions, detail::DenseSolution sol,
              std::shared_ptr<const TannoGeometry> constant_geometry)
      : model_(std::move(model)), initial_(std::move(initial)), T_(T), positions_(positions), sol_(std::move(sol)),
        constant_(std::move(constant_geometry)) {}

  const ContactModel& model() const { return *model_; }
  ModelPtr model_ptr() const { return model_; }
  int d() const { return model_->d(); }
  double T() const { return T_; }
  bool positions_tracked() const { return positions_; }
  const std::vector<double>& times() const { return sol_.times(); }

  ExtremalState state(double t) const { return unpack(sol_.at(t)).first; }

  // Tanno geometry at the base point of time t, with jets up to `order`.
  std::shared_ptr<const TannoGeometry> geometry(double t, int order) const {
    if (constant_) return constant_;
    return std::make_shared<const TannoGeometry>(tanno_at(*model_, state(t).x, order));
  }

  Mat frame(double t) const {
    const auto [s, V] = unpack(sol_.at(t));
    return assemble(s, V, *geometry(t, 0));
  }

  // a_j = g(h0 T - 2 Q(T, T), X_j), j = 1..2d (entry 0 unused).
  Vec a(double t) const {
    const ExtremalState s = state(t);
    const auto g = geometry(t, 1);
    const detail::TransportLaw law(*g, s.h);
    Vec out = frame(t).transpose() * law.A;
    out(0) = 0.0;
    return out;
  }

  double h0(double t) const { return state(t).h(0); }

  double orthonormality_defect(double t) const {
    const Mat F = frame(t);
    return (F.transpose() * F - Mat::Identity(F.cols(), F.cols())).cwiseAbs().maxCoeff();
  }

  // |X_1 + J X_{2d}|, zero by construction up to rounding.
  double adaptedness_defect(double t) const {
    const Mat F = frame(t);
    const Mat J = geometry(t, 0)->J();
    return (F.col(1) + J * F.col(F.cols() - 1)).cwiseAbs().maxCoeff();
  }

  // Largest residual of nabla_T X_j = (h0 J X_j + a_j J T) / 2 over j = 2..2d,
  // with X_j' from a fourth-order difference of the stored frame.
  double transport_residual(double t, double delta = 1e-3) const {
    const Mat dF = (-frame(t + 2 * delta) + 8.0 * frame(t + delta) - 8.0 * frame(t - delta) + frame(t - 2 * delta)) /
                   (12.0 * delta);
    const Mat F = frame(t);
    const auto g = geometry(t, 1);
    const detail::TransportLaw law(*g, state(t).h);
    double worst = 0.0;
    for (Eigen::Index j = 2; j < F.cols(); ++j) {
      const Vec nabla = dF.col(j) + law.gamma_T * F.col(j);
      const Vec rhs = 0.5 * (law.h0 * (law.J * F.col(j)) + law.A.dot(F.col(j)) * law.JT);
      worst = std::max(worst, (nabla - rhs).cwiseAbs().maxCoeff());
    }
    return worst;
  }

 private:
  std::pair<ExtremalState, Mat> unpack(const detail::State& y) const {
    const int n = model_->dim(), k = n - 3;
    const int cd = positions_ ? model_->chart_dim() : 0;
    ExtremalState s;
    s.x = positions_ ? model_->renormalize(Eigen::Map<const Vec>(y.data(), cd)) : initial_.x;
    s.h = Eigen::Map<const Vec>(y.data() + cd, n);
    Mat V(n, std::max(k, 0));
    for (int j = 0; j < k; ++j) V.col(j) = Eigen::Map<const Vec>(y.data() + cd + n * (1 + j), n);
    return {s, V};
  }

  Mat assemble(const ExtremalState& s, const Mat& V, const TannoGeometry& g) const {
    const int n = model_->dim();
    Mat F = Mat::Zero(n, n);
    const Vec T = detail::horizontal_part(s.h);
    F(0, 0) = 1.0;
    F.col(1) = -g.J() * T;
    if (n > 3) F.block(0, 2, n, n - 3) = V;
    F.col(n - 1) = T;
    return F;
  }

  ModelPtr model_;
  ExtremalState initial_;
  double T_;
  bool positions_;
  detail::DenseSolution sol_;
  std::shared_ptr<const TannoGeometry> constant_;
};

namespace detail {

// Geometry that does not depend on the base point: left-invariant models and
// homogeneous models whose jets are stored once.
inline std::shared_ptr<const TannoGeometry> constant_geometry(const ContactModel& m, int order) {
  if (!m.left_invariant()) return nullptr;
  return std::make_shared<const TannoGeometry>(tanno_at(m, m.origin(), order));
}

}  // namespace detail

// Integrates the geodesic together with X_2, ..., X_{2d-1} from the adapted
// frame at t = 0.  `seed` is passed to adapted_frame.
inline MovingFrame parallel_frame(const GeodesicRecord& geo, const FlowOptions& opt = {}, const Mat& seed = Mat()) {
  const ModelPtr model = geo.model_ptr();
  const ContactModel& m = *model;
  detail::require_unit_speed(geo.initial(), "parallel_frame");
  const int n = m.dim(), k = n - 3;
  const bool positions = geo.positions_tracked();
  const detail::GeodesicField field(m, positions);
  const int cd = field.chart_size();
  // Second-order jets are needed later for the curvature blocks; for
  // point-independent geometry build them once here.
  const int jet_order = m.left_invariant() ? 2 : 1;
  const auto constant = detail::constant_geometry(m, jet_order);

  const ExtremalState s0 = geo.initial();
  const Mat F0 = adapted_frame(m, s0, seed);
  detail::State y(size_t(cd + n + n * k));
  for (int i = 0; i < cd; ++i) y[size_t(i)] = s0.x(i);
  for (int a = 0; a < n; ++a) y[size_t(cd + a)] = s0.h(a);
  for (int j = 0; j < k; ++j)
    for (int a = 0; a < n; ++a) y[size_t(cd + n * (1 + j) + a)] = F0(a, 2 + j);

  detail::Rhs rhs = [&](const detail::State& st, detail::State& dy, double) {
    field(st.data(), dy.data());
    if (k == 0) return;
    const Vec h = Eigen::Map<const Vec>(st.data() + cd, n);
    std::shared_ptr<const TannoGeometry> g = constant;
    if (!g) g = std::make_shared<const TannoGeometry>(tanno_at(m, Eigen::Map<const Vec>(st.data(), cd), 1));
    const detail::TransportLaw law(*g, h);
    for (int j = 0; j < k; ++j) {
      const Vec v = Eigen::Map<const Vec>(st.data() + cd + n * (1 + j), n);
      const Vec dv = law(v);
      for (int a = 0; a < n; ++a) dy[size_t(cd + n * (1 + j) + a)] = dv(a);
    }
  };

  detail::PostStep post = [&m, cd, n, k, positions](detail::State& st) {
    bool changed = false;
    if (positions && m.chart_dim() != n) {
      const Vec x = Eigen::Map<const Vec>(st.data(), cd);
      const Vec r = m.renormalize(x);
      if ((r - x).cwiseAbs().maxCoeff() > 1e-10) {
        for (int i = 0; i < cd; ++i) st[size_t(i)] = r(i);
        changed = true;
      }
    }
    if (k > 0) {
      Eigen::Map<Mat> V(st.data() + cd + n, n, k);
      if ((V.transpose() * V - Mat::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10) {
        Eigen::JacobiSVD<Mat> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Mat polar = svd.matrixU() * svd.matrixV().transpose();
        V = polar;
        changed = true;
      }
    }
    return changed;
  };

  detail::DenseSolution sol;
  IntegratorStats stats;
  detail::integrate_dense(rhs, y, 0.0, geo.T(), opt, sol, stats, post);
  return MovingFrame(model, s0, geo.T(), positions, std::move(sol), detail::constant_geometry(m, 2));
}

inline MovingFrame parallel_frame(ModelPtr model, const ExtremalState& s0, double T, const FlowOptions& opt = {},
                                  const Mat& seed = Mat()) {
  FlowOptions o = opt;
  o.track_position = !model->left_invariant();
  return parallel_frame(flow(std::move(model), s0, T, o), opt, seed);
}

// ---------------------------------------------------------------------------
// Canonical splitting

struct CanonicalSplitting {
  Vec Xa;  // X_0 - sum_j a_j X_j
  Vec Xb;  // -J T
  Mat Sc;  // orthonormal basis X_2, ..., X_{2d} of (J T)^perp in D, T last
};

inline CanonicalSplitting canonical_splitting(const ContactModel& model, const ExtremalState& s) {
  detail::require_unit_speed(s, "canonical_splitting");
  const Mat F = adapted_frame(model, s);
  const TannoGeometry g = tanno_at(model, s.x, 1);
  const detail::TransportLaw law(g, s.h);
  const int n = model.dim();
  CanonicalSplitting out;
  out.Xa = Vec::Unit(n, 0) - law.A;
  out.Xb = F.col(1);
  out.Sc = F.rightCols(n - 2);
  return out;
}

// ---------------------------------------------------------------------------
// Curvature blocks

struct CurvatureBlocks {
  double t = 0.0;
  int d = 1;
  double Raa = 0.0;
  Vec Rac;
  double Rbb = 0.0;
  Vec Rbc;
  Mat Rcc;
  Mat assembled;
  double ricci_a = 0.0, ricci_b = 0.0, ricci_c = 0.0;
  std::string aa_ac_mode = "closed";
  // Antisymmetric part of R(T, X_i, X_j, T) + h0 g(T, Q(X_j, X_i)) before
  // symmetrisation (largest entry).
  double cc_asymmetry = 0.0;

  nlohmann::json to_json() const {
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json rcc = nlohmann::json::array();
    for (Eigen::Index i = 0; i < Rcc.rows(); ++i) rcc.push_back(vec(Rcc.row(i).transpose()));
    return {{"t", t},
            {"Raa", Raa},
            {"Rac", vec(Rac)},
            {"Rbb", Rbb},
            {"Rbc", vec(Rbc)},
            {"Rcc", rcc},
            {"ricci", {{"a", ricci_a}, {"b", ricci_b}, {"c", ricci_c}}},
            {"aa_ac_mode", aa_ac_mode},
            {"xa_convention", "step7"}};
  }
};

struct RicciCurvatures {
  double a = 0.0, b = 0.0, c = 0.0;
};

inline RicciCurvatures ricci(const CurvatureBlocks& r) { return {r.Raa, r.Rbb, r.Rcc.trace()}; }

namespace detail {

inline double q_norm(const TannoGeometry& g) {
  double s = 0.0;
  for (int mu = 1; mu < g.n(); ++mu) s += g.nabla_J(mu).bottomRightCorner(g.n() - 1, g.n() - 1).squaredNorm();
  return std::sqrt(s);
}

// Blocks that the closed forms give for every Q: bb, bc, cc.
inline void closed_bc_blocks(const TannoGeometry& g, double h0, const Mat& F, CurvatureBlocks& out) {
  const int n = g.n(), m = n - 2;
  const Vec T = F.col(n - 1), JT = g.J() * T;
  const Vec tT = g.tau() * T;
  const Vec QTT = g.Q(T, T);
  const Vec nQ = g.nabla_Q(T, T, T);
  const Vec A = h0 * T - 2.0 * QTT;
  out.Rbb = g.curvature(T, JT, JT, T) + 3.0 * QTT.squaredNorm() - 3.0 * tT.dot(JT) + h0 * h0;
  out.Rbc.resize(m);
  Mat raw(m, m);
  for (int i = 0; i < m; ++i) {
    const Vec Xi = F.col(2 + i);
    out.Rbc(i) = -g.curvature(T, JT, Xi, T) + tT.dot(Xi) - tT.dot(T) * T.dot(Xi) + 3.0 * nQ.dot(Xi) +
                 8.0 * h0 * QTT.dot(g.J() * Xi);
    for (int j = 0; j < m; ++j) {
      const Vec Xj = F.col(2 + j);
      raw(i, j) = g.curvature(T, Xi, Xj, T) + h0 * T.dot(g.Q(Xj, Xi));
    }
  }
  out.cc_asymmetry = (0.5 * (raw - raw.transpose())).cwiseAbs().maxCoeff();
  out.Rcc = 0.5 * (raw + raw.transpose());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const Vec Xi = F.col(2 + i), Xj = F.col(2 + j);
      out.Rcc(i, j) += 0.25 * h0 * h0 * Xi.dot(Xj) - 0.25 * Xi.dot(A) * Xj.dot(A);
    }
}

// aa and ac for Q = 0.  The second covariant derivative of tau along the
// geodesic is the derivative along the curve of (nabla_T tau), which picks up
// nabla_{nabla_T T} tau = h0 nabla_{JT} tau besides nabla^2_{T,T} tau.
// Raa for Q = 0, obtained by expanding the derivative of phi_0 along the
// geodesic.  Uses h0' = g(tau T, T), nabla_T T = h0 J T and the fact that
// every covariant derivative of tau is symmetric and anticommutes with J.
inline double closed_raa(const TannoGeometry& g, double h0, const Vec& T) {
  const int n = g.n();
  const Vec JT = g.J() * T, X0 = Vec::Unit(n, 0);
  const Vec tT = g.tau() * T;
  const double tTT = tT.dot(T);
  const Mat along = g.nabla2_tau(T, T) + h0 * g.nabla_tau(JT);  // nabla_T(nabla_T tau) on the curve
  return 2.0 * (along * T).dot(JT) - (g.nabla2_tau(T, JT) * T).dot(T) - 6.0 * h0 * (g.nabla_tau(T) * T).dot(T) -
         2.0 * h0 * (g.nabla_tau(JT) * T).dot(JT) - 2.0 * tTT * tTT - 6.0 * h0 * h0 * tT.dot(JT) -
         2.0 * tT.squaredNorm() - (g.nabla_tau(X0) * T).dot(T);
}

// The compact form of Raa that holds on Yang-Mills structures, where
// sum_i (nabla_i tau)(X_i) = 0 trades the nabla_{JT} terms for nabla_T ones.
// It differs from closed_raa otherwise.
inline double yang_mills_raa(const TannoGeometry& g, double h0, const Vec& T) {
  const int n = g.n();
  const Vec JT = g.J() * T, X0 = Vec::Unit(n, 0);
  const Vec tT = g.tau() * T;
  const Mat along = g.nabla2_tau(T, T) + h0 * g.nabla_tau(JT);
  return (along * T).dot(JT) - 5.0 * h0 * (g.nabla_tau(T) * T).dot(T) - 2.0 * std::pow(tT.dot(T), 2) -
         6.0 * h0 * h0 * tT.dot(JT) - 2.0 * tT.squaredNorm() - (g.nabla_tau(X0) * T).dot(T);
}

inline void closed_aa_ac(const TannoGeometry& g, double h0, const Mat& F, CurvatureBlocks& out) {
  const int n = g.n(), m = n - 2;
  const Vec T = F.col(n - 1), JT = g.J() * T, X0 = Vec::Unit(n, 0);
  const Vec tT = g.tau() * T;
  const Vec nTT = g.nabla_tau(T) * T;
  out.Raa = closed_raa(g, h0, T);
  out.Rac.resize(m);
  const double tangential = nTT.dot(T) + 2.0 * h0 * tT.dot(JT);
  for (int j = 0; j < m; ++j) {
    const Vec Xj = F.col(2 + j);
    out.Rac(j) = g.curvature(T, X0, Xj, T) + nTT.dot(Xj) + 2.0 * h0 * tT.dot(g.J() * Xj) - tangential * T.dot(Xj);
  }
  out.Rac(m - 1) = 0.0;
}

// Symplectic-product route on a left-invariant structure.  Tangent vectors to
// T*G are written in left-trivialised components (v, eta): v the reference
// components of the projection, eta the variation of h.  The canonical frame
// elements E_a, E_b, E_c, F_a, F_b, F_c are assembled from the adapted lifted
// frame; their derivatives along the extremal are central differences of the
// components pulled back by the linearised flow.
class SymplecticRoute {
 public:
  // Pulled-back frames are sampled at t + k h, |k| <= kHalfWidth, and
  // differentiated with the weights of the interpolating polynomial.  The
  // spacing is kSpacing divided by the rate scale of the extremal.
  static constexpr int kHalfWidth = 4;
  static constexpr double kSpacing = 1e-2;

  explicit SymplecticRoute(const MovingFrame& mf) : mf_(mf), n_(mf.model().dim()), k_(n_ - 3) {
    if (!mf.model().left_invariant())
      throw InvalidModel("the symplectic-product route needs a left-invariant model");
    g_ = mf.geometry(0.0, 2);
    c_ = g_->jets().c;
    double cmax = 0.0;
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int e = 0; e < n_; ++e) cmax = std::max(cmax, std::abs(c_(a, b, e)));
    const double rate = cmax * std::max(1.0, std::abs(mf.state(0.0).h(0)));
    spacing_ = kSpacing / std::max(1.0, rate);
  }

  struct Result {
    Mat R;          // sigma(dF_alpha, F_beta) over (a, b, c_2..c_2d)
    Mat E, Fr;      // frame components at t, columns (a, b, c_2..c_2d)
    Mat dE, dF;     // their derivatives along the extremal
    Vec Fa_closed;  // F_a from the closed expression in terms of phi, phi_0
  };

  Result at(double t) const {
    const int m = kHalfWidth, N = 2 * m + 1;
    const ExtremalState s = mf_.state(t);
    const Mat F0 = mf_.frame(t);
    State y0(size_t(n_ + n_ * k_ + 4 * n_ * n_), 0.0);
    for (int a = 0; a < n_; ++a) y0[size_t(a)] = s.h(a);
    for (int j = 0; j < k_; ++j)
      for (int a = 0; a < n_; ++a) y0[size_t(n_ + n_ * j + a)] = F0(a, 2 + j);
    for (int i = 0; i < 2 * n_; ++i) y0[size_t(n_ + n_ * k_ + i * 2 * n_ + i)] = 1.0;

    // E and F (without F_a) pulled back to lambda(t), node by node.
    std::vector<Mat> E(static_cast<size_t>(N)), Fm(static_cast<size_t>(N));
    Vec Fa_closed;
    for (int dir : {1, -1}) {
      State y = y0;
      for (int k = 0; k <= m; ++k) {
        if (k > 0) y = transport(y, dir * spacing_);
        if (k == 0 && dir < 0) continue;
        Mat Ek, Fk;
        Vec fa;
        components(y, Ek, Fk, fa);
        if (k == 0) Fa_closed = fa;
        const Eigen::Map<const Mat> D(y.data() + n_ + n_ * k_, 2 * n_, 2 * n_);
        const Eigen::PartialPivLU<Mat> lu(D);
        E[size_t(m + dir * k)] = lu.solve(Ek);
        Fm[size_t(m + dir * k)] = lu.solve(Fk);
      }
    }
    const Mat W = derivative_weights(m);
    auto diff = [&](const std::vector<Mat>& v, int at) {
      Mat out = Mat::Zero(v[0].rows(), v[0].cols());
      for (int q = 0; q < N; ++q) out += W(at, q) * v[size_t(q)];
      return out;
    };

    // F_a from the structural equation F_b' = R_bb E_b + R_bc E_c - F_a.
    std::vector<Mat> Fa(static_cast<size_t>(N));
    for (int q = 0; q < N; ++q) {
      const Vec dFb = diff(Fm, q).col(1);
      Vec fa = -dFb;
      for (int b = 1; b < n_; ++b) fa += sigma(s.h, dFb, Fm[size_t(q)].col(b)) * E[size_t(q)].col(b);
      Fa[size_t(q)] = fa;
      Fm[size_t(q)].col(0) = fa;
    }

    Result r;
    r.E = E[size_t(m)];
    r.Fr = Fm[size_t(m)];
    r.dE = diff(E, m);
    r.dF = diff(Fm, m);
    r.Fa_closed = Fa_closed;
    r.R.resize(n_, n_);
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) r.R(a, b) = sigma(s.h, r.dF.col(a), r.Fr.col(b));
    return r;
  }

  // sigma(U, W) = <eta_U, v_W> - <v_U, eta_W> - <lambda, [v_U, v_W]>.
  double sigma(const Vec& h, const Vec& U, const Vec& W) const {
    double s = U.tail(n_).dot(W.head(n_)) - U.head(n_).dot(W.tail(n_));
    for (int mu = 0; mu < n_; ++mu)
      for (int nu = 0; nu < n_; ++nu) {
        const double w = U(mu) * W(nu);
        if (w == 0.0) continue;
        for (int a = 0; a < n_; ++a) s -= w * h(a) * c_(mu, nu, a);
      }
    return s;
  }

 private:
  // Right-hand side of (h, X_2..X_{2d-1}, D) with D the linearised flow.
  void rhs(const State& y, State& dy) const {
    const Eigen::Map<const Vec> h(y.data(), n_);
    for (int a = 0; a < n_; ++a) {
      double sum = 0.0;
      for (int i = 1; i < n_; ++i)
        for (int b = 0; b < n_; ++b) sum += h(i) * c_(i, a, b) * h(b);
      dy[size_t(a)] = sum;
    }
    const TransportLaw law(*g_, h);
    for (int j = 0; j < k_; ++j) {
      const Vec dv = law(Eigen::Map<const Vec>(y.data() + n_ + n_ * j, n_));
      for (int a = 0; a < n_; ++a) dy[size_t(n_ + n_ * j + a)] = dv(a);
    }
    const Mat L = linearisation(h);
    const Eigen::Map<const Mat> D(y.data() + n_ + n_ * k_, 2 * n_, 2 * n_);
    Eigen::Map<Mat> dD(dy.data() + n_ + n_ * k_, 2 * n_, 2 * n_);
    dD = L * D;
  }

  // Variation (w, eta) of x' = x (sum h_i e_i), h_a' = h_i c_{ia}^b h_b.
  Mat linearisation(const Vec& h) const {
    Mat L = Mat::Zero(2 * n_, 2 * n_);
    for (int g = 0; g < n_; ++g)
      for (int nu = 0; nu < n_; ++nu) {
        double s = 0.0;
        for (int i = 1; i < n_; ++i) s += h(i) * c_(nu, i, g);
        L(g, nu) = s;
      }
    for (int g = 1; g < n_; ++g) L(g, n_ + g) = 1.0;
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b) {
        double s = 0.0;
        for (int i = 1; i < n_; ++i) s += h(i) * c_(i, a, b);
        L(n_ + a, n_ + b) += s;
        if (b >= 1) {
          double u = 0.0;
          for (int e = 0; e < n_; ++e) u += c_(b, a, e) * h(e);
          L(n_ + a, n_ + b) += u;
        }
      }
    return L;
  }

  // W(i, q): derivative at node i of the interpolant through nodes q.
  Mat derivative_weights(int m) const {
    const int N = 2 * m + 1;
    Mat V(N, N);
    for (int p = 0; p < N; ++p)
      for (int q = 0; q < N; ++q) V(p, q) = std::pow(double(q - m), p);
    const Eigen::FullPivLU<Mat> lu(V);
    Mat W(N, N);
    for (int i = 0; i < N; ++i) {
      Vec b = Vec::Zero(N);
      for (int p = 1; p < N; ++p) b(p) = p * std::pow(double(i - m), p - 1);
      W.row(i) = lu.solve(b).transpose() / spacing_;
    }
    return W;
  }

  State transport(const State& y0, double span) const {
    namespace odeint = boost::numeric::odeint;
    odeint::runge_kutta4<State> rk;
    State y = y0;
    const int steps = 8;
    const double dt = span / steps;
    auto sys = [this](const State& st, State& d, double) { rhs(st, d); };
    for (int q = 0; q < steps; ++q) rk.do_step(sys, y, double(q) * dt, dt);
    return y;
  }

  // Columns (a, b, c_2..c_2d) of E and F at the state y.  F_a is left zero
  // (it is assembled from F_b'); the closed expression goes to Fa_closed.
  void components(const State& y, Mat& E, Mat& Fm, Vec& Fa_closed) const {
    const int n = n_;
    const Vec h = Eigen::Map<const Vec>(y.data(), n);
    State dy(y.size());
    rhs(y, dy);
    const Vec hd = Eigen::Map<const Vec>(dy.data(), n);
    const TannoGeometry& g = *g_;
    const Mat& J = g.J();
    const Vec T = horizontal_part(h), Td = horizontal_part(hd);
    const double h0 = h(0), h0d = hd(0);

    Mat F = Mat::Zero(n, n), Fd = Mat::Zero(n, n);
    F(0, 0) = 1.0;
    F.col(1) = -J * T;
    Fd.col(1) = -J * Td;
    for (int j = 0; j < k_; ++j) {
      F.col(2 + j) = Eigen::Map<const Vec>(y.data() + n + n * j, n);
      Fd.col(2 + j) = Eigen::Map<const Vec>(dy.data() + n + n * j, n);
    }
    F.col(n - 1) = T;
    Fd.col(n - 1) = Td;

    const Vec QTT = g.Q(T, T);
    const Vec A = h0 * T - 2.0 * QTT;
    const Vec Ad = h0d * T + h0 * Td - 2.0 * (g.Q(Td, T) + g.Q(T, Td));
    const Vec tT = g.tau() * T;
    const Vec JT = J * T;
    const Vec X1 = F.col(1);
    // Horizontal lift of X_{2d}: the extension is constant off the curve in
    // the directions X_0..X_{2d-1}, so only X_{2d} picks up the frame motion.
    const Vec lift_correction = F * (Fd.transpose() * h);
    const Vec e0 = Vec::Unit(n, 0);
    auto vert = [n](const Vec& eta) {
      Vec u = Vec::Zero(2 * n);
      u.tail(n) = eta;
      return u;
    };
    auto lifted = [&](int alpha) {
      Vec u = Vec::Zero(2 * n);
      u.head(n) = F.col(alpha);
      if (alpha == n - 1) u.tail(n) = -lift_correction;
      return u;
    };
    // g(nabla_{X_j} X_i, X_{2d}) for the extension above.
    auto nabla_dot_T = [&](int j, int i) {
      double v = (g.connection_along(F.col(j)) * F.col(i)).dot(T);
      if (j == n - 1) v += Fd.col(i).dot(T);
      return v;
    };

    E.resize(2 * n, n);
    Fm.resize(2 * n, n);
    E.col(0) = vert(e0);
    E.col(1) = vert(F.col(1));
    for (int j = 2; j < n; ++j) E.col(j) = vert(F.col(j) + A.dot(F.col(j)) * e0);

    // F_b = X_1 + 2 g(tau T, X_1) d_0 + g(Q(T,T) - nabla_{X_1} X_{2d}, X_j) d_j
    Fm.col(1) = lifted(1) + vert(2.0 * tT.dot(X1) * e0 + horizontal_part(QTT - g.connection_along(X1) * T));

    // F_{c_j} = X_j + (2 g(tau T, X_j) - a_j') d_0 + g(nabla_j X_i, X_{2d}) d_i
    //           + h0/2 g(X_i, J X_j) d_i - a_j/2 d_1
    for (int j = 2; j < n; ++j) {
      const Vec Xj = F.col(j);
      const double aj = A.dot(Xj);
      const double ajd = Ad.dot(Xj) + A.dot(Fd.col(j));
      Vec eta = (2.0 * tT.dot(Xj) - ajd) * e0 + 0.5 * h0 * horizontal_part(J * Xj) - 0.5 * aj * F.col(1);
      for (int i = 1; i < n; ++i) eta += nabla_dot_T(j, i) * F.col(i);
      Fm.col(j) = lifted(j) + vert(eta);
    }

    // F_a = X_0 - a_i X_i + phi_i d_i + phi_0 d_0 (general Q).
    const Vec nQ = g.nabla_Q(T, T, T);
    const Vec V = e0 + 2.0 * QTT;
    const Vec phi = -g.connection_along(V) * T + tT - tT.dot(T) * T - 4.0 * h0 * (J * QTT) + 2.0 * nQ;
    const double phi0 = 2.0 * (g.nabla_tau(T) * T).dot(JT) - 4.0 * h0 * tT.dot(T) + (g.nabla_tau(X1) * T).dot(T) +
                        2.0 * g.curvature(T, JT, QTT, T) + 2.0 * tT.dot(QTT) - 6.0 * nQ.dot(QTT);
    Vec Fa = Vec::Zero(2 * n);
    Fa.head(n) = e0;
    for (int i = 1; i < n; ++i) Fa -= A.dot(F.col(i)) * lifted(i);
    Fa += vert(horizontal_part(phi) + phi0 * e0);
    Fa_closed = Fa;
    Fm.col(0).setZero();
  }

  const MovingFrame& mf_;
  int n_, k_;
  double spacing_ = kSpacing;
  std::shared_ptr<const TannoGeometry> g_;
  Tensor3 c_;
};

}  // namespace detail

// (Raa, Rac) from sigma(F_a', F_a), sigma(F_a', F_{c_j}); Rac has 2d-1 entries,
// the last being the tangent slot.
inline std::pair<double, Vec> numerical_aa_ac(const MovingFrame& mf, double t) {
  const auto r = detail::SymplecticRoute(mf).at(t);
  const int n = mf.model().dim();
  return {r.R(0, 0), r.R.row(0).tail(n - 2).transpose()};
}

inline constexpr double kQThreshold = 1e-9;

inline CurvatureBlocks curvature_blocks(const MovingFrame& mf, double t) {
  const ExtremalState s = mf.state(t);
  const auto g = mf.geometry(t, 2);
  const Mat F = mf.frame(t);
  const int n = mf.model().dim(), m = n - 2;
  CurvatureBlocks out;
  out.t = t;
  out.d = mf.d();
  const double h0 = s.h(0);
  detail::closed_bc_blocks(*g, h0, F, out);
  if (detail::q_norm(*g) <= kQThreshold) {
    detail::closed_aa_ac(*g, h0, F, out);
    out.aa_ac_mode = "closed";
  } else {
    auto [aa, ac] = numerical_aa_ac(mf, t);
    out.Raa = aa;
    out.Rac = ac;
    out.Rac(m - 1) = 0.0;
    out.aa_ac_mode = "numerical";
  }
  out.assembled = Mat::Zero(n, n);
  out.assembled(0, 0) = out.Raa;
  out.assembled(1, 1) = out.Rbb;
  out.assembled.block(0, 2, 1, m) = out.Rac.transpose();
  out.assembled.block(2, 0, m, 1) = out.Rac;
  out.assembled.block(1, 2, 1, m) = out.Rbc.transpose();
  out.assembled.block(2, 1, m, 1) = out.Rbc;
  out.assembled.block(2, 2, m, m) = out.Rcc;
  const RicciCurvatures rc = ricci(out);
  out.ricci_a = rc.a;
  out.ricci_b = rc.b;
  out.ricci_c = rc.c;
  return out;
}

// First conjugate time of the extremal through a unit-speed covector: the
// canonical curvature drives the Jacobi system.
inline std::optional<double> first_conjugate_time(ModelPtr model, const ExtremalState& s, double T_max,
                                                  double t_min = 1e-2, const FlowOptions& opt = {}) {
  detail::require_unit_speed(s, "first_conjugate_time");
  FlowOptions o = opt;
  o.track_position = !model->left_invariant();
  const MovingFrame mf = parallel_frame(flow(model, s, T_max, o), opt);
  const RProvider R = [&mf](double t) { return curvature_blocks(mf, t).assembled; };
  ConjugateSearch cs;
  cs.t_min = t_min;
  return first_conjugate_time(jacobi_integrate(model->d(), R, T_max, opt), cs);
}

}  // namespace contactcurv
