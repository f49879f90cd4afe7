#pragma once

// Normal geodesic flow in lifted-frame coordinates, the exponential map, and
// the Jacobi system in a Darboux frame with canonical C_1, C_2.
//
// A covector is stored through its frame components h_a = <lambda, X_a>.  The
// Hamiltonian equations read
//   x' = sum_i h_i X_i(x),   h_a' = sum_{i,b} h_i c_{ia}^b(x) h_b.

#include <boost/numeric/odeint.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "contactcurv/core.hpp"
#include "contactcurv/model.hpp"

namespace contactcurv {

struct ExtremalState {
  Vec x;
  Vec h;
};

inline double hamiltonian(const Vec& h) { return 0.5 * h.tail(h.size() - 1).squaredNorm(); }
inline double hamiltonian(const ExtremalState& s) { return hamiltonian(s.h); }

// Rescales the whole covector so that 2H = 1.
inline ExtremalState normalize_unit_speed(ExtremalState s) {
  const double H = hamiltonian(s);
  if (!(H > 0.0)) throw TrivialCovector("the horizontal part of the covector vanishes");
  s.h /= std::sqrt(2.0 * H);
  return s;
}

struct FlowOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  // For left-invariant models the momenta evolve on their own; positions can
  // be skipped when only curvature data are needed.
  bool track_position = true;
  // Classical RK4 with a constant step instead of adaptive Dormand-Prince.
  bool fixed_step = false;
  double fixed_dt = 1e-3;
};

struct IntegratorStats {
  long accepted = 0;
  long rejected = 0;
};

namespace detail {

using State = std::vector<double>;

// Accepted steps of an ODE solution with first and second derivatives at the
// nodes; states in between come from quintic Hermite interpolation, so the
// interpolant is well below the integrator tolerance even on long steps.
class DenseSolution {
 public:
  void push(double t, State y, State f, State a) {
    t_.push_back(t);
    y_.push_back(std::move(y));
    f_.push_back(std::move(f));
    a_.push_back(std::move(a));
  }

  double t_begin() const { return t_.front(); }
  double t_end() const { return t_.back(); }
  size_t size() const { return t_.size(); }
  const std::vector<double>& times() const { return t_; }
  const State& node(size_t k) const { return y_[k]; }

  State at(double t) const {
    if (t <= t_.front()) return y_.front();
    if (t >= t_.back()) return y_.back();
    const size_t k = size_t(std::upper_bound(t_.begin(), t_.end(), t) - t_.begin()) - 1;
    const double h = t_[k + 1] - t_[k];
    const double s = (t - t_[k]) / h, s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    const double p0 = 1 - 10 * s3 + 15 * s4 - 6 * s5, p1 = 1 - p0;
    const double v0 = s - 6 * s3 + 8 * s4 - 3 * s5, v1 = -4 * s3 + 7 * s4 - 3 * s5;
    const double a0 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5), a1 = 0.5 * (s3 - 2 * s4 + s5);
    State out(y_[k].size());
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = p0 * y_[k][i] + p1 * y_[k + 1][i] + h * (v0 * f_[k][i] + v1 * f_[k + 1][i]) +
               h * h * (a0 * a_[k][i] + a1 * a_[k + 1][i]);
    return out;
  }

 private:
  std::vector<double> t_;
  std::vector<State> y_, f_, a_;
};

using Rhs = std::function<void(const State&, State&, double)>;
// Called after each accepted step; may modify the state (projection back
// onto a constraint) and returns true if it did.
using PostStep = std::function<bool(State&)>;

inline bool finite_state(const State& y) {
  for (double v : y)
    if (!std::isfinite(v)) return false;
  return true;
}

// Second derivative y'' = Df(y) f by a central difference along f.
template <class F>
State acceleration(const F& rhs, const State& y, const State& f, double t) {
  double fmax = 0.0;
  for (double v : f) fmax = std::max(fmax, std::abs(v));
  State a(y.size(), 0.0);
  if (fmax == 0.0) return a;
  const double eps = 1e-5 / std::max(1.0, fmax);
  State yp(y), ym(y), fp(y.size()), fm(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    yp[i] += eps * f[i];
    ym[i] -= eps * f[i];
  }
  rhs(yp, fp, t);
  rhs(ym, fm, t);
  for (size_t i = 0; i < y.size(); ++i) a[i] = (fp[i] - fm[i]) / (2 * eps);
  return a;
}

inline void integrate_dense(const Rhs& rhs, State y, double t0, double t1, const FlowOptions& opt,
                            DenseSolution& out, IntegratorStats& stats, const PostStep& post = nullptr) {
  namespace odeint = boost::numeric::odeint;
  State f(y.size());
  rhs(y, f, t0);
  out.push(t0, y, f, acceleration(rhs, y, f, t0));
  if (t1 <= t0) return;
  const double span = t1 - t0;
  double t = t0;
  if (opt.fixed_step) {
    odeint::runge_kutta4<State> rk;
    const long steps = std::max(1L, long(std::ceil(span / opt.fixed_dt - 1e-9)));
    const double dt = span / double(steps);
    for (long k = 1; k <= steps; ++k) {
      rk.do_step(rhs, y, t, dt);
      t = k == steps ? t1 : t0 + double(k) * dt;
      if (post) post(y);
      if (!finite_state(y)) throw IntegrationFailure("non-finite state at t = " + std::to_string(t));
      rhs(y, f, t);
      out.push(t, y, f, acceleration(rhs, y, f, t));
      ++stats.accepted;
    }
    return;
  }
  auto stepper = odeint::make_controlled(opt.atol, opt.rtol, odeint::runge_kutta_dopri5<State>());
  double dt = std::min(1e-3, span);
  const double dt_min = 1e-13 * std::max(1.0, std::abs(t1));
  while (t < t1) {
    if (t + dt > t1) dt = t1 - t;
    for (;;) {
      const auto res = stepper.try_step(rhs, y, t, dt);
      if (res == odeint::success) break;
      ++stats.rejected;
      if (dt < dt_min) throw IntegrationFailure("step size collapsed at t = " + std::to_string(t));
    }
    if (t1 - t < 1e-14 * std::max(1.0, std::abs(t1))) t = t1;
    if (post && post(y)) stepper.reset();
    if (!finite_state(y)) throw IntegrationFailure("non-finite state at t = " + std::to_string(t));
    rhs(y, f, t);
    out.push(t, y, f, acceleration(rhs, y, f, t));
    ++stats.accepted;
    if (stats.accepted > 50'000'000) throw IntegrationFailure("step budget exhausted");
  }
}

// Right-hand side of the normal Hamiltonian flow on (x, h), or on h alone
// for left-invariant models when positions are not tracked:
//   x' = sum_i h_i X_i(x),  h_a' = sum_{i,b} h_i c_{ia}^b h_b.
class GeodesicField {
 public:
  GeodesicField(const ContactModel& m, bool positions)
      : m_(m), positions_(positions), cd_(positions ? m.chart_dim() : 0), n_(m.dim()) {
    if (m.left_invariant()) c_ = m.jets(m.origin(), 0).c;
  }

  int chart_size() const { return cd_; }
  int size() const { return cd_ + n_; }

  Tensor3 constants_at(const double* y) const {
    if (m_.left_invariant()) return c_;
    return m_.jets(Eigen::Map<const Vec>(y, cd_), 0).c;
  }

  void operator()(const double* y, double* dy) const {
    const Eigen::Map<const Vec> h(y + cd_, n_);
    const Tensor3 local = m_.left_invariant() ? Tensor3() : constants_at(y);
    const Tensor3& c = m_.left_invariant() ? c_ : local;
    if (positions_) {
      Vec hh = h;
      hh(0) = 0.0;
      const Vec xd = m_.frame(Eigen::Map<const Vec>(y, cd_)) * hh;
      for (int k = 0; k < cd_; ++k) dy[k] = xd(k);
    }
    for (int a = 0; a < n_; ++a) {
      double s = 0.0;
      for (int i = 1; i < n_; ++i) {
        if (h(i) == 0.0) continue;
        double inner = 0.0;
        for (int b = 0; b < n_; ++b) inner += c(i, a, b) * h(b);
        s += h(i) * inner;
      }
      dy[cd_ + a] = s;
    }
  }

 private:
  const ContactModel& m_;
  bool positions_;
  int cd_, n_;
  Tensor3 c_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Geodesics

class GeodesicRecord {
 public:
  GeodesicRecord(ModelPtr model, ExtremalState initial, double T, bool positions, detail::DenseSolution sol,
                 IntegratorStats stats)
      : model_(std::move(model)), initial_(std::move(initial)), T_(T), positions_(positions), sol_(std::move(sol)),
        stats_(stats) {}

  const ContactModel& model() const { return *model_; }
  ModelPtr model_ptr() const { return model_; }
  const ExtremalState& initial() const { return initial_; }
  double T() const { return T_; }
  bool positions_tracked() const { return positions_; }
  const IntegratorStats& stats() const { return stats_; }
  const std::vector<double>& node_times() const { return sol_.times(); }

  ExtremalState at(double t) const { return unpack(sol_.at(t)); }
  ExtremalState node(size_t k) const { return unpack(sol_.node(k)); }

  double max_energy_drift() const {
    const double h0 = hamiltonian(initial_);
    double worst = 0.0;
    for (size_t k = 0; k < sol_.size(); ++k) worst = std::max(worst, std::abs(hamiltonian(node(k)) - h0));
    return worst;
  }

 private:
  ExtremalState unpack(const detail::State& y) const {
    const int cd = positions_ ? model_->chart_dim() : 0;
    const int n = model_->dim();
    ExtremalState s;
    if (positions_) {
      s.x = model_->renormalize(Eigen::Map<const Vec>(y.data(), cd));
    } else {
      s.x = initial_.x;
    }
    s.h = Eigen::Map<const Vec>(y.data() + cd, n);
    return s;
  }

  ModelPtr model_;
  ExtremalState initial_;
  double T_;
  bool positions_;
  detail::DenseSolution sol_;
  IntegratorStats stats_;
};

inline GeodesicRecord flow(ModelPtr model, const ExtremalState& s0, double T, const FlowOptions& opt = {}) {
  if (!model) throw std::invalid_argument("flow: null model");
  const int n = model->dim();
  if (s0.h.size() != n) throw ConfigError("covector needs " + std::to_string(n) + " components h0..h" + std::to_string(n - 1));
  if (!(hamiltonian(s0) > 0.0)) throw TrivialCovector("flow needs a covector with nonzero horizontal part");
  if (!(T >= 0.0)) throw std::invalid_argument("flow: T must be non-negative");
  const bool positions = opt.track_position || !model->left_invariant();
  const int cd = positions ? model->chart_dim() : 0;
  if (positions && s0.x.size() != cd) throw ConfigError("initial point has the wrong chart dimension");

  const detail::GeodesicField field(*model, positions);
  detail::Rhs rhs = [&field](const detail::State& y, detail::State& dy, double) { field(y.data(), dy.data()); };
  detail::State y(size_t(cd + n));
  for (int k = 0; k < cd; ++k) y[size_t(k)] = s0.x(k);
  for (int a = 0; a < n; ++a) y[size_t(cd + a)] = s0.h(a);

  detail::PostStep post;
  if (positions && model->chart_dim() != n) {
    // Matrix models: project back onto the group once drift is visible.
    post = [m = model.get(), cd](detail::State& st) {
      const Vec x = Eigen::Map<const Vec>(st.data(), cd);
      const Vec r = m->renormalize(x);
      if ((r - x).cwiseAbs().maxCoeff() <= 1e-10) return false;
      for (int k = 0; k < cd; ++k) st[size_t(k)] = r(k);
      return true;
    };
  }
  detail::DenseSolution sol;
  IntegratorStats stats;
  detail::integrate_dense(rhs, y, 0.0, T, opt, sol, stats, post);
  ExtremalState init = s0;
  if (!positions) init.x = model->origin();
  return GeodesicRecord(std::move(model), std::move(init), T, positions, std::move(sol), stats);
}

// Projection at time t of the extremal through (x0, h0).  For t < 0 this is
// the extremal of -h0 at time |t|, since H is even in the covector.
inline Vec exp_map(ModelPtr model, const Vec& x0, const Vec& h0, double t, const FlowOptions& opt = {}) {
  if (t == 0.0) return x0;
  ExtremalState s{x0, t > 0 ? h0 : Vec(-h0)};
  FlowOptions o = opt;
  o.track_position = true;
  return flow(std::move(model), s, std::abs(t), o).at(std::abs(t)).x;
}

// CSV with header t,x0..,h0..h{2d}; the x columns are model->output_coords.
inline void write_trajectory_csv(std::ostream& os, const GeodesicRecord& g, int samples = 0) {
  const ContactModel& m = g.model();
  const int k = g.positions_tracked() ? m.output_dim() : 0;
  os << "t";
  for (int i = 0; i < k; ++i) os << ",x" << i;
  for (int i = 0; i < m.dim(); ++i) os << ",h" << i;
  os << "\n" << std::setprecision(17);
  auto row = [&](double t, const ExtremalState& s) {
    os << t;
    if (k > 0) {
      const Vec p = m.output_coords(s.x);
      for (int i = 0; i < k; ++i) os << "," << p(i);
    }
    for (int i = 0; i < m.dim(); ++i) os << "," << s.h(i);
    os << "\n";
  };
  if (samples > 1) {
    for (int j = 0; j < samples; ++j) {
      const double t = g.T() * double(j) / double(samples - 1);
      row(t, g.at(t));
    }
  } else {
    for (size_t j = 0; j < g.node_times().size(); ++j) row(g.node_times()[j], g.node(j));
  }
}

// ---------------------------------------------------------------------------
// Jacobi system
//
// p' = -C1^T p - R(t) q,  q' = C2 p + C1 q  with C1 = E_01 and
// C2 = diag(0, 1, I_{2d-1}) in the splitting (a, b, c).  The fundamental
// solution starts at p(0) = I, q(0) = 0.

using RProvider = std::function<Mat(double)>;

inline Mat jacobi_C1(int n) {
  Mat c = Mat::Zero(n, n);
  c(0, 1) = 1.0;
  return c;
}
inline Mat jacobi_C2(int n) {
  Mat c = Mat::Identity(n, n);
  c(0, 0) = 0.0;
  return c;
}

// The columns of [P; Q] are re-orthonormalized at segment boundaries so that
// exponentially growing modes do not swamp det Q.  The true solution is
// [P; Q](t) = [Phat; Qhat](t) * M_k on segment k.
class JacobiSolution {
 public:
  struct Segment {
    double t0 = 0.0, t1 = 0.0;
    detail::DenseSolution sol;
    Mat M;            // accumulated right factor
    double log_det_M = 0.0;
    int sign_det_M = 1;
  };

  JacobiSolution(int n, std::vector<Segment> segs, IntegratorStats stats)
      : n_(n), segs_(std::move(segs)), stats_(stats) {}

  int n() const { return n_; }
  double T() const { return segs_.back().t1; }
  const IntegratorStats& stats() const { return stats_; }

  Mat P(double t) const { return block(t, 0) * segment(t).M; }
  Mat Q(double t) const { return block(t, n_) * segment(t).M; }

  // det Q(t) as (sign, log|det|).  sign 0 means exactly singular.
  std::pair<int, double> det_Q(double t) const {
    const Segment& s = segment(t);
    const double d = block(t, n_).determinant();
    if (d == 0.0 || !std::isfinite(d)) return {0, -std::numeric_limits<double>::infinity()};
    return {(d > 0 ? 1 : -1) * s.sign_det_M, std::log(std::abs(d)) + s.log_det_M};
  }
  double det_Q_value(double t) const {
    const auto [sg, lg] = det_Q(t);
    return sg == 0 ? 0.0 : double(sg) * std::exp(lg);
  }

  // Integrator nodes, useful as a sampling grid.
  std::vector<double> node_times() const {
    std::vector<double> t;
    for (const auto& s : segs_)
      for (double v : s.sol.times())
        if (t.empty() || v > t.back()) t.push_back(v);
    return t;
  }

 private:
  const Segment& segment(double t) const {
    for (const auto& s : segs_)
      if (t <= s.t1) return s;
    return segs_.back();
  }
  Mat block(double t, int row0) const {
    const detail::State y = segment(t).sol.at(t);
    Mat m(n_, n_);
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) m(i, j) = y[size_t(j * 2 * n_ + row0 + i)];
    return m;
  }

  int n_;
  std::vector<Segment> segs_;
  IntegratorStats stats_;
};

inline JacobiSolution jacobi_integrate(int d, const RProvider& R, double T, const FlowOptions& opt = {},
                                       double segment_length = 0.5) {
  if (d < 1) throw std::invalid_argument("jacobi_integrate: d must be at least 1");
  if (!(T > 0.0)) throw std::invalid_argument("jacobi_integrate: T must be positive");
  const int n = 2 * d + 1;
  const Mat C1 = jacobi_C1(n), C2 = jacobi_C2(n);
  detail::Rhs rhs = [&](const detail::State& y, detail::State& dy, double t) {
    const Mat Rt = R(t);
    if (Rt.rows() != n || Rt.cols() != n) throw std::invalid_argument("R provider returned a matrix of the wrong size");
    const Eigen::Map<const Mat> Y(y.data(), 2 * n, n);
    Eigen::Map<Mat> D(dy.data(), 2 * n, n);
    const auto p = Y.topRows(n);
    const auto q = Y.bottomRows(n);
    D.topRows(n) = -C1.transpose() * p - Rt * q;
    D.bottomRows(n) = C2 * p + C1 * q;
  };
  std::vector<JacobiSolution::Segment> segs;
  IntegratorStats stats;
  Mat Y = Mat::Zero(2 * n, n);
  Y.topRows(n).setIdentity();
  Mat M = Mat::Identity(n, n);
  double log_det_M = 0.0;
  int sign_det_M = 1;
  double t = 0.0;
  while (t < T) {
    const double t1 = std::min(T, t + segment_length);
    JacobiSolution::Segment seg;
    seg.t0 = t;
    seg.t1 = t1;
    seg.M = M;
    seg.log_det_M = log_det_M;
    seg.sign_det_M = sign_det_M;
    detail::State y(Y.data(), Y.data() + Y.size());
    detail::integrate_dense(rhs, y, t, t1, opt, seg.sol, stats);
    const detail::State& last = seg.sol.node(seg.sol.size() - 1);
    const Mat Yend = Eigen::Map<const Mat>(last.data(), 2 * n, n);
    segs.push_back(std::move(seg));
    // Yend = Qf Rf; the true solution is Qf (Rf M).
    Eigen::HouseholderQR<Mat> qr(Yend);
    const Mat Qf = qr.householderQ() * Mat::Identity(2 * n, n);
    const Mat Rf = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    double ld = 0.0;
    int sg = 1;
    for (int i = 0; i < n; ++i) {
      ld += std::log(std::abs(Rf(i, i)));
      if (Rf(i, i) < 0) sg = -sg;
    }
    Y = Qf;
    M = Rf * M;
    log_det_M += ld;
    sign_det_M *= sg;
    t = t1;
  }
  return JacobiSolution(n, std::move(segs), stats);
}

inline JacobiSolution jacobi_integrate(const GeodesicRecord& geo, const RProvider& R, const FlowOptions& opt = {}) {
  return jacobi_integrate(geo.model().d(), R, geo.T(), opt);
}

struct ConjugateSearch {
  double t_min = 1e-2;
  double tol = 1e-8;    // bisection width
  double guard = 1e-12; // relative vanishing-without-crossing threshold
  double sample_step = 1e-2;
};

// Smallest t in (t_min, T] where det Q changes sign or nearly vanishes.
inline std::optional<double> first_conjugate_time(const JacobiSolution& sol, const ConjugateSearch& cs = {}) {
  const double T = sol.T();
  if (cs.t_min >= T) return std::nullopt;
  std::vector<double> grid;
  for (double t : sol.node_times())
    if (t >= cs.t_min) grid.push_back(t);
  for (double t = cs.t_min; t < T; t += cs.sample_step) grid.push_back(t);
  grid.push_back(cs.t_min);
  grid.push_back(T);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  auto sign_at = [&](double t) { return sol.det_Q(t).first; };
  const double log_guard = std::log(cs.guard);
  double running_max = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, double>> vals;
  for (double t : grid) vals.push_back(sol.det_Q(t));
  for (size_t k = 0; k < grid.size(); ++k) {
    const auto [sg, lg] = vals[k];
    if (sg == 0) return grid[k];
    if (k > 0 && sg != vals[k - 1].first && vals[k - 1].first != 0) {
      double lo = grid[k - 1], hi = grid[k];
      const int s_lo = vals[k - 1].first;
      while (hi - lo > cs.tol) {
        const double mid = 0.5 * (lo + hi);
        const int sm = sign_at(mid);
        if (sm == 0) return mid;
        (sm == s_lo ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    // A zero of even multiplicity leaves no sign change; refine each sampled
    // local minimum of |det Q| and accept it when it drops far below
    // everything seen so far.
    if (k > 0 && k + 1 < grid.size() && lg <= vals[k - 1].second && lg <= vals[k + 1].second) {
      double a = grid[k - 1], b = grid[k + 1];
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      while (b - a > cs.tol) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (sol.det_Q(c).second < sol.det_Q(d).second) b = d;
        else a = c;
      }
      const double tm = 0.5 * (a + b);
      const auto [sm, lm] = sol.det_Q(tm);
      if (sm == 0 || lm < std::max(running_max, vals[k - 1].second) + log_guard) return tm;
    }
    running_max = std::max(running_max, lg);
  }
  return std::nullopt;
}

inline std::optional<double> first_conjugate_time(int d, const RProvider& R, double T_max,
                                                  const ConjugateSearch& cs = {}, const FlowOptions& opt = {}) {
  return first_conjugate_time(jacobi_integrate(d, R, T_max, opt), cs);
}

}  // namespace contactcurv
