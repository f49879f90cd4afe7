#pragma once

// Bonnet-Myers type diameter bounds from sampled curvature.
//
// Three criteria are available.  Each samples unit covectors (or unit
// horizontal vectors), takes the worst value of the relevant curvature and,
// when the hypotheses hold, turns it into a diameter bound:
//   ric_c   Ric^c >= (2d-2) kc > 0                       ->  pi / sqrt(kc)
//   ric_ab  Ric^a >= ka, Ric^b >= kb, (ka, kb) admissible  ->  t*(ka, kb)
//   tensor  Ric(X) - R(X,JX,JX,X) >= (2d-2) k1, |Q(X,X)|^2 <= (2d-2) k2
//                                                         ->  pi / sqrt(k1 - k2)
// t*(ka, kb) is the first conjugate time of the constant curvature Jacobi
// system with R = diag(ka, kb, 0).
//
// Minima over finitely many samples certify nothing for a general manifold;
// for left-invariant models the curvature depends only on the covector, so
// one base point covers the whole group and only the covector sampling is
// heuristic.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "contactcurv/canonical.hpp"
#include "contactcurv/core.hpp"
#include "contactcurv/flow.hpp"
#include "contactcurv/structure.hpp"
#include "json.hpp"

namespace contactcurv {

// ---------------------------------------------------------------------------
// LQ comparison model

struct LQParams {
  double ka = 0.0, kb = 0.0;
};

inline bool lq_existence(const LQParams& p) {
  if (p.kb > 0.0) return 4.0 * p.ka > -p.kb * p.kb;
  return p.ka > 0.0;
}

namespace detail {

// Left side of the conjugate time equation divided by its normalising
// constant; behaves like t^4 / 12 near 0.  lambda_- is imaginary when ka < 0,
// which the complex square roots absorb.
inline double lq_determinant(const LQParams& p, double t) {
  using C = std::complex<double>;
  const C s = std::sqrt(C(4.0 * p.ka + p.kb * p.kb));
  const C lp = std::sqrt((p.kb + s) / 2.0), lm = std::sqrt((-p.kb + s) / 2.0);
  const C num = 4.0 * p.ka * (1.0 - std::cos(lp * t) * std::cosh(lm * t)) -
                2.0 * p.kb * lp * lm * std::sin(t * lp) * std::sinh(t * lm);
  return (num / (2.0 * p.ka * (4.0 * p.ka + p.kb * p.kb))).real();
}

}  // namespace detail

// The ka -> 0 limit of the equation is 2 - 2 cos s - s sin s = 0 with
// s = sqrt(kb) t, whose first positive root is s = 2 pi.
inline constexpr double kLQZeroKa = 1e-8;

inline double lq_conjugate_time(const LQParams& p, double T_max = 1e4) {
  if (!lq_existence(p))
    throw NoConjugateTime("no conjugate time for (ka, kb) = (" + std::to_string(p.ka) + ", " + std::to_string(p.kb) + ")");
  if (std::abs(p.ka) <= kLQZeroKa && p.kb > 0.0) return 2.0 * std::numbers::pi / std::sqrt(p.kb);

  const double step = std::min(0.01, 0.01 / std::sqrt(std::abs(p.ka) + std::abs(p.kb) + 1.0));
  auto f = [&p](double t) { return detail::lq_determinant(p, t); };
  double lo = step, flo = f(lo);
  for (double hi = 2.0 * step; hi <= T_max; lo = hi, hi += step) {
    const double fhi = f(hi);
    if (fhi == 0.0) return hi;
    if ((fhi > 0.0) != (flo > 0.0)) {
      double a = lo, b = hi;
      while (b - a > 1e-10) {
        const double mid = 0.5 * (a + b), fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) a = mid;
        else b = mid;
      }
      return 0.5 * (a + b);
    }
    flo = fhi;
  }
  throw NoConjugateTime("no conjugate time below " + std::to_string(T_max) + " for (ka, kb) = (" +
                        std::to_string(p.ka) + ", " + std::to_string(p.kb) + ")");
}

// ---------------------------------------------------------------------------
// Sampling

struct SamplingOptions {
  int directions = 64;      // horizontal unit directions
  double h0_max = 10.0;     // h0 in {0, +-h0_max 10^-k, k < h0_levels}
  int h0_levels = 4;
  double segment = 1.0;     // geodesic segment for non-left-invariant models
  int segment_samples = 3;  // curvature evaluations along it
  int base_points = 4;      // tensor criterion, non-left-invariant models
  int threads = 0;          // 0: CONTACTCURV_THREADS or hardware concurrency
};

inline int worker_count(int requested = 0) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("CONTACTCURV_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = int(std::thread::hardware_concurrency());
  return std::max(1, n);
}

// Runs fn(i) for i < count on up to `workers` threads; the first exception by
// index is rethrown.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, count));
  std::vector<std::exception_ptr> errors(size_t(std::max(count, 0)));
  auto run = [&](int w) {
    for (int i = w; i < count; i += workers) {
      try {
        fn(i);
      } catch (...) {
        errors[size_t(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Unit vectors in R^m: the coordinate axes with both signs, then evenly spaced
// angles (m = 2) or normalised Gaussian draws from a fixed seed.
inline std::vector<Vec> sphere_directions(int m, int count) {
  std::vector<Vec> out;
  if (m == 2) {
    for (int k = 0; k < count; ++k) {
      const double a = 2.0 * std::numbers::pi * k / count;
      out.push_back((Vec(2) << std::cos(a), std::sin(a)).finished());
    }
    return out;
  }
  for (int i = 0; i < m && int(out.size()) < count; ++i) {
    out.push_back(Vec::Unit(m, i));
    if (int(out.size()) < count) out.push_back(-Vec::Unit(m, i));
  }
  std::mt19937 rng(20240601u);
  std::normal_distribution<double> g;
  while (int(out.size()) < count) {
    Vec v(m);
    for (int i = 0; i < m; ++i) v(i) = g(rng);
    if (v.norm() > 1e-3) out.push_back(v.normalized());
  }
  return out;
}

inline std::vector<double> h0_grid(const SamplingOptions& opt) {
  std::vector<double> out{0.0};
  for (int k = 0; k < opt.h0_levels; ++k) {
    const double v = opt.h0_max * std::pow(10.0, -k);
    out.push_back(v);
    out.push_back(-v);
  }
  return out;
}

// Unit covectors (h0, u) with u on the horizontal sphere.
inline std::vector<Vec> sample_covectors(int d, const SamplingOptions& opt) {
  std::vector<Vec> out;
  const auto dirs = sphere_directions(2 * d, opt.directions);
  for (double h0 : h0_grid(opt))
    for (const Vec& u : dirs) {
      Vec h(2 * d + 1);
      h(0) = h0;
      h.tail(2 * d) = u;
      out.push_back(h);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct BMSample {
  Vec h;           // covector, or horizontal vector for the tensor criterion
  int point = 0;   // base point index
  double t = 0.0;  // position along the geodesic
  std::vector<double> values;
};

struct BMReport {
  std::string theorem;  // "ric_c", "ric_ab" or "tensor"
  std::vector<std::pair<std::string, double>> constants;
  std::optional<double> diameter_bound;
  bool pass = false;
  bool certificate = false;  // left-invariant: covector sampling only
  std::string reason;
  std::vector<std::string> value_names;
  std::vector<std::pair<std::string, double>> min_margins;
  int sampled_covectors = 0;
  int sampled_points = 0;
  std::vector<BMSample> samples;

  double constant(const std::string& name) const {
    for (const auto& [k, v] : constants)
      if (k == name) return v;
    throw std::out_of_range("BMReport: no constant " + name);
  }

  nlohmann::json to_json() const {
    nlohmann::json c = nlohmann::json::object(), m = nlohmann::json::object();
    for (const auto& [k, v] : constants) c[k] = v;
    for (const auto& [k, v] : min_margins) m[k] = v;
    nlohmann::json j = {{"theorem", theorem},
                        {"constants", c},
                        {"pass", pass},
                        {"evidence", certificate ? "certificate" : "sampled evidence, not a proof"},
                        {"min_margins", m},
                        {"samples", {{"covectors", sampled_covectors}, {"points", sampled_points}, {"evaluations", samples.size()}}}};
    j["diameter_bound"] = diameter_bound ? nlohmann::json(*diameter_bound) : nlohmann::json(nullptr);
    if (!reason.empty()) j["reason"] = reason;
    return j;
  }

  void write_csv(std::ostream& os) const {
    os << "point,t";
    for (Eigen::Index i = 0; i < (samples.empty() ? 0 : samples[0].h.size()); ++i) os << ",h" << i;
    for (const auto& n : value_names) os << ',' << n;
    os << '\n';
    os.precision(17);
    for (const auto& s : samples) {
      os << s.point << ',' << s.t;
      for (Eigen::Index i = 0; i < s.h.size(); ++i) os << ',' << s.h(i);
      for (double v : s.values) os << ',' << v;
      os << '\n';
    }
  }
};

namespace detail {

// Ricci curvatures along short geodesic segments from every sampled covector.
inline std::vector<BMSample> ricci_samples(const ModelPtr& model, const SamplingOptions& opt) {
  const auto covectors = sample_covectors(model->d(), opt);
  const bool li = model->left_invariant();
  const int per = li ? 1 : std::max(1, opt.segment_samples);
  std::vector<BMSample> out(covectors.size() * size_t(per));
  parallel_for(int(covectors.size()), worker_count(opt.threads), [&](int i) {
    const ExtremalState s = normalize_unit_speed({model->origin(), covectors[size_t(i)]});
    if (li) {
      const CurvatureBlocks cb = curvature_blocks(parallel_frame(model, s, 1e-3), 0.0);
      out[size_t(i)] = {s.h, 0, 0.0, {cb.ricci_a, cb.ricci_b, cb.ricci_c}};
      return;
    }
    const MovingFrame mf = parallel_frame(model, s, opt.segment);
    for (int k = 0; k < per; ++k) {
      const double t = per == 1 ? 0.0 : opt.segment * k / (per - 1);
      const CurvatureBlocks cb = curvature_blocks(mf, t);
      out[size_t(i) * size_t(per) + size_t(k)] = {s.h, 0, t, {cb.ricci_a, cb.ricci_b, cb.ricci_c}};
    }
  });
  return out;
}

inline double column_min(const std::vector<BMSample>& s, size_t k) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& x : s) m = std::min(m, x.values[k]);
  return m;
}
inline double column_max(const std::vector<BMSample>& s, size_t k) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& x : s) m = std::max(m, x.values[k]);
  return m;
}

inline BMReport ricci_report(const ModelPtr& model, const SamplingOptions& opt, const std::string& theorem) {
  BMReport r;
  r.theorem = theorem;
  r.certificate = model->left_invariant();
  r.value_names = {"ric_a", "ric_b", "ric_c"};
  r.samples = ricci_samples(model, opt);
  r.sampled_covectors = int(sample_covectors(model->d(), opt).size());
  r.sampled_points = 1;
  return r;
}

// Base points for the tensor criterion: the origin, plus for models that are
// not left-invariant the endpoints of a few geodesics from it.
inline std::vector<Vec> sample_points(const ModelPtr& model, const SamplingOptions& opt) {
  std::vector<Vec> pts{model->origin()};
  if (model->left_invariant()) return pts;
  const auto dirs = sphere_directions(2 * model->d(), opt.base_points);
  for (int k = 0; k + 1 < opt.base_points; ++k) {
    Vec h(model->dim());
    h(0) = 0.5 * (k + 1);
    h.tail(2 * model->d()) = dirs[size_t(k)];
    pts.push_back(flow(model, normalize_unit_speed({model->origin(), h}), 1.0 + k).at(1.0 + k).x);
  }
  return pts;
}

}  // namespace detail

// Ric^c >= (2d - 2) kc with kc > 0; requires d > 1.
inline BMReport evaluate_ric_c(const ModelPtr& model, const SamplingOptions& opt = {}) {
  if (model->d() < 2) throw ConfigError("the Ric^c criterion needs d > 1");
  BMReport r = detail::ricci_report(model, opt, "ric_c");
  const double lo = detail::column_min(r.samples, 2);
  const double kc = lo / (2 * model->d() - 2);
  r.constants = {{"kappa_c", kc}};
  r.min_margins = {{"ric_c", lo}};
  r.pass = kc > 0.0;
  if (r.pass) r.diameter_bound = std::numbers::pi / std::sqrt(kc);
  else r.reason = "sampled minimum of Ric^c is " + std::to_string(lo) + " <= 0";
  return r;
}

inline BMReport evaluate_ric_ab(const ModelPtr& model, const SamplingOptions& opt = {}) {
  BMReport r = detail::ricci_report(model, opt, "ric_ab");
  const LQParams p{detail::column_min(r.samples, 0), detail::column_min(r.samples, 1)};
  r.constants = {{"kappa_a", p.ka}, {"kappa_b", p.kb}};
  r.min_margins = {{"ric_a", p.ka}, {"ric_b", p.kb}};
  r.pass = lq_existence(p);
  if (r.pass) r.diameter_bound = lq_conjugate_time(p);
  else r.reason = "(kappa_a, kappa_b) = (" + std::to_string(p.ka) + ", " + std::to_string(p.kb) + ") is not admissible";
  return r;
}

// Ric(X) - R(X,JX,JX,X) and |Q(X,X)|^2 over unit horizontal X; Ric is the
// horizontal trace of the Tanno curvature (R(X, X0, X0, X) vanishes).
inline BMReport evaluate_tensor(const ModelPtr& model, const SamplingOptions& opt = {}) {
  const int d = model->d(), n = model->dim();
  if (d < 2) throw ConfigError("the tensor criterion needs d > 1");
  BMReport r;
  r.theorem = "tensor";
  r.certificate = model->left_invariant();
  r.value_names = {"ric_minus_sectional", "q_norm_squared"};
  const auto pts = detail::sample_points(model, opt);
  const auto dirs = sphere_directions(2 * d, opt.directions);
  r.sampled_points = int(pts.size());
  r.sampled_covectors = int(dirs.size());
  r.samples.resize(pts.size() * dirs.size());
  parallel_for(int(pts.size()), worker_count(opt.threads), [&](int p) {
    const TannoGeometry geo = tanno_at(*model, pts[size_t(p)], 1);
    for (size_t k = 0; k < dirs.size(); ++k) {
      Vec X = Vec::Zero(n);
      X.tail(2 * d) = dirs[k];
      const Vec JX = geo.J() * X;
      double ric = 0.0;
      for (int i = 1; i < n; ++i) ric += geo.curvature(X, Vec::Unit(n, i), Vec::Unit(n, i), X);
      const double v = ric - geo.curvature(X, JX, JX, X);
      const double q = geo.Q(X, X).squaredNorm();
      r.samples[size_t(p) * dirs.size() + k] = {X, p, 0.0, {v, q}};
    }
  });
  const double k1 = detail::column_min(r.samples, 0) / (2 * d - 2);
  const double k2 = detail::column_max(r.samples, 1) / (2 * d - 2);
  r.constants = {{"kappa_1", k1}, {"kappa_2", k2}};
  r.min_margins = {{"ric_minus_sectional", detail::column_min(r.samples, 0)},
                   {"q_gap", (k1 - k2) * (2 * d - 2)}};
  r.pass = k1 > k2 && k2 >= 0.0;
  if (r.pass) r.diameter_bound = std::numbers::pi / std::sqrt(k1 - k2);
  else r.reason = "kappa_1 = " + std::to_string(k1) + " does not exceed kappa_2 = " + std::to_string(k2);
  return r;
}

namespace detail {
inline BMReport require_pass(BMReport r) {
  if (!r.pass) throw HypothesisFails(r.theorem + ": " + r.reason);
  return r;
}
}  // namespace detail

inline BMReport bound_ric_c(const ModelPtr& model, const SamplingOptions& opt = {}) {
  return detail::require_pass(evaluate_ric_c(model, opt));
}
inline BMReport bound_ric_ab(const ModelPtr& model, const SamplingOptions& opt = {}) {
  return detail::require_pass(evaluate_ric_ab(model, opt));
}
inline BMReport bound_tensor(const ModelPtr& model, const SamplingOptions& opt = {}) {
  return detail::require_pass(evaluate_tensor(model, opt));
}

}  // namespace contactcurv
