#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "contactcurv/comparison.hpp"
#include "support.hpp"

using namespace contactcurv;

namespace {

constexpr double kPi = std::numbers::pi;

Mat constant_profile(int d, double ka, double kb) {
  Mat R = Mat::Zero(2 * d + 1, 2 * d + 1);
  R(0, 0) = ka;
  R(1, 1) = kb;
  return R;
}

std::optional<double> jacobi_time(const LQParams& p, double T_max, int d = 1) {
  const Mat R = constant_profile(d, p.ka, p.kb);
  ConjugateSearch cs;
  cs.tol = 1e-11;
  FlowOptions fo;
  fo.rtol = 1e-12;
  fo.atol = 1e-14;
  return first_conjugate_time(d, [&R](double) { return R; }, T_max, cs, fo);
}

// Lower edge of the existence region for a given kb.
double ka_floor(double kb) { return kb > 0.0 ? -kb * kb / 4.0 : 0.0; }

SamplingOptions quick() {
  SamplingOptions o;
  o.directions = 16;
  o.h0_levels = 3;
  return o;
}

}  // namespace

TEST(LQExistence, Cases) {
  EXPECT_TRUE(lq_existence({1.0, 0.0}));
  EXPECT_TRUE(lq_existence({0.0, 1.0}));
  EXPECT_FALSE(lq_existence({0.0, 0.0}));
  EXPECT_TRUE(lq_existence({-0.2, 1.0}));
  EXPECT_FALSE(lq_existence({-0.25, 1.0}));
  EXPECT_FALSE(lq_existence({-1.0, -1.0}));
  EXPECT_TRUE(lq_existence({0.1, -5.0}));
}

TEST(LQConjugateTime, ZeroKaLimit) {
  EXPECT_NEAR(lq_conjugate_time({0.0, 4.0}), kPi, 1e-10);
  EXPECT_NEAR(lq_conjugate_time({0.0, 1.0}), 2.0 * kPi, 1e-10);
  // Continuation from ka > 0 approaches the limit value.
  double prev = std::abs(lq_conjugate_time({1e-2, 1.0}) - 2.0 * kPi);
  for (double ka : {1e-3, 1e-4, 1e-5, 1e-6}) {
    const double gap = std::abs(lq_conjugate_time({ka, 1.0}) - 2.0 * kPi);
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-4);
  // The limit equation 2 - 2 cos s - s sin s vanishes at s = 2 pi and is
  // positive before it.
  auto f = [](double s) { return 2.0 - 2.0 * std::cos(s) - s * std::sin(s); };
  EXPECT_NEAR(f(2.0 * kPi), 0.0, 1e-14);
  for (double s = 0.05; s < 2.0 * kPi - 1e-3; s += 0.01) EXPECT_GT(f(s), 0.0) << s;
}

TEST(LQConjugateTime, AgreesWithJacobiIntegration) {
  for (const LQParams p : {LQParams{1.0, 0.0}, LQParams{1.0, 1.0}, LQParams{-0.2, 1.0}, LQParams{0.5, -0.5}}) {
    const double t = lq_conjugate_time(p);
    const auto j = jacobi_time(p, t + 2.0);
    ASSERT_TRUE(j.has_value()) << p.ka << " " << p.kb;
    EXPECT_NEAR(*j, t, 1e-6) << p.ka << " " << p.kb;
  }
}

TEST(LQConjugateTime, GridAgreesWithJacobiIntegration) {
  for (int i = 0; i < 10; ++i) {
    const double kb = -2.0 + 5.0 * i / 9.0;
    const double lo = ka_floor(kb), hi = 3.0;
    for (int j = 0; j < 10; ++j) {
      const LQParams p{lo + (hi - lo) * (j + 1) / 11.0, kb};
      ASSERT_TRUE(lq_existence(p));
      const double t = lq_conjugate_time(p);
      const auto jt = jacobi_time(p, t + 1.0);
      ASSERT_TRUE(jt.has_value()) << p.ka << " " << p.kb;
      EXPECT_NEAR(*jt, t, 1e-6) << p.ka << " " << p.kb;
    }
  }
}

TEST(LQConjugateTime, ContinuousOnGrid) {
  const double step = 0.05;
  for (double kb = 0.5; kb <= 3.0; kb += 0.5) {
    double prev = lq_conjugate_time({0.2, kb});
    for (double ka = 0.2 + step; ka <= 3.0; ka += step) {
      const double t = lq_conjugate_time({ka, kb});
      EXPECT_LE(std::abs(t - prev), 100.0 * step) << ka << " " << kb;
      prev = t;
    }
  }
}

TEST(LQConjugateTime, NoneOutsideExistenceRegion) {
  std::vector<LQParams> outside;
  for (double kb : {0.5, 1.0, 2.0, 3.0, 4.0}) outside.push_back({ka_floor(kb) - 0.01, kb});
  for (double kb : {0.0, -0.5, -1.0, -2.0, -4.0}) outside.push_back({-0.01, kb});
  for (const auto& p : outside) {
    ASSERT_FALSE(lq_existence(p));
    EXPECT_THROW(lq_conjugate_time(p), NoConjugateTime);
    EXPECT_FALSE(jacobi_time(p, 200.0).has_value()) << p.ka << " " << p.kb;
  }
}

TEST(LQConjugateTime, HigherDimensionalProfileHasSameTime) {
  const LQParams p{0.7, 1.3};
  const auto j = jacobi_time(p, 10.0, 3);
  ASSERT_TRUE(j.has_value());
  EXPECT_NEAR(*j, lq_conjugate_time(p), 1e-6);
}

TEST(Sampling, Covectors) {
  SamplingOptions o;
  o.directions = 10;
  o.h0_levels = 2;
  const auto cs = sample_covectors(2, o);
  EXPECT_EQ(cs.size(), 50u);
  for (const Vec& h : cs) EXPECT_NEAR(h.tail(4).norm(), 1.0, 1e-14);
  EXPECT_EQ(cs[0](0), 0.0);
  const auto again = sample_covectors(2, o);
  for (size_t i = 0; i < cs.size(); ++i) EXPECT_EQ(cs[i], again[i]);
}

TEST(Sampling, ThreadCountDoesNotChangeResults) {
  SamplingOptions one = quick();
  one.directions = 6;
  one.h0_levels = 1;
  SamplingOptions many = one;
  one.threads = 1;
  many.threads = 4;
  const ModelPtr m = hopf_sphere(2);
  const BMReport a = evaluate_ric_c(m, one), b = evaluate_ric_c(m, many);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].values, b.samples[i].values);
}

TEST(BoundRicC, HopfSphere) {
  const BMReport r = bound_ric_c(hopf_sphere(2), quick());
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.constant("kappa_c"), 1.0, 1e-8);
  ASSERT_TRUE(r.diameter_bound.has_value());
  EXPECT_NEAR(*r.diameter_bound, kPi, 1e-8);
  EXPECT_FALSE(r.certificate);
  EXPECT_EQ(r.to_json()["evidence"], "sampled evidence, not a proof");
}

TEST(BoundRicC, HeisenbergFails) {
  EXPECT_THROW(bound_ric_c(heisenberg(2), quick()), HypothesisFails);
  const BMReport r = evaluate_ric_c(heisenberg(2), quick());
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.constant("kappa_c"), 0.0, 1e-12);
  EXPECT_FALSE(r.diameter_bound.has_value());
  EXPECT_TRUE(r.certificate);
}

TEST(BoundRicC, NeedsDimensionFive) { EXPECT_THROW(bound_ric_c(heisenberg(1), quick()), ConfigError); }

TEST(BoundRicAb, HopfCircleBundle) {
  const BMReport r = bound_ric_ab(hopf_sphere(1), quick());
  EXPECT_NEAR(r.constant("kappa_a"), 0.0, 1e-8);
  EXPECT_NEAR(r.constant("kappa_b"), 4.0, 1e-8);
  ASSERT_TRUE(r.diameter_bound.has_value());
  EXPECT_NEAR(*r.diameter_bound, kPi, 1e-8);
}

TEST(BoundRicAb, SasakianCorollary) {
  // Sasakian: Ric^a = 0, Ric^b >= kappa, bound 2 pi / sqrt(kappa).
  for (int d = 1; d <= 2; ++d) {
    const BMReport r = bound_ric_ab(hopf_sphere(d), quick());
    EXPECT_NEAR(*r.diameter_bound, 2.0 * kPi / std::sqrt(r.constant("kappa_b")), 1e-10);
  }
}

TEST(BoundRicAb, HeisenbergFails) {
  const BMReport r = evaluate_ric_ab(heisenberg(1), quick());
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.constant("kappa_b"), 0.0, 1e-12);
  EXPECT_THROW(bound_ric_ab(heisenberg(1), quick()), HypothesisFails);
}

TEST(BoundTensor, HopfSphere) {
  for (int d = 2; d <= 3; ++d) {
    const BMReport r = bound_tensor(hopf_sphere(d), quick());
    EXPECT_NEAR(r.constant("kappa_1"), 1.0, 1e-8);
    EXPECT_NEAR(r.constant("kappa_2"), 0.0, 1e-8);
    EXPECT_NEAR(*r.diameter_bound, kPi, 1e-8);
  }
}

TEST(BoundTensor, HeisenbergFlat) {
  const BMReport r = evaluate_tensor(heisenberg(2), quick());
  EXPECT_FALSE(r.pass);
  EXPECT_NEAR(r.constant("kappa_1"), 0.0, 1e-12);
  EXPECT_THROW(bound_tensor(heisenberg(2), quick()), HypothesisFails);
}

TEST(BoundTensor, CRModelsHaveNoQTerm) {
  std::mt19937 rng(7);
  const auto m = testsupport::torsion_heisenberg(2, rng);
  const BMReport r = evaluate_tensor(m, quick());
  EXPECT_NEAR(r.constant("kappa_2"), 0.0, 1e-12);
}

TEST(BoundTensor, AgreesWithRicC) {
  // Ric^c = Ric(T) - R(T,JT,JT,T) + h0^2 (2d-2)/4 - |Q(T,T)|^2 along T, so the
  // sampled minimum of Ric^c over h0 = 0 covectors lies above (2d-2)(k1 - k2).
  std::mt19937 rng(8);
  const ModelPtr m = testsupport::random_left_invariant_model(2, rng);
  SamplingOptions o = quick();
  o.h0_levels = 0;
  const BMReport t = evaluate_tensor(m, o);
  const BMReport c = evaluate_ric_c(m, o);
  const double k1 = t.constant("kappa_1"), k2 = t.constant("kappa_2");
  for (size_t i = 0; i < c.samples.size(); ++i) EXPECT_GE(c.samples[i].values[2], 2.0 * (k1 - k2) - 1e-8);
  // Same directions, h0 = 0: Ric^c equals the per-direction combination exactly.
  for (size_t i = 0; i < c.samples.size(); ++i)
    EXPECT_NEAR(c.samples[i].values[2], t.samples[i].values[0] - t.samples[i].values[1], 1e-7) << i;
}

TEST(BMReport, JsonAndCsv) {
  const BMReport r = evaluate_ric_ab(hopf_sphere(1), quick());
  const nlohmann::json j = r.to_json();
  EXPECT_EQ(j["theorem"], "ric_ab");
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_NEAR(j["diameter_bound"].get<double>(), kPi, 1e-8);
  EXPECT_EQ(j["samples"]["evaluations"].get<size_t>(), r.samples.size());
  std::ostringstream os;
  r.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "point,t,h0,h1,h2,ric_a,ric_b,ric_c");
  EXPECT_EQ(size_t(std::count(csv.begin(), csv.end(), '\n')), r.samples.size() + 1);
}

TEST(HopfSharpness, BoundIsAttained) {
  const ModelPtr m = hopf_sphere(1);
  const BMReport r = bound_ric_ab(m, quick());
  const ExtremalState s = normalize_unit_speed({m->origin(), (Vec(3) << 0.0, 1.0, 0.0).finished()});
  const auto t = first_conjugate_time(m, s, 5.0);
  ASSERT_TRUE(t.has_value());
  EXPECT_NEAR(*t, *r.diameter_bound, 1e-4);
}
