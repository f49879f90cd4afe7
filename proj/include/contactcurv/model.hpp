#pragma once

// Contact sub-Riemannian structures in frame form.
//
// A model supplies an orthonormal frame X_1..X_2d of the distribution, the
// Reeb field X_0, and the structural functions c_ab^g defined by
// [X_a, X_b] = sum_g c_ab^g X_g, together with their frame derivatives.
// Frame index 0 is always the Reeb field.  Points live in a model-specific
// chart whose dimension need not equal 2d+1 (matrix groups store the full
// matrix).

#include <ceres/jet.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <complex>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "contactcurv/core.hpp"
#include "json.hpp"

namespace contactcurv {

using CMat = Eigen::MatrixXcd;

// c(a,b,g) = c_ab^g, dc[mu](a,b,g) = X_mu(c_ab^g),
// d2c[nu][mu](a,b,g) = X_nu(X_mu(c_ab^g)).
struct FrameJets {
  Tensor3 c;
  std::vector<Tensor3> dc;
  std::vector<std::vector<Tensor3>> d2c;

  int n() const { return c.dim(0); }
  int order() const { return !d2c.empty() ? 2 : !dc.empty() ? 1 : 0; }
};

inline FrameJets constant_jets(const Tensor3& c, int order) {
  FrameJets j;
  j.c = c;
  const int n = c.dim(0);
  if (order >= 1) j.dc.assign(size_t(n), Tensor3(n));
  if (order >= 2) j.d2c.assign(size_t(n), std::vector<Tensor3>(size_t(n), Tensor3(n)));
  return j;
}

class ContactModel {
 public:
  virtual ~ContactModel() = default;

  virtual std::string name() const = 0;
  virtual int d() const = 0;
  int dim() const { return 2 * d() + 1; }
  virtual int chart_dim() const = 0;
  virtual bool left_invariant() const = 0;
  virtual Vec origin() const = 0;

  // Structural functions and at least `order` levels of frame derivatives.
  virtual FrameJets jets(const Vec& x, int order) const = 0;
  // chart_dim x dim matrix whose column a is X_a in chart coordinates.
  virtual Mat frame(const Vec& x) const = 0;
  // Pulls a drifted point back onto the model (matrix groups).
  virtual Vec renormalize(const Vec& x) const { return x; }
  // Coordinates written to trajectory files.
  virtual Vec output_coords(const Vec& x) const { return x; }
  virtual int output_dim() const { return chart_dim(); }

  double flag_tolerance() const { return left_invariant() ? 1e-9 : 1e-6; }
};

using ModelPtr = std::shared_ptr<const ContactModel>;

namespace detail {

inline double jacobi_residual(const Tensor3& c) {
  const int n = c.dim(0);
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int g = 0; g < n; ++g)
        for (int z = 0; z < n; ++z) {
          double s = 0.0;
          for (int e = 0; e < n; ++e)
            s += c(b, g, e) * c(a, e, z) + c(g, a, e) * c(b, e, z) + c(a, b, e) * c(g, e, z);
          worst = std::max(worst, std::abs(s));
        }
  return worst;
}

}  // namespace detail

// Left-invariant structure on a simply connected group, in exponential
// coordinates of the first kind: the point x stands for exp(sum x_a X_a).
class LieAlgebraModel : public ContactModel {
 public:
  LieAlgebraModel(std::string name, int d, Tensor3 c) : name_(std::move(name)), d_(d), c_(std::move(c)) {
    if (d_ < 1) throw InvalidModel("d must be at least 1");
    if (c_.dim(0) != dim() || c_.dim(1) != dim() || c_.dim(2) != dim())
      throw InvalidModel("structural constants must be " + std::to_string(dim()) + "^3");
  }

  std::string name() const override { return name_; }
  int d() const override { return d_; }
  int chart_dim() const override { return dim(); }
  bool left_invariant() const override { return true; }
  Vec origin() const override { return Vec::Zero(dim()); }
  const Tensor3& constants() const { return c_; }

  FrameJets jets(const Vec& /*x*/, int order) const override { return constant_jets(c_, order); }

  // X_a at exp(x) has chart components phi(ad_x)^{-1} e_a with
  // phi(z) = (1 - e^{-z}) / z.
  Mat frame(const Vec& x) const override {
    const int n = dim();
    Mat ad = Mat::Zero(n, n);
    for (int a = 0; a < n; ++a) {
      if (x(a) == 0.0) continue;
      for (int b = 0; b < n; ++b)
        for (int g = 0; g < n; ++g) ad(g, b) += x(a) * c_(a, b, g);
    }
    if (ad.cwiseAbs().maxCoeff() == 0.0) return Mat::Identity(n, n);
    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = -ad;
    block.topRightCorner(n, n).setIdentity();
    const Mat phi = Mat(block.exp()).topRightCorner(n, n);
    Eigen::PartialPivLU<Mat> lu(phi);
    if (!(lu.rcond() > 1e-12)) throw IntegrationFailure("exponential chart is singular at this point");
    return lu.inverse();
  }

 private:
  std::string name_;
  int d_;
  Tensor3 c_;
};

// Points are m x m unitary matrices g, stored as [vec(Re g); vec(Im g)], and
// X_a(g) = g G_a for fixed skew-Hermitian generators G_a.  For a group model
// the jets are the bracket constants.  For a homogeneous space the jets are
// those of a frame adapted to g, which are the same at every point.
class MatrixGroupModel : public ContactModel {
 public:
  MatrixGroupModel(std::string name, int d, std::vector<CMat> generators, FrameJets jets, bool left_invariant)
      : name_(std::move(name)), d_(d), gens_(std::move(generators)), jets_(std::move(jets)),
        left_invariant_(left_invariant) {
    if (int(gens_.size()) != dim()) throw InvalidModel("need 2d+1 generators");
    m_ = int(gens_[0].rows());
  }

  std::string name() const override { return name_; }
  int d() const override { return d_; }
  int chart_dim() const override { return 2 * m_ * m_; }
  bool left_invariant() const override { return left_invariant_; }
  Vec origin() const override { return pack(CMat::Identity(m_, m_)); }
  int matrix_size() const { return m_; }
  const std::vector<CMat>& generators() const { return gens_; }

  FrameJets jets(const Vec& /*x*/, int order) const override {
    if (order > jets_.order()) throw InvalidModel(name_ + ": jets of order " + std::to_string(order) + " unavailable");
    return jets_;
  }

  Mat frame(const Vec& x) const override {
    const CMat g = unpack(x);
    Mat f(chart_dim(), dim());
    for (int a = 0; a < dim(); ++a) f.col(a) = pack(g * gens_[size_t(a)]);
    return f;
  }

  Vec renormalize(const Vec& x) const override {
    Eigen::JacobiSVD<CMat> svd(unpack(x), Eigen::ComputeFullU | Eigen::ComputeFullV);
    return pack(svd.matrixU() * svd.matrixV().adjoint());
  }

  // First column of g, i.e. the image of the base point of the sphere,
  // written as (Re z_0, Im z_0, Re z_1, ...).
  Vec output_coords(const Vec& x) const override {
    const CMat g = unpack(x);
    Vec p(2 * m_);
    for (int r = 0; r < m_; ++r) {
      p(2 * r) = g(r, 0).real();
      p(2 * r + 1) = g(r, 0).imag();
    }
    return p;
  }
  int output_dim() const override { return 2 * m_; }

  Vec pack(const CMat& g) const {
    Vec v(2 * m_ * m_);
    for (int j = 0; j < m_; ++j)
      for (int i = 0; i < m_; ++i) {
        v(j * m_ + i) = g(i, j).real();
        v(m_ * m_ + j * m_ + i) = g(i, j).imag();
      }
    return v;
  }
  CMat unpack(const Vec& v) const {
    if (v.size() != 2 * m_ * m_) throw std::invalid_argument(name_ + ": point has wrong chart dimension");
    CMat g(m_, m_);
    for (int j = 0; j < m_; ++j)
      for (int i = 0; i < m_; ++i) g(i, j) = {v(j * m_ + i), v(m_ * m_ + j * m_ + i)};
    return g;
  }

 private:
  std::string name_;
  int d_;
  int m_ = 0;
  std::vector<CMat> gens_;
  FrameJets jets_;
  bool left_invariant_;
};

// User-supplied structure.  When dc is absent it is approximated by central
// differences along integral curves of the frame (step 1e-5, roughly 1e-4
// accurate for well-scaled data); second derivatives must be supplied.
class FunctionModel : public ContactModel {
 public:
  struct Functions {
    std::function<Tensor3(const Vec&)> c;
    std::function<Mat(const Vec&)> frame;
    std::function<std::vector<Tensor3>(const Vec&)> dc;
    std::function<std::vector<std::vector<Tensor3>>(const Vec&)> d2c;
  };

  FunctionModel(std::string name, int d, Vec origin, Functions fns)
      : name_(std::move(name)), d_(d), origin_(std::move(origin)), fns_(std::move(fns)) {
    if (!fns_.c || !fns_.frame) throw InvalidModel(name_ + ": c and frame evaluators are required");
  }

  std::string name() const override { return name_; }
  int d() const override { return d_; }
  int chart_dim() const override { return int(origin_.size()); }
  bool left_invariant() const override { return false; }
  Vec origin() const override { return origin_; }
  Mat frame(const Vec& x) const override { return fns_.frame(x); }

  FrameJets jets(const Vec& x, int order) const override {
    FrameJets j;
    j.c = fns_.c(x);
    if (order >= 1) j.dc = fns_.dc ? fns_.dc(x) : finite_difference_dc(x);
    if (order >= 2) {
      if (!fns_.d2c) throw InvalidModel(name_ + ": second frame derivatives of c were not supplied");
      j.d2c = fns_.d2c(x);
    }
    return j;
  }

  static constexpr double kFiniteDifferenceStep = 1e-5;

 private:
  // One RK4 step along X_mu; the local error is O(h^5).
  Vec flow_along(const Vec& x, int mu, double h) const {
    auto f = [&](const Vec& p) -> Vec { return fns_.frame(p).col(mu); };
    const Vec k1 = f(x);
    const Vec k2 = f(x + 0.5 * h * k1);
    const Vec k3 = f(x + 0.5 * h * k2);
    const Vec k4 = f(x + h * k3);
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  std::vector<Tensor3> finite_difference_dc(const Vec& x) const {
    const double h = kFiniteDifferenceStep;
    const int n = dim();
    std::vector<Tensor3> dc;
    for (int mu = 0; mu < n; ++mu) {
      const Tensor3 plus = fns_.c(flow_along(x, mu, h));
      const Tensor3 minus = fns_.c(flow_along(x, mu, -h));
      Tensor3 t(n);
      for (size_t k = 0; k < t.data().size(); ++k) t.data()[k] = (plus.data()[k] - minus.data()[k]) / (2.0 * h);
      dc.push_back(std::move(t));
    }
    return dc;
  }

  std::string name_;
  int d_;
  Vec origin_;
  Functions fns_;
};

// ---------------------------------------------------------------------------
// Builtin structures.

inline std::shared_ptr<const LieAlgebraModel> heisenberg(int d) {
  if (d < 1) throw InvalidModel("heisenberg: d must be at least 1");
  const int n = 2 * d + 1;
  Tensor3 c(n);
  for (int i = 1; i <= d; ++i) {
    c(i, i + d, 0) = 1.0;
    c(i + d, i, 0) = -1.0;
  }
  return std::make_shared<LieAlgebraModel>("heisenberg", d, std::move(c));
}

// d = 1 structure with c_12^0 = 1; the remaining constants are free subject
// to the Jacobi identity.
struct Generic3dParams {
  double c12_1 = 0.0, c12_2 = 0.0;
  double c10_1 = 0.0, c10_2 = 0.0;
  double c20_1 = 0.0, c20_2 = 0.0;
};

inline std::shared_ptr<const LieAlgebraModel> generic3d(const Generic3dParams& p) {
  Tensor3 c(3);
  auto set = [&c](int a, int b, int g, double v) {
    c(a, b, g) = v;
    c(b, a, g) = -v;
  };
  set(1, 2, 0, 1.0);
  set(1, 2, 1, p.c12_1);
  set(1, 2, 2, p.c12_2);
  set(1, 0, 1, p.c10_1);
  set(1, 0, 2, p.c10_2);
  set(2, 0, 1, p.c20_1);
  set(2, 0, 2, p.c20_2);
  const double scale = std::max(1.0, c.max_abs() * c.max_abs());
  const double jac = detail::jacobi_residual(c);
  if (jac > 1e-12 * scale)
    throw InvalidModel("generic3d: parameters violate the Jacobi identity (residual " + std::to_string(jac) + ")");
  return std::make_shared<LieAlgebraModel>("generic3d", 1, std::move(c));
}

namespace detail {

// Real coordinates of skew-Hermitian matrices in a fixed real basis.
class RealBasis {
 public:
  explicit RealBasis(std::vector<CMat> basis) : basis_(std::move(basis)) {
    const int m = int(basis_[0].rows());
    Mat k(2 * m * m, int(basis_.size()));
    for (size_t a = 0; a < basis_.size(); ++a) k.col(int(a)) = flatten(basis_[a]);
    qr_ = k.colPivHouseholderQr();
    if (qr_.rank() != int(basis_.size())) throw InvalidModel("matrix basis is linearly dependent");
    k_ = k;
  }

  Vec coords(const CMat& x) const {
    const Vec f = flatten(x);
    Vec c = qr_.solve(f);
    if ((k_ * c - f).norm() > 1e-10 * std::max(1.0, f.norm())) throw InvalidModel("matrix is not in the span of the basis");
    return c;
  }
  const std::vector<CMat>& basis() const { return basis_; }
  int size() const { return int(basis_.size()); }

 private:
  static Vec flatten(const CMat& x) {
    Vec v(2 * x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      v(2 * i) = x.data()[i].real();
      v(2 * i + 1) = x.data()[i].imag();
    }
    return v;
  }
  std::vector<CMat> basis_;
  Mat k_;
  Eigen::ColPivHouseholderQR<Mat> qr_;
};

inline Tensor3 bracket_constants(const RealBasis& b, int n) {
  Tensor3 c(n, n, b.size());
  for (int a = 0; a < n; ++a)
    for (int bb = 0; bb < n; ++bb) {
      const CMat& x = b.basis()[size_t(a)];
      const CMat& y = b.basis()[size_t(bb)];
      const Vec k = b.coords(x * y - y * x);
      for (int g = 0; g < b.size(); ++g) c(a, bb, g) = k(g);
    }
  return c;
}

template <typename T>
struct ScalarFactory {
  static T make(double x) { return T(x); }
};
template <typename U, int N>
struct ScalarFactory<ceres::Jet<U, N>> {
  static ceres::Jet<U, N> make(double x) {
    ceres::Jet<U, N> j;
    j.a = ScalarFactory<U>::make(x);
    return j;
  }
};

template <typename T>
struct SmallMat {
  int rows = 0, cols = 0;
  std::vector<T> a;
  SmallMat(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), ScalarFactory<T>::make(0.0)) {}
  T& operator()(int i, int j) { return a[size_t(i) * size_t(cols) + size_t(j)]; }
  const T& operator()(int i, int j) const { return a[size_t(i) * size_t(cols) + size_t(j)]; }
};

template <typename T>
SmallMat<T> matmul(const SmallMat<T>& x, const SmallMat<T>& y) {
  SmallMat<T> z(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k)
      for (int j = 0; j < y.cols; ++j) z(i, j) += x(i, k) * y(k, j);
  return z;
}

// Reductive decomposition u(m) = p + h with p spanned by the first `np`
// basis elements.  The local frame near the base point o is
// X_a(exp(v) o) = exp(v) G_a o with v in p.
struct ReductivePair {
  int np = 0;
  int ng = 0;
  std::vector<Mat> ad;  // ad[a](c, b): component c of [B_a, B_b]
};

// Chart components of X_0..X_{np-1} at exp(v) o.  Only valid to third order
// in v: phi(ad_v) and the inverse of the block system are truncated there.
template <typename T>
SmallMat<T> section_frame(const ReductivePair& rp, const std::vector<T>& v) {
  const int ng = rp.ng, np = rp.np;
  SmallMat<T> ad(ng, ng);
  for (int a = 0; a < np; ++a)
    for (int i = 0; i < ng; ++i)
      for (int j = 0; j < ng; ++j) {
        const double w = rp.ad[size_t(a)](i, j);
        if (w != 0.0) ad(i, j) += v[size_t(a)] * ScalarFactory<T>::make(w);
      }
  const SmallMat<T> ad2 = matmul(ad, ad);
  const SmallMat<T> ad3 = matmul(ad2, ad);
  // phi(ad) = I - ad/2 + ad^2/6 - ad^3/24; the p-columns of the block system
  // [phi(ad)|_p, incl_h] differ from the identity by N.
  SmallMat<T> nmat(ng, ng);
  const T half = ScalarFactory<T>::make(0.5), sixth = ScalarFactory<T>::make(1.0 / 6.0),
          q24 = ScalarFactory<T>::make(1.0 / 24.0);
  for (int i = 0; i < ng; ++i)
    for (int b = 0; b < np; ++b) nmat(i, b) = sixth * ad2(i, b) - half * ad(i, b) - q24 * ad3(i, b);
  const SmallMat<T> n2 = matmul(nmat, nmat);
  const SmallMat<T> n3 = matmul(n2, nmat);
  SmallMat<T> f(np, np);
  for (int i = 0; i < np; ++i)
    for (int b = 0; b < np; ++b) {
      f(i, b) = n2(i, b) - nmat(i, b) - n3(i, b);
      if (i == b) f(i, b) += ScalarFactory<T>::make(1.0);
    }
  return f;
}

// Structural functions of the section frame at exp(v) o, flattened as
// c[(a*np + b)*np + g].
template <typename T, int N>
std::vector<T> section_structure(const ReductivePair& rp, const std::vector<T>& v) {
  using D = ceres::Jet<T, N>;
  std::vector<D> vd(N);
  for (int k = 0; k < N; ++k) {
    vd[size_t(k)] = ScalarFactory<D>::make(0.0);
    vd[size_t(k)].a = v[size_t(k)];
    vd[size_t(k)].v[k] = ScalarFactory<T>::make(1.0);
  }
  const SmallMat<D> fd = section_frame(rp, vd);
  SmallMat<T> f(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) f(i, j) = fd(i, j).a;

  std::vector<T> c(size_t(N * N * N), ScalarFactory<T>::make(0.0));
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      // [X_a, X_b]^k = X_a^j d_j X_b^k - X_b^j d_j X_a^k
      std::vector<T> br(N, ScalarFactory<T>::make(0.0));
      for (int k = 0; k < N; ++k)
        for (int j = 0; j < N; ++j) br[size_t(k)] += f(j, a) * fd(k, b).v[j] - f(j, b) * fd(k, a).v[j];
      // Solve F c = br; F is the identity at the base point.
      SmallMat<T> m = f;
      for (int p = 0; p < N; ++p) {
        for (int r = p + 1; r < N; ++r) {
          const T factor = m(r, p) / m(p, p);
          for (int q = p; q < N; ++q) m(r, q) -= factor * m(p, q);
          br[size_t(r)] -= factor * br[size_t(p)];
        }
      }
      for (int p = N - 1; p >= 0; --p) {
        T s = br[size_t(p)];
        for (int q = p + 1; q < N; ++q) s -= m(p, q) * c[size_t((a * N + b) * N + q)];
        c[size_t((a * N + b) * N + p)] = s / m(p, p);
      }
    }
  return c;
}

template <int N>
FrameJets section_jets(const ReductivePair& rp) {
  using J1 = ceres::Jet<double, N>;
  using J2 = ceres::Jet<J1, N>;
  std::vector<J2> v(N);
  for (int k = 0; k < N; ++k) {
    v[size_t(k)].a.v[k] = 1.0;
    v[size_t(k)].v[k] = J1(1.0);
  }
  const std::vector<J2> c = section_structure<J2, N>(rp, v);

  std::vector<J1> v1(N);
  for (int k = 0; k < N; ++k) v1[size_t(k)].v[k] = 1.0;
  const SmallMat<J1> f1 = section_frame(rp, v1);

  FrameJets jets;
  jets.c = Tensor3(N);
  jets.dc.assign(N, Tensor3(N));
  jets.d2c.assign(N, std::vector<Tensor3>(N, Tensor3(N)));
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b)
      for (int g = 0; g < N; ++g) {
        const J2& e = c[size_t((a * N + b) * N + g)];
        jets.c(a, b, g) = e.a.a;
        for (int mu = 0; mu < N; ++mu) jets.dc[size_t(mu)](a, b, g) = e.a.v[mu];
        // X_nu(X_mu c) = (d_nu X_mu^l) d_l c + d_nu d_mu c at the base point.
        for (int nu = 0; nu < N; ++nu)
          for (int mu = 0; mu < N; ++mu) {
            double s = e.v[nu].v[mu];
            for (int l = 0; l < N; ++l) s += f1(l, mu).v[nu] * e.a.v[l];
            jets.d2c[size_t(nu)][size_t(mu)](a, b, g) = s;
          }
      }
  return jets;
}

}  // namespace detail

// Unit sphere S^{2d+1} in C^{d+1} as U(d+1)/U(d).  Horizontal generators move
// the base point e_0 with unit speed, and X_0 = -2i e_0 e_0^* closes the
// brackets [X_k, X_{k+d}] = X_0.
inline std::shared_ptr<const MatrixGroupModel> hopf_sphere_homogeneous(int d) {
  if (d < 1 || d > 3) throw InvalidModel("hopf_sphere: supported for 1 <= d <= 3");
  const int m = d + 1;
  const std::complex<double> I(0.0, 1.0);
  std::vector<CMat> basis;
  CMat x0 = CMat::Zero(m, m);
  x0(0, 0) = -2.0 * I;
  basis.push_back(x0);
  for (int k = 1; k <= d; ++k) {
    CMat e = CMat::Zero(m, m);
    e(k, 0) = 1.0;
    e(0, k) = -1.0;
    basis.push_back(e);
  }
  for (int k = 1; k <= d; ++k) {
    CMat e = CMat::Zero(m, m);
    e(k, 0) = I;
    e(0, k) = I;
    basis.push_back(e);
  }
  const std::vector<CMat> gens = basis;
  for (int k = 1; k <= d; ++k) {
    CMat e = CMat::Zero(m, m);
    e(k, k) = I;
    basis.push_back(e);
    for (int l = k + 1; l <= d; ++l) {
      CMat s = CMat::Zero(m, m), t = CMat::Zero(m, m);
      s(k, l) = 1.0;
      s(l, k) = -1.0;
      t(k, l) = I;
      t(l, k) = I;
      basis.push_back(s);
      basis.push_back(t);
    }
  }
  detail::RealBasis rb(basis);
  const int np = 2 * d + 1, ng = rb.size();
  const Tensor3 all = detail::bracket_constants(rb, ng);
  detail::ReductivePair rp;
  rp.np = np;
  rp.ng = ng;
  for (int a = 0; a < np; ++a) {
    Mat ad(ng, ng);
    for (int b = 0; b < ng; ++b)
      for (int g = 0; g < ng; ++g) ad(g, b) = all(a, b, g);
    rp.ad.push_back(ad);
  }
  FrameJets jets;
  switch (d) {
    case 1: jets = detail::section_jets<3>(rp); break;
    case 2: jets = detail::section_jets<5>(rp); break;
    default: jets = detail::section_jets<7>(rp); break;
  }
  return std::make_shared<MatrixGroupModel>("hopf_sphere", d, gens, std::move(jets), false);
}

// For d = 1 the sphere is the group SU(2) and the structure is left-invariant.
inline std::shared_ptr<const MatrixGroupModel> hopf_sphere(int d) {
  if (d != 1) return hopf_sphere_homogeneous(d);
  const std::complex<double> I(0.0, 1.0);
  CMat s1(2, 2), s2(2, 2), s3(2, 2);
  s1 << 0.0, 1.0, 1.0, 0.0;
  s2 << 0.0, -I, I, 0.0;
  s3 << 1.0, 0.0, 0.0, -1.0;
  std::vector<CMat> gens{-2.0 * I * s3, -I * s1, -I * s2};
  detail::RealBasis rb(gens);
  return std::make_shared<MatrixGroupModel>("hopf_sphere", 1, gens, constant_jets(detail::bracket_constants(rb, 3), 2),
                                            true);
}

inline std::vector<std::string> builtin_model_names() { return {"heisenberg", "hopf_sphere", "generic3d"}; }

inline ModelPtr builtin_model(const std::string& name, int d, const Generic3dParams& params = {}) {
  if (name == "heisenberg") return heisenberg(d);
  if (name == "hopf_sphere") return hopf_sphere(d);
  if (name == "generic3d") {
    if (d != 1) throw ConfigError("generic3d is three-dimensional (d = 1)");
    return generic3d(params);
  }
  throw ConfigError("unknown builtin model '" + name + "'");
}

// ---------------------------------------------------------------------------
// Model files: {"d": int, "left_invariant": true, "c": [[a, b, g, value], ...]}.
// Omitted entries are zero and the (b, a) entry is filled in by antisymmetry.

inline std::shared_ptr<const LieAlgebraModel> parse_model_json(const nlohmann::json& j,
                                                               const std::string& name = "file") {
  try {
    if (!j.is_object()) throw ConfigError("model file must hold a JSON object");
    if (!j.contains("d") || !j["d"].is_number_integer()) throw ConfigError("model file: integer field 'd' required");
    const int d = j["d"].get<int>();
    if (d < 1) throw ConfigError("model file: d must be at least 1");
    if (!j.value("left_invariant", false))
      throw ConfigError("model file: only left-invariant models (\"left_invariant\": true) can be loaded");
    if (!j.contains("c") || !j["c"].is_array()) throw ConfigError("model file: array field 'c' required");
    const int n = 2 * d + 1;
    Tensor3 c(n);
    std::vector<char> seen(size_t(n) * n * n, 0);
    for (const auto& e : j["c"]) {
      if (!e.is_array() || e.size() != 4) throw ConfigError("model file: each entry of 'c' is [a, b, g, value]");
      const int a = e[0].get<int>(), b = e[1].get<int>(), g = e[2].get<int>();
      const double v = e[3].get<double>();
      if (a < 0 || a >= n || b < 0 || b >= n || g < 0 || g >= n)
        throw ConfigError("model file: index out of range in entry " + e.dump());
      if (a == b) {
        if (v != 0.0) throw ConfigError("model file: c_aa^g must vanish, got " + e.dump());
        continue;
      }
      auto& s1 = seen[(size_t(a) * n + b) * n + g];
      auto& s2 = seen[(size_t(b) * n + a) * n + g];
      if ((s1 && c(a, b, g) != v) || (s2 && c(b, a, g) != -v))
        throw ConfigError("model file: conflicting entries for " + e.dump());
      c(a, b, g) = v;
      c(b, a, g) = -v;
      s1 = s2 = 1;
    }
    return std::make_shared<LieAlgebraModel>(j.value("name", name), d, std::move(c));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("model file: ") + ex.what());
  }
}

inline std::shared_ptr<const LieAlgebraModel> read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("malformed model file " + path + ": " + ex.what());
  }
  return parse_model_json(j, path);
}

inline nlohmann::json model_to_json(const LieAlgebraModel& m) {
  nlohmann::json entries = nlohmann::json::array();
  const int n = m.dim();
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      for (int g = 0; g < n; ++g)
        if (m.constants()(a, b, g) != 0.0) entries.push_back({a, b, g, m.constants()(a, b, g)});
  return {{"d", m.d()}, {"left_invariant", true}, {"name", m.name()}, {"c", entries}};
}

}  // namespace contactcurv
