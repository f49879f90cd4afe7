#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace contactcurv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Process exit codes shared by the library errors and the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitMath = 1,
  kExitConfig = 2,
  kExitIntegration = 3,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, int code) : std::runtime_error(what), code_(code) {}
  int exit_code() const { return code_; }

 private:
  int code_;
};

#define CONTACTCURV_ERROR(Name, code)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(#Name ": " + what, code) {} \
  };

CONTACTCURV_ERROR(SingularSeries, kExitMath)
CONTACTCURV_ERROR(IntegrationFailure, kExitIntegration)
CONTACTCURV_ERROR(TrivialCovector, kExitMath)
CONTACTCURV_ERROR(DegenerateCovector, kExitMath)
CONTACTCURV_ERROR(HypothesisFails, kExitMath)
CONTACTCURV_ERROR(NoConjugateTime, kExitMath)
CONTACTCURV_ERROR(InvalidModel, kExitMath)
CONTACTCURV_ERROR(ConfigError, kExitConfig)

#undef CONTACTCURV_ERROR

// Dense rank-3 array a(i,j,k), row-major in the last index.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int n0, int n1, int n2) : n0_(n0), n1_(n1), n2_(n2), data_(size_t(n0) * n1 * n2, 0.0) {}
  explicit Tensor3(int n) : Tensor3(n, n, n) {}

  double& operator()(int i, int j, int k) { return data_[(size_t(i) * n1_ + j) * n2_ + k]; }
  double operator()(int i, int j, int k) const { return data_[(size_t(i) * n1_ + j) * n2_ + k]; }

  int dim(int axis) const { return axis == 0 ? n0_ : axis == 1 ? n1_ : n2_; }
  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }
  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int n0_ = 0, n1_ = 0, n2_ = 0;
  std::vector<double> data_;
};

}  // namespace contactcurv
