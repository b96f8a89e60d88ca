#pragma once

#include "geovar/common.hpp"
#include "geovar/domain.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace geovar {

using MatrixFn = std::function<Mat(const Vec&)>;
// dg[k] = d g / d x^k ; d2g[k*m + l] = d^2 g / d x^k d x^l
using MatrixListFn = std::function<std::vector<Mat>(const Vec&)>;

struct FiniteDifferenceSteps {
  double first = 1e-5;
  double second = 1e-4;
};

enum class DerivativeMode { analytic, finite_difference };

class MetricField {
 public:
  MetricField() = default;
  MetricField(ChartDomain domain, int index, MatrixFn components, std::string name = "");

  MetricField& set_first_derivatives(MatrixListFn dg);
  MetricField& set_second_derivatives(MatrixListFn d2g);
  MetricField& set_steps(FiniteDifferenceSteps steps);
  // Same components, derivatives by central differences only.
  MetricField finite_difference() const;

  int dim() const { return domain_.dim; }
  int index() const { return index_; }
  const ChartDomain& domain() const { return domain_; }
  const std::string& name() const { return name_; }
  const FiniteDifferenceSteps& steps() const { return steps_; }
  DerivativeMode first_mode() const { return dg_ ? DerivativeMode::analytic : DerivativeMode::finite_difference; }
  DerivativeMode second_mode() const { return d2g_ ? DerivativeMode::analytic : DerivativeMode::finite_difference; }

  // Raw evaluations, no domain or signature checks.
  Mat g(const Vec& x) const;
  std::vector<Mat> dg(const Vec& x) const;
  std::vector<Mat> d2g(const Vec& x) const;
  const MatrixFn& components() const { return g_; }

 private:
  ChartDomain domain_;
  int index_ = 0;
  MatrixFn g_;
  MatrixListFn dg_;
  MatrixListFn d2g_;
  FiniteDifferenceSteps steps_;
  std::string name_;
};

struct AuxiliaryRiemannian {
  int dim = 0;
  MatrixFn components;
  static AuxiliaryRiemannian euclidean(int m);
  Mat operator()(const Vec& x) const { return components(x); }
  double inner(const Vec& x, const Vec& a, const Vec& b) const { return a.dot(components(x) * b); }
  double norm(const Vec& x, const Vec& a) const;
};

struct Signature {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};
Signature signature_of(const Mat& g, double rel_tol = 1e-10);

// Full Levi-Civita data at a point; gamma[k](i,j) = Gamma^k_ij.
struct Connection {
  Mat g;
  Mat ginv;
  std::vector<Mat> gamma;
  Vec apply(const Vec& u, const Vec& v) const;
};
Connection connection_unchecked(const MetricField& metric, const Vec& x);
// dgamma[p][k](i,j) = d_p Gamma^k_ij
std::vector<std::vector<Mat>> christoffel_derivatives_unchecked(const MetricField& metric, const Vec& x,
                                                                const Connection& conn);

struct ChristoffelValue {
  Vec x;
  std::vector<Mat> gamma;
  Vec operator()(const Vec& u, const Vec& v) const;
  double max_norm() const;
};

struct CurvatureValue {
  Vec x;
  int m = 0;
  Mat g;
  std::vector<double> riemann;  // R^i_{jkl} at ((i*m+j)*m+k)*m+l, R(d_k,d_l)d_j = R^i_{jkl} d_i
  Mat ricci;
  double scalar = 0.0;
  double r(int i, int j, int k, int l) const { return riemann[((i * m + j) * m + k) * m + l]; }
  Vec apply(const Vec& X, const Vec& Y, const Vec& Z) const;  // R(X,Y)Z
  double lowered(const Vec& X, const Vec& Y, const Vec& Z, const Vec& W) const;
  double sectional(const Vec& X, const Vec& Y) const;
  // Matrix of w -> R(v,w)v.
  Mat jacobi_operator(const Vec& v) const;
  double max_norm() const;
};
CurvatureValue curvature_unchecked(const MetricField& metric, const Vec& x);

Mat eval_metric(const MetricField& metric, const Vec& x);
ChristoffelValue christoffel(const MetricField& metric, const Vec& x);
CurvatureValue curvature(const MetricField& metric, const Vec& x);

MetricField product_metric(const MetricField& metric);

struct DistributionField {
  ChartDomain domain;
  int rank = 0;
  MatrixFn projector;
};

MetricField metric_from_distribution(const DistributionField& dist, const AuxiliaryRiemannian& g_R);
Mat negative_eigenprojector(const MetricField& metric, const AuxiliaryRiemannian& g_R, const Vec& x);

enum class CausalCharacter { timelike, lightlike, spacelike };
const char* causal_name(CausalCharacter c);
CausalCharacter causal_character(const MetricField& metric, const Vec& x, const Vec& v, double band = 1e-9);

}  // namespace geovar
