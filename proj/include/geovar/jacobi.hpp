#pragma once

#include "geovar/geodesic.hpp"

#include <functional>
#include <vector>

namespace geovar {

class Gec;

// k Jacobi fields integrated jointly with their geodesic. The ODE state is
// (x, v, J_1, J_1', ..., J_k, J_k') with coordinate derivatives J'.
class JacobiBundle {
 public:
  MetricField metric;
  DenseTrajectory trajectory;
  int m = 0;
  int k = 0;
  double t_end = 0.0;

  Vec x(double t) const { return trajectory.eval(t).head(m); }
  Vec v(double t) const { return trajectory.eval(t).segment(m, m); }
  Mat J(double t) const;
  Mat Jdot(double t) const;   // coordinate derivative
  Mat DJ(double t) const;     // covariant derivative J' + Gamma(v, J)
  // Stacked (J; DJ), 2m x k.
  Mat phase(double t) const;
};

// Initial data J0, DJ0 are m x k (columns are fields). The geodesic is
// re-integrated from the path's initial data over [0, T] (T <= path end).
JacobiBundle propagate_bundle(const GeodesicPath& path, const Mat& J0, const Mat& DJ0, double T = -1.0);

class JacobiSolution {
 public:
  JacobiBundle bundle;
  Vec J0, DJ0;
  double t_end() const { return bundle.t_end; }
  Vec J(double t) const { return bundle.J(t).col(0); }
  Vec DJ(double t) const { return bundle.DJ(t).col(0); }
  Vec Jdot(double t) const { return bundle.Jdot(t).col(0); }
  Vec x(double t) const { return bundle.x(t); }
  Vec v(double t) const { return bundle.v(t); }
};

JacobiSolution propagate_jacobi(const MetricField& metric, const GeodesicPath& path, const Vec& J0, const Vec& DJ0);

// Sup over sampled t of |D^2 J - R(v, J) v| using second differences of DJ.
double jacobi_residual(const JacobiSolution& sol, int samples = 50);

struct ConjugatePoint {
  double t = 0.0;
  int multiplicity = 0;
  double smallest_singular_value = 0.0;
};
std::vector<ConjugatePoint> conjugate_points(const MetricField& metric, const GeodesicPath& path,
                                             double rel_threshold = 1e-6);

struct MonodromyMap {
  Mat Phi;                 // 2m x 2m, (J(0), DJ(0)) -> (J(T), DJ(T))
  double T = 0.0;          // span over which Phi is taken (the whole closed path)
  PeriodicityVerdict periodicity;
  Vec singular_values;     // of Phi - I, ascending
  int fixed_dim = 0;
  Mat fixed_space;         // 2m x fixed_dim
  double tangent_residual = 0.0;
  JacobiBundle fundamental;
};
// Requires the path to close in phase space at its end time.
MonodromyMap monodromy(const MetricField& metric, const GeodesicPath& path, double rel_threshold = 1e-6,
                       double closure_tol = 1e-6);

// Vector field along a curve with its coordinate derivative.
struct FieldOnCurve {
  std::function<Vec(double)> value;
  std::function<Vec(double)> derivative;
};
// Piecewise-linear interpolation of node values on a uniform grid of [t0, t1].
FieldOnCurve piecewise_linear_field(const std::vector<Vec>& values, double t0, double t1);

double first_variation(const MetricField& metric, const Curve& curve, const Gec& gec, const FieldOnCurve& v,
                       double tol = 1e-8, int pieces = 400);

}  // namespace geovar
