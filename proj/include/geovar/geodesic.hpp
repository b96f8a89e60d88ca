#pragma once

#include "geovar/metric.hpp"
#include "geovar/ode.hpp"

#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace geovar {

struct GeodesicOptions {
  double tol = 1e-11;  // relative tolerance of the adaptive integrator
  bool fixed_step = false;
  double step = 1e-2;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 2000000;
  OdeOptions ode() const;
};

// Parametrized curve in chart coordinates.
struct Curve {
  double t0 = 0.0;
  double t1 = 1.0;
  std::function<Vec(double)> position;
  std::function<Vec(double)> velocity;
};

class GeodesicPath {
 public:
  MetricField metric;
  DenseTrajectory trajectory;  // state (x, v)
  Vec x0, v0;
  double T = 0.0;       // requested duration
  double t_end = 0.0;   // actual end (T unless the chart was left)
  OdeStatus status = OdeStatus::completed;
  double speed = 0.0;   // g(v0, v0)
  double conservation_error = 0.0;
  GeodesicOptions options;

  int dim() const { return metric.dim(); }
  bool complete() const { return status == OdeStatus::completed; }
  Vec state(double t) const { return trajectory.eval(t); }
  Vec x(double t) const { return trajectory.eval(t).head(dim()); }
  Vec v(double t) const { return trajectory.eval(t).tail(dim()); }
  std::vector<double> nodes() const { return trajectory.nodes(); }
  Curve as_curve() const;
};

Vec geodesic_acceleration(const MetricField& metric, const Vec& x, const Vec& v);

GeodesicPath integrate_geodesic(const MetricField& metric, const Vec& x0, const Vec& v0, double T,
                                const GeodesicOptions& opts = {});
// Throws DomainExit if the geodesic leaves the chart before t = 1.
Vec exp_map(const MetricField& metric, const Vec& x, const Vec& v, const GeodesicOptions& opts = {});

// k vector fields along a curve, stored column-wise.
struct FieldAlongCurve {
  int m = 0;
  int k = 0;
  DenseTrajectory trajectory;
  Mat at(double t) const;
};
FieldAlongCurve parallel_transport(const MetricField& metric, const Curve& curve, const Mat& W0,
                                   const GeodesicOptions& opts = {});
FieldAlongCurve parallel_transport(const GeodesicPath& path, const Mat& W0);

struct LengthEnergy {
  double L_R = 0.0;
  double E_R = 0.0;
  double E_g = 0.0;
};
LengthEnergy riem_length_energy(const GeodesicPath& path, const AuxiliaryRiemannian& g_R);
LengthEnergy length_energy(const MetricField& metric, const Curve& curve, const AuxiliaryRiemannian& g_R,
                           int pieces = 200);

struct SelfIntersections {
  std::vector<std::pair<double, double>> pairs;
  bool infinite_family = false;  // overlapping arcs: see detect_periodicity
};
SelfIntersections self_intersections(const GeodesicPath& path, double tol = 1e-7);

struct PeriodicityVerdict {
  bool periodic = false;
  double omega = 0.0;
  int k = 0;
  double residual = std::numeric_limits<double>::infinity();
};
PeriodicityVerdict detect_periodicity(const GeodesicPath& path, double tol = 1e-6);

struct TurningBound {
  double lhs = 0.0;
  double rhs = 0.0;
  double c = 0.0;
  double kappa = 0.0;
  bool holds = false;
};
TurningBound turning_bound_check(const MetricField& metric, const GeodesicPath& path, const ChartDomain& K);

}  // namespace geovar
