#pragma once

#include "geovar/metric.hpp"

#include <string>
#include <vector>

namespace geovar {

MetricField euclidean_metric(int m);
// diag(-1, 1, ..., 1); index 1.
MetricField minkowski_metric(int m = 4);
// (theta, phi), radius^2 * diag(1, sin^2 theta), theta in (eps, pi - eps), phi periodic.
MetricField sphere_metric(double radius = 1.0, double eps = 1e-2);
MetricField flat_torus_metric(int m = 2, std::vector<double> periods = {});
// (theta, z), diag(cos^2(z/2), 1), theta periodic 2 pi, |z| < pi - eps. Gauss curvature 1/4.
MetricField football_metric(double eps = 1e-2);
// (t, r, theta, phi) exterior chart, r > 2 mass + eps.
MetricField schwarzschild_metric(double mass = 1.0, double eps = 1e-3);

// Components as expression strings over `variables`; lower-triangle entries
// must repeat the upper ones (or be empty). Derivatives by finite differences.
MetricField expression_metric(const std::vector<std::vector<std::string>>& components,
                              const std::vector<std::string>& variables, ChartDomain domain, int index,
                              std::string name = "expression");

// Builtin by name: euclidean, minkowski, sphere, flat_torus, football, schwarzschild.
struct BuiltinParams {
  int dim = 2;
  double radius = 1.0;
  double mass = 1.0;
  double eps = -1.0;  // < 0: builtin default
  std::vector<double> periods;
};
MetricField builtin_metric(const std::string& name, const BuiltinParams& params);

}  // namespace geovar
