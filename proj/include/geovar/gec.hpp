#pragma once

#include "geovar/geodesic.hpp"
#include "geovar/jacobi.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace geovar {

// Smooth map psi: R^d -> R^n over a parameter box. Derivatives fall back to
// central differences when not supplied.
class Immersion {
 public:
  using Map = std::function<Vec(const Vec&)>;
  using Jacobian = std::function<Mat(const Vec&)>;           // n x d
  using Hessian = std::function<std::vector<Vec>(const Vec&)>;  // d*d entries, psi_ab at a*d+b

  Immersion() = default;
  Immersion(int d, int n, Map map, ChartDomain params);

  int d = 0;
  int n = 0;
  ChartDomain params;
  Map map;
  Jacobian jacobian;
  Hessian hessian;
  double fd_step = 1e-5;
  double fd_step2 = 1e-4;

  Vec eval(const Vec& u) const { return map(u); }
  Mat d1(const Vec& u) const;
  std::vector<Vec> d2(const Vec& u) const;

  static Immersion point(const Vec& p);
  // Circle of given radius in the (axis0, axis1) coordinate plane of R^n.
  static Immersion circle(const Vec& center, double radius, int axis0 = 0, int axis1 = 1);
};

enum class GecKind { FixedPoints, ProductSubmanifolds, Diagonal, Parametrized };
const char* gec_kind_name(GecKind k);

// Endpoint submanifold P of M x M, always carried as psi: R^d -> R^{2m}.
class Gec {
 public:
  GecKind kind = GecKind::FixedPoints;
  int m = 0;
  Immersion psi;
  Immersion P, Q;  // factors for FixedPoints / ProductSubmanifolds
  bool transposed = false;

  static Gec fixed(const Vec& p, const Vec& q);
  static Gec product(const Immersion& P, const Immersion& Q);
  static Gec diagonal(const ChartDomain& domain);
  static Gec parametrized(const Immersion& psi);
  Gec transpose() const;

  int dim() const { return psi.d; }
  Vec point(const Vec& u) const { return psi.eval(u); }
  Mat tangent(const Vec& u) const { return psi.d1(u); }
  std::vector<Vec> second(const Vec& u) const { return psi.d2(u); }

  // Parameters u with psi(u) = (x0, x1), wrapping periodic chart axes.
  std::optional<Vec> locate(const ChartDomain& chart, const Vec& x0, const Vec& x1, double tol = 1e-8,
                            const Vec* guess = nullptr) const;
  // psi(u) - (x0, x1) with wrapped displacement.
  Vec offset(const ChartDomain& chart, const Vec& u, const Vec& x0, const Vec& x1) const;
};

struct BoundaryGeometry {
  Vec u;
  Vec point;             // (p, q)
  Mat tangent;           // 2m x d
  Mat Gbar;              // product metric at (p, q)
  Mat gram;              // d x d, restricted product metric
  double gram_condition = 0.0;
  bool nondegenerate = false;
  Mat tangent_projector;  // gbar-orthogonal, valid when nondegenerate
  Mat normal_projector;
  std::vector<Vec> covariant_second;  // d*d entries: psi_ab + Gammabar(psi_a, psi_b)

  // S_eta(a, b) = gbar(covariant_second_ab, eta), a d x d matrix.
  Mat S(const Vec& eta) const;
};

// Throws DegenerateRestriction when the restricted metric is degenerate,
// unless allow_degenerate is set.
BoundaryGeometry boundary_geometry(const Gec& gec, const MetricField& metric, const Vec& u,
                                   bool allow_degenerate = false);

enum class Verdict { admissible, not_admissible, undetermined };
const char* verdict_name(Verdict v);

struct AdmissibilitySampling {
  int per_axis = 9;
  int max_samples = 4096;
  double transversality_tol = 1e-8;
  int threads = 1;
};

struct AdmissibilityReport {
  bool compact = false;
  bool nondegenerate_restriction = false;
  double worst_condition = 0.0;
  bool transversal_to_diagonal = false;
  double worst_transversality_margin = 0.0;
  std::vector<Vec> diagonal_points;  // parameters u with psi(u) in the diagonal
  double length_lower_bound = 0.0;
  bool length_bound_estimated = true;
  Verdict verdict = Verdict::undetermined;
  std::string rule;
};
AdmissibilityReport check_admissibility(const Gec& gec, const MetricField& metric,
                                        const AdmissibilitySampling& sampling = {});

struct BvpGuess {
  Vec u;
  Vec v0;
};

struct BvpOptions {
  double tol = 1e-9;
  int max_iter = 50;
  double fd_step = 1e-6;
  GeodesicOptions geodesic{1e-12};
  bool require_nondegenerate = true;
};

struct BvpSolution {
  GeodesicPath path;
  Vec u;
  Vec v0;
  double endpoint_residual = 0.0;
  double orthogonality_residual = 0.0;
  double jacobian_condition = 0.0;
  int iterations = 0;
};

// Shooting on [0, 1] with unknowns (u, v0).
BvpSolution solve_gp_geodesic(const MetricField& metric, const Gec& gec, const BvpGuess& guess,
                              const BvpOptions& opts = {});
// Runs every guess, keeps the converged ones, drops duplicates (phase distance < 1e-4).
// Output order follows the guess order.
std::vector<BvpSolution> multistart_gp_geodesic(const MetricField& metric, const Gec& gec,
                                                const std::vector<BvpGuess>& guesses, const BvpOptions& opts = {},
                                                int threads = 1);
// Uniform grid of guesses over the parameter box; v0 is the chart displacement.
std::vector<BvpGuess> grid_guesses(const Gec& gec, const ChartDomain& chart, int per_axis);

struct PJacobiResidual {
  Vec membership;  // 2m
  Vec tangential;  // d
  double norm() const;
};
PJacobiResidual pjacobi_boundary_residual(const MetricField& metric, const Gec& gec, const JacobiSolution& J,
                                          const Vec& u);

struct PJacobiSpace {
  int dimension = 0;
  Vec singular_values;         // ascending, of the scaled shooting matrix
  Mat initial_data;            // 2m x dimension, columns (J0; DJ0)
  std::vector<JacobiSolution> basis;
};
// Path runs on [0, t_end]; u are the endpoint parameters.
PJacobiSpace pjacobi_shooting(const MetricField& metric, const Gec& gec, const GeodesicPath& path, const Vec& u,
                              double rel_threshold = 1e-6);
// Endpoint parameters of a path that satisfies the boundary conditions of P;
// throws NotCritical otherwise. The path runs on [0, t_end].
Vec check_critical(const MetricField& metric, const Gec& gec, const GeodesicPath& path, double tol = 1e-6);
// check_critical followed by pjacobi_shooting.
PJacobiSpace pjacobi_shooting_checked(const MetricField& metric, const Gec& gec, const GeodesicPath& path,
                                      double tol = 1e-6, double rel_threshold = 1e-6);

struct FocalityReport {
  bool focal = false;
  std::vector<BvpSolution> solutions;
  std::vector<int> kernel_dimensions;
};
FocalityReport focality_report(const MetricField& metric, const Immersion& P, const Immersion& Q,
                               const std::vector<BvpGuess>& guesses, const BvpOptions& opts = {});

}  // namespace geovar
