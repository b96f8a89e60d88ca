#pragma once

#include "geovar/degeneracy.hpp"
#include "geovar/gec.hpp"
#include "geovar/jacobi.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace geovar {

class CounterRng;

// Field the bump is built against, over one parameter window.
struct EffectiveField {
  double t0 = 0.0;
  double t1 = 0.0;
  double omega = 0.0;  // period of the underlying closed orbit, 0 if none
  int terms = 1;       // number of shifted copies of J summed
  int window = 0;      // 0: whole path, 1 or 2: the two windows of a path portion
  double sup_norm = 0.0;
  std::function<Vec(double)> W;
  Vec operator()(double t) const { return W(t); }
};

// Plain field over [t0, t1] (no iterate sum).
EffectiveField plain_field(std::function<Vec(double)> W, double t0, double t1, int samples = 200);

// Sum of J over the passes of a periodic path through one window. A path that
// is not periodic gives W = J. Throws StronglyDegenerateSuspected when every
// candidate sum is tangent (or zero) relative to tol sup|J|.
EffectiveField iterate_sum_field(const JacobiSolution& J, const GeodesicPath& path, const PeriodicityVerdict& pv,
                                 double tol = 1e-6);

// |W_perp|_R / sup|W|_R, the non-tangency margin at t (Euclidean g_R).
double tangent_margin(const GeodesicPath& path, const EffectiveField& W, double t);

struct PerturbInterval {
  double t0 = 0.0;
  double t1 = 0.0;
  double margin = 0.0;   // min over I of tangent_margin
  double collar = 0.0;   // guard band on each side, in parameter units
  double range_t0 = 0.0; // parameter range whose image must avoid the tube
  double range_t1 = 0.0;
  bool periodic = false; // range wraps with period range_t1 - range_t0
  double clearance = 0.0; // min distance from gamma(I) to gamma(range minus collar)
};

// Candidate interval [t0, t1] checked against rho; nullopt when the image
// comes within 2 rho of the rest of the curve or the margin is not positive.
std::optional<PerturbInterval> try_interval(const GeodesicPath& path, const EffectiveField& W, double rho, double t0,
                                            double t1);
// Interval of length length_fraction of the window maximizing the margin;
// shorter lengths are tried when nothing fits. Throws NoValidInterval.
PerturbInterval select_interval(const GeodesicPath& path, const EffectiveField& W, double rho,
                                double length_fraction = 0.2);

// Symmetric tensor h supported in the rho-tube around gamma(I). In tube
// coordinates x = gamma(s) + y with y orthogonal to gamma'(s),
//   h(x) = chi_I(s) chi(|y| / rho) lambda / |W_perp(s)| K(s),  lambda = <y, W_perp / |W_perp|>,
// so h vanishes on the curve and its derivative along W is K on the inner 80% of I.
class PerturbationBump {
 public:
  struct TubePoint {
    bool inside = false;
    double s = 0.0;
    Vec y;
  };

  PerturbInterval interval;
  double rho = 0.0;
  double ramp = 0.1;  // fraction of I used by each longitudinal ramp

  Mat h(const Vec& x) const;
  TubePoint locate(const Vec& x) const;
  // True when x may be within rho + pad of the tube core (cheap test).
  bool near(const Vec& x, double pad = 0.0) const;
  // Covariant derivative (nabla_w h)(x) by central differences.
  Mat covariant_derivative(const MetricField& metric, const Vec& x, const Vec& w, double step = 1e-6) const;
  // Target tensor along I and the tube core.
  Mat target(double s) const { return K_(s); }
  Vec core(double s) const;
  Vec core_velocity(double s) const;
  Vec field(double s) const { return W_(s); }
  double sup_norm() const { return sup_norm_; }
  bool is_zero() const { return zero_; }
  int dim() const { return m_; }
  const ChartDomain& chart() const { return chart_; }

 private:
  friend PerturbationBump build_bump(const MetricField&, const GeodesicPath&, const EffectiveField&,
                                     const PerturbInterval&, double, std::function<Mat(double)>);
  double wrap_s(double s) const;
  double wrapped_diff(const Vec& x, int j, int a) const;
  void hermite(const Vec& x, int j, double r, Vec& d, Vec& x1, Vec& x2) const;
  double chi_long(double s) const;

  int m_ = 0;
  ChartDomain chart_;
  GeodesicPath path_;
  std::function<Vec(double)> W_;
  std::function<Mat(double)> K_;
  double ext0_ = 0.0, ext1_ = 0.0;  // parameter range searched for feet
  std::vector<double> s_;
  std::vector<Vec> xs_;
  std::vector<double> X_, V_;  // core samples and velocities, row-major
  double ds_ = 0.0;
  std::vector<double> periods_;  // 0 on non-periodic axes
  Vec lo_, hi_;  // coordinate box of the core samples
  double spacing_ = 0.0;
  double sup_norm_ = 0.0;
  bool zero_ = false;
  std::uint64_t id_ = 0;  // identifies the core data, shared by copies
};

// K defaults to g_R along the curve (the identity for the Euclidean g_R).
// Throws TubeTooWide when the tube is not embedded or leaves the chart.
PerturbationBump build_bump(const MetricField& metric, const GeodesicPath& path, const EffectiveField& W,
                            const PerturbInterval& I, double rho, std::function<Mat(double)> K = {});

// int h(gamma', DJ) + 1/2 (nabla_J h)(gamma', gamma') over the whole path.
double mixed_derivative(const MetricField& metric, const GeodesicPath& path, const JacobiSolution& J,
                        const PerturbationBump& bump, int pieces = 512);

// g + c h, with derivatives of h by central differences near the tube.
MetricField perturbed_metric(const MetricField& metric, const PerturbationBump& bump, double c);

// Degenerate (g, P)-geodesic with the field that degenerates it.
struct Scenario {
  std::string name;
  MetricField metric;
  Gec gec;
  GeodesicPath path;  // on [0, 1]
  Vec u;
  JacobiSolution J;
  PeriodicityVerdict periodicity;
};
// Throws NotPJacobiField when J misses the linearized boundary conditions
// (relative to sup|J|) and NotCritical when the path does not satisfy P.
Scenario make_scenario(std::string name, const MetricField& metric, const Gec& gec, const GeodesicPath& path,
                       const JacobiSolution& J, double tol = 1e-6);
// Uses the first kernel field (or the strong witness) of classify().
Scenario scenario_from_solution(std::string name, const MetricField& metric, const Gec& gec,
                                const GeodesicPath& path);
Scenario sphere_antipodal_scenario();
Scenario football_double_equator_scenario();

enum class TrialOutcome { Nondegenerate, Degenerate, SolverFailed };
const char* trial_outcome_name(TrialOutcome o);

struct RecheckOptions {
  double rel_threshold = 1e-6;
  int max_halvings = 10;
  int signature_samples = 1000;
  std::uint64_t seed = 1;
  BvpOptions bvp;
};

struct RecheckResult {
  double epsilon = 0.0;        // requested relative size
  double epsilon_used = 0.0;   // after halvings
  int halvings = 0;
  double scale = 0.0;          // coefficient c of h in g + c h
  TrialOutcome outcome = TrialOutcome::SolverFailed;
  DegeneracyReport report;
  double kernel_gap = 0.0;     // smallest singular value of the shooting map over the largest
  BvpSolution solution;
  std::string note;
};

// Effective coefficient: epsilon * max|g| over the tube / sup|h|.
double bump_scale(const MetricField& metric, const PerturbationBump& bump, double epsilon);
// Throws SignatureBroken when g + c h changes signature at any of `samples`
// seeded points of the tube.
void check_signature(const MetricField& metric, const PerturbationBump& bump, double c, int samples,
                     std::uint64_t seed);

// Re-solves the scenario under g + c h from the unperturbed solution and
// classifies the result. epsilon is halved on SignatureBroken up to
// max_halvings times. Throws SignatureBroken or NewtonDiverged.
RecheckResult apply_and_recheck(const Scenario& sc, const PerturbationBump& bump, double epsilon,
                                const RecheckOptions& opts = {});

MetricField conformal_perturb(const MetricField& metric, std::function<double(const Vec&)> f,
                              int check_per_axis = 9);
// 1 + amplitude * profile(|x - center| / radius), compactly supported.
std::function<double(const Vec&)> scalar_bump(const Vec& center, double radius, double amplitude);

struct GenericityTrial {
  std::string scenario;
  std::string metric;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  int n_trials = 0;
  std::vector<TrialOutcome> outcomes;
  std::vector<double> kernel_gaps;
  std::vector<double> mixed_derivatives;
  double nondegenerate_fraction = 0.0;
};

struct MonteCarloOptions {
  double rho = 0.1;
  double min_length = 0.1;  // interval length as a fraction of the window
  double max_length = 0.3;
  int threads = 1;
  RecheckOptions recheck;
};

// Random bump (interval, length and positive semidefinite K) drawn from rng.
PerturbationBump random_bump(const MetricField& metric, const GeodesicPath& path, const EffectiveField& W,
                             CounterRng& rng, const MonteCarloOptions& opts = {});

GenericityTrial genericity_montecarlo(const Scenario& sc, int n_trials, double epsilon, std::uint64_t seed,
                                      const MonteCarloOptions& opts = {});

}  // namespace geovar
