// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "geovar/builtins.hpp"
#include "geovar/degeneracy.hpp"
#include "geovar/gec.hpp"
#include "geovar/index_form.hpp"
#include "geovar/obstruction.hpp"
#include "geovar/parallel.hpp"
#include "geovar/perturb.hpp"
#include "geovar/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace geovar;
using std::numbers::pi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a named check; failures are listed first in the detail text.
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Every geodesic integrated here, for the conservation criterion.
struct TrackedPath {
  std::string label;
  MetricField metric;
  GeodesicPath path;
};
std::vector<TrackedPath> g_tracked;

GeodesicPath track(const std::string& label, const MetricField& g, const GeodesicPath& p) {
  g_tracked.push_back({label, g, p});
  return p;
}

GeodesicPath geodesic(const std::string& label, const MetricField& g, const Vec& x0, const Vec& v0, double T,
                      const GeodesicOptions& o = {}) {
  return track(label, g, integrate_geodesic(g, x0, v0, T, o));
}

// ---------------------------------------------------------------------------

void flatness(Outcome& out) {
  const auto t0 = Clock::now();
  CounterRng rng(101, 0);
  double analytic = 0.0, fd = 0.0;
  for (const MetricField& g : {euclidean_metric(2), euclidean_metric(4), minkowski_metric(4)}) {
    const MetricField gfd = g.finite_difference();
    for (int i = 0; i < 100; ++i) {
      Vec x(g.dim());
      for (int a = 0; a < g.dim(); ++a) x[a] = rng.uniform(-10.0, 10.0);
      analytic = std::max({analytic, christoffel(g, x).max_norm(), curvature(g, x).max_norm()});
      fd = std::max({fd, christoffel(gfd, x).max_norm(), curvature(gfd, x).max_norm()});
    }
  }
  const double t = seconds_since(t0);
  out.detail << "analytic " << analytic << ", finite-difference " << fd << ", " << t << " s";
  out.expect(analytic <= 1e-12, "analytic <= 1e-12");
  out.expect(fd <= 1e-6, "finite-difference <= 1e-6");
  out.expect(t < 1.0, "runtime < 1 s");
}

void vacuum(Outcome& out) {
  const auto t0 = Clock::now();
  const MetricField S = schwarzschild_metric(1.0);
  CounterRng rng(102, 0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Vec x = vec({rng.uniform(-5, 5), rng.uniform(4, 20), rng.uniform(0.3, pi - 0.3), rng.uniform(0, 2 * pi)});
    worst = std::max(worst, max_abs(curvature(S, x).ricci));
  }
  // A radial infall, for the conservation check.
  geodesic("schwarzschild infall", S, vec({0, 10, pi / 2, 0}), vec({1.2, -0.3, 0, 0}), 5.0);
  const double t = seconds_since(t0);
  out.detail << "max |Ric| " << worst << ", " << t << " s";
  out.expect(worst <= 1e-5, "|Ric| <= 1e-5");
  out.expect(t < 5.0, "runtime < 5 s");
}

void conjugate(Outcome& out) {
  double worst = 0.0;
  int bad_multiplicity = 0;
  const double thetas[5] = {0.6, 1.0, pi / 2, 2.0, 2.5};
  const double alphas[5] = {0.7, 1.2, 0.3, 2.0, 2.6};
  for (double r : {1.0, 2.0}) {
    const MetricField S = sphere_metric(r);
    for (int i = 0; i < 5; ++i) {
      // Unit speed: r^2 (a^2 + sin^2(theta) b^2) = 1.
      const double th = thetas[i];
      const Vec v0 = v2(std::cos(alphas[i]) / r, std::sin(alphas[i]) / (r * std::sin(th)));
      const GeodesicPath p = geodesic("sphere r=" + std::to_string(r), S, v2(th, 0.3 * i), v0, r * pi + 0.5);
      const auto cps = conjugate_points(S, p);
      if (cps.empty()) {
        out.expect(false, "a conjugate point exists");
        continue;
      }
      worst = std::max(worst, std::abs(cps[0].t - r * pi) / r);
      if (cps[0].multiplicity != 1) ++bad_multiplicity;
    }
  }
  out.detail << "max |t* - r pi| / r " << worst << " over 10 geodesics";
  out.expect(worst <= 1e-6, "t* within 1e-6");
  out.expect(bad_multiplicity == 0, "multiplicity 1");
}

void conservation(Outcome& out) {
  double worst = 0.0;
  std::string where;
  for (const auto& tp : g_tracked) {
    const GeodesicPath& p = tp.path;
    double err = p.conservation_error;
    // Between nodes as well, through the dense output.
    for (int i = 0; i <= 200; ++i) {
      const double t = p.t_end * i / 200;
      const Vec x = p.x(t), v = p.v(t);
      err = std::max(err, std::abs(v.dot(tp.metric.g(x) * v) - p.speed));
    }
    const double rel = err / (1.0 + std::abs(p.speed));
    if (rel > worst) {
      worst = rel;
      where = tp.label;
    }
  }
  out.expect(worst <= 1e-8, "conservation <= 1e-8 (1 + |c|), worst on " + where);

  // Order: tilted great circle on S^2, fixed step halved twice.
  const MetricField S = sphere_metric();
  const Vec x0 = v2(pi / 2, 0), v0 = v2(-std::sqrt(0.5), std::sqrt(0.5));
  std::vector<double> errs;
  for (double h : {0.2, 0.1, 0.05}) {
    GeodesicOptions o;
    o.fixed_step = true;
    o.step = h;
    const GeodesicPath p = integrate_geodesic(S, x0, v0, 2 * pi, o);
    errs.push_back(S.domain().displacement(x0, p.x(2 * pi)).norm());
  }
  const double r1 = errs[0] / errs[1], r2 = errs[1] / errs[2];
  out.detail << g_tracked.size() << " geodesics, worst relative drift " << worst << "; closure error ratios " << r1
             << ", " << r2;
  out.expect(r1 >= 8.0 && r2 >= 8.0, "halving reduces closure error >= 8x");
}

void oracle_equivalence(Outcome& out) {
  struct Case {
    std::string name;
    MetricField g;
    Gec gec;
    GeodesicPath path;
    int expected;  // -1: compare with the monodromy instead
  };
  const MetricField E = euclidean_metric(2), S = sphere_metric(), F = football_metric();
  std::vector<Case> cases;
  cases.push_back({"euclidean fixed", E, Gec::fixed(v2(0, 0), v2(1, 2)), geodesic("euclidean", E, v2(0, 0), v2(1, 2), 1),
                   0});
  cases.push_back({"S2 antipodal", S, Gec::fixed(v2(pi / 2, 0), v2(pi / 2, pi)),
                   geodesic("sphere antipodal", S, v2(pi / 2, 0), v2(0, pi), 1), 1});
  cases.push_back({"S2 sub-antipodal", S, Gec::fixed(v2(pi / 2, 0), v2(pi / 2, 0.8 * pi)),
                   geodesic("sphere sub-antipodal", S, v2(pi / 2, 0), v2(0, 0.8 * pi), 1), 0});
  cases.push_back({"circle to point", E, Gec::product(Immersion::circle(v2(0, 0), 1), Immersion::point(v2(3, 0))),
                   geodesic("circle to point", E, v2(1, 0), v2(2, 0), 1), 0});
  cases.push_back({"football diagonal x1", F, Gec::diagonal(F.domain()),
                   geodesic("football equator", F, v2(0, 0), v2(2 * pi, 0), 1), -1});
  cases.push_back({"football diagonal x2", F, Gec::diagonal(F.domain()),
                   geodesic("football equator x2", F, v2(0, 0), v2(4 * pi, 0), 1), -1});
  for (const Case& c : cases) {
    const int shooting = pjacobi_shooting_checked(c.g, c.gec, c.path).dimension;
    int expected = c.expected;
    if (expected < 0) expected = monodromy(c.g, c.path).fixed_dim;
    out.detail << c.name << ": shooting " << shooting << " index";
    for (int n : {32, 64, 128}) {
      const int k = index_form(c.g, c.path, c.gec, n).kernel_dim;
      out.detail << " " << k;
      out.expect(k == shooting, c.name + " n=" + std::to_string(n) + " matches shooting");
    }
    out.expect(shooting == expected, c.name + " expected " + std::to_string(expected));
    out.detail << "; ";
  }
}

void strong_degeneracy(Outcome& out) {
  const MetricField F = football_metric();
  const GeodesicPath twice = geodesic("football equator x2", F, v2(0, 0), v2(4 * pi, 0), 1);
  const auto w = strongly_degenerate_check(F, twice, 2);
  out.expect(w.has_value(), "football double cover has a witness");
  if (w) {
    out.detail << "witness k " << w->k << ", sum residual " << w->sum_residual << "; ";
    out.expect(w->k == 2, "k = 2");
    out.expect(w->sum_residual <= 1e-6, "witness residual <= 1e-6 |J|");
  }

  const Scenario fb = football_double_equator_scenario();
  EffectiveField W = plain_field([J = fb.J](double t) { return J.J(t); }, 0.0, 0.5);
  W.omega = 0.5;
  double supJ = 0.0;
  for (int i = 0; i <= 400; ++i) supJ = std::max(supJ, fb.J.J(i / 400.0).norm());
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    CounterRng rng(106, trial);
    const PerturbationBump b = random_bump(fb.metric, fb.path, W, rng);
    worst = std::max(worst, std::abs(mixed_derivative(fb.metric, fb.path, fb.J, b)) / (b.sup_norm() * supJ));
  }
  out.detail << "max |mixed derivative| / (|h| |J|) " << worst << " over 20 bumps; ";
  out.expect(worst <= 1e-6, "mixed derivative <= 1e-6 |h| |J|");

  const MetricField T2 = flat_torus_metric(2);
  const bool torus = strongly_degenerate_check(T2, geodesic("torus x2", T2, v2(1, 1), v2(4 * pi, 0), 1), 2).has_value();
  out.detail << "flat torus witness " << (torus ? "found" : "none");
  out.expect(!torus, "flat torus double cover has no witness");
}

void perturbation(Outcome& out) {
  const auto t0 = Clock::now();
  const Scenario sc = sphere_antipodal_scenario();
  track("perturb scenario", sc.metric, sc.path);
  const EffectiveField W = iterate_sum_field(sc.J, sc.path, sc.periodicity);
  const PerturbInterval I = select_interval(sc.path, W, 0.1);
  const PerturbationBump bump = build_bump(sc.metric, sc.path, W, I, 0.1);

  double on_curve = 0.0, dev = 0.0;
  const double L = I.t1 - I.t0;
  for (int i = 0; i <= 200; ++i) {
    on_curve = std::max(on_curve, max_abs(bump.h(sc.path.x(I.t0 + L * i / 200))));
    const double t = I.t0 + L * (0.1 + 0.8 * i / 200);
    dev = std::max(dev, max_abs(Mat(bump.covariant_derivative(sc.metric, sc.path.x(t), W(t)) - bump.target(t))));
  }
  // Off the core too: h vanishes on every other part of the curve.
  for (int i = 0; i <= 400; ++i) on_curve = std::max(on_curve, max_abs(bump.h(sc.path.x(i / 400.0))));
  const double md = mixed_derivative(sc.metric, sc.path, sc.J, bump);
  const RecheckResult rr = apply_and_recheck(sc, bump, 1e-2);
  MonteCarloOptions mo;
  mo.threads = resolve_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));
  const GenericityTrial tr = genericity_montecarlo(sc, 100, 1e-2, 107, mo);
  const double t = seconds_since(t0);
  out.detail << "h on curve " << on_curve << ", nabla_W h - K " << dev << ", mixed derivative " << md << ", recheck "
             << trial_outcome_name(rr.outcome) << " gap " << rr.kernel_gap << ", MC fraction "
             << tr.nondegenerate_fraction << " (" << mo.threads << " threads), " << t << " s";
  out.expect(on_curve <= 1e-8, "h on curve <= 1e-8");
  out.expect(dev <= 1e-4, "nabla_W h - K <= 1e-4");
  out.expect(md > 0.0, "mixed derivative > 0");
  out.expect(rr.outcome == TrialOutcome::Nondegenerate && rr.kernel_gap > 0.0, "recheck nondegenerate");
  out.expect(tr.nondegenerate_fraction >= 0.95, "MC fraction >= 0.95");
  out.expect(t < 60.0, "runtime < 60 s");
}

void admissibility(Outcome& out) {
  const MetricField E = euclidean_metric(2);
  const MetricField T2 = flat_torus_metric(2);
  const auto fixed = check_admissibility(Gec::fixed(v2(0, 0), v2(3, 4)), E);
  const auto diag = check_admissibility(Gec::diagonal(T2.domain()), T2);
  const auto circles =
      check_admissibility(Gec::product(Immersion::circle(v2(0, 0), 1), Immersion::circle(v2(1.5, 0), 1)), E);
  // Graph of a map tangent to the identity at the origin.
  Immersion graph(2, 4, [](const Vec& u) {
    Vec x(4);
    x << u[0], u[1], u[0] + u[0] * u[0], u[1] + u[1] * u[1];
    return x;
  }, ChartDomain({-0.5, -0.5}, {0.5, 0.5}));
  const auto tangent = check_admissibility(Gec::parametrized(graph), E);
  out.detail << "fixed " << verdict_name(fixed.verdict) << ", diagonal " << verdict_name(diag.verdict)
             << ", circle pair " << verdict_name(circles.verdict) << ", diagonal-tangent "
             << verdict_name(tangent.verdict) << " (" << tangent.rule << ")";
  out.expect(fixed.verdict == Verdict::admissible, "fixed admissible");
  out.expect(diag.verdict == Verdict::not_admissible, "diagonal not admissible");
  out.expect(circles.verdict == Verdict::admissible, "circle pair admissible");
  out.expect(tangent.verdict == Verdict::not_admissible &&
                 tangent.rule.find("DegenerateRestriction") != std::string::npos,
             "diagonal-tangent not admissible via DegenerateRestriction");
}

void obstruction(Outcome& out) {
  const auto t0 = Clock::now();
  struct Row {
    ManifoldDescriptor d;
    int nu;
    Existence expected;
  };
  std::vector<Row> rows = {{ManifoldDescriptor::sphere(2), 1, Existence::No},
                           {ManifoldDescriptor::surface("torus"), 1, Existence::Yes},
                           {ManifoldDescriptor::surface("klein_bottle"), 1, Existence::Yes},
                           {ManifoldDescriptor::generic(false, true, 4, std::nullopt), 1, Existence::Yes}};
  for (int nu = 0; nu <= 3; ++nu) rows.push_back({ManifoldDescriptor::sphere(3), nu, Existence::Yes});
  for (int nu = 1; nu <= 3; ++nu) rows.push_back({ManifoldDescriptor::sphere(4), nu, Existence::No});
  for (int nu = 0; nu <= 7; ++nu) rows.push_back({ManifoldDescriptor::sphere(7), nu, Existence::Yes});
  int wrong = 0;
  for (const Row& r : rows) {
    const ObstructionVerdict v = metric_exists(r.d, r.nu);
    if (v.exists != r.expected) {
      ++wrong;
      out.expect(false, r.d.name() + " nu=" + std::to_string(r.nu));
    }
  }
  const double t = seconds_since(t0);
  out.detail << rows.size() - wrong << "/" << rows.size() << " verdicts match, " << t << " s";
  out.expect(t < 0.1, "runtime < 0.1 s");
}

void iterate_law(Outcome& out) {
  const auto gR = AuxiliaryRiemannian::euclidean(2);
  const MetricField F = football_metric(), S = sphere_metric();
  const std::vector<std::pair<std::string, GeodesicPath>> loops = {
      {"football equator", geodesic("football equator", F, v2(0, 0), v2(2 * pi, 0), 1)},
      {"tilted great circle", geodesic("tilted great circle", S, v2(pi / 2, 0),
                                       v2(-std::sqrt(0.5), std::sqrt(0.5)) * (2 * pi), 1)}};
  double worst = 0.0;
  for (const auto& [name, loop] : loops) {
    const PeriodicityVerdict pv = detect_periodicity(loop);
    out.expect(pv.periodic && pv.k == 1, name + " closes once");
    const double e1 = energies(loop, gR, pv).total;
    for (int n : {2, 3}) {
      const GeodesicPath it = track(name + " iterate", loop.metric, iterate(loop, n));
      const double en = energies(it, gR, detect_periodicity(it)).total;
      worst = std::max(worst, std::abs(en / (n * n * e1) - 1.0));
    }
  }
  out.detail << "max |E(n-fold) / (n^2 E) - 1| " << worst;
  out.expect(worst <= 1e-8, "n^2 law within 1e-8");
}

void census(Outcome& out) {
  const MetricField F = football_metric();
  const ChartDomain band({0.0, -0.5}, {2 * pi, 0.5}, "band", {2 * pi, 0.0});
  const double a = 2 * pi * pi + 1, b_single = a, b_double = 8 * pi * pi + 1;

  auto same = [](const CensusResult& x, const CensusResult& y) {
    if (x.orbits.size() != y.orbits.size() || x.seeds != y.seeds || x.converged != y.converged) return false;
    for (size_t i = 0; i < x.orbits.size(); ++i) {
      const auto &p = x.orbits[i], &q = y.orbits[i];
      if (p.path.x0 != q.path.x0 || p.path.v0 != q.path.v0 || p.omega != q.omega || p.report.kind != q.report.kind ||
          p.energy.total != q.energy.total)
        return false;
    }
    return true;
  };

  for (double b : {b_single, b_double}) {
    // Desk-scale seed grid: 2 x 2 positions, 4 directions, 4 trial periods.
    CensusOptions o1;
    o1.positions_per_axis = 2;
    o1.directions = 4;
    CensusOptions o8 = o1;
    o1.threads = 1;
    o8.threads = 8;
    const CensusResult c1 = periodic_census(F, band, a, b, o1);
    const CensusResult c8 = periodic_census(F, band, a, b, o8);
    for (const auto& orbit : c1.orbits) track("census orbit", F, orbit.path);
    const bool doubled = b == b_double;
    out.detail << "b=" << b << ": " << c1.geometric_orbits << " geometric orbit(s), listed";
    for (const auto& orbit : c1.orbits) out.detail << " k" << orbit.energy.k << ":" << degeneracy_name(orbit.report.kind);
    out.detail << "; ";
    out.expect(c1.geometric_orbits == 1, "exactly one geometric orbit");
    out.expect(same(c1, c8), "1 and 8 threads agree");
    const size_t want = doubled ? 2 : 1;
    out.expect(c1.orbits.size() == want, "listing has " + std::to_string(want) + " entries");
    if (c1.orbits.size() != want) continue;
    out.expect(c1.orbits[0].energy.k == 1 && c1.orbits[0].report.kind == DegeneracyKind::S1Nondegenerate,
               "one period is S1-nondegenerate");
    out.expect(std::abs(c1.orbits[0].path.x0[1]) < 1e-7, "orbit is the equator");
    if (doubled) {
      const CensusOrbit& d = c1.orbits[1];
      out.expect(d.energy.k == 2 && d.geometric_id == c1.orbits[0].geometric_id, "double cover listed");
      // Strongly degenerate refines S1-degenerate: kernel beyond the tangent direction.
      out.expect(d.report.kind == DegeneracyKind::StronglyDegenerate && d.report.kernel_dim > 1,
                 "double cover S1-degenerate and strongly degenerate");
    }
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
  };
  // Conservation runs last: it audits the geodesics integrated by the others.
  const std::vector<Criterion> criteria = {
      {1, "flatness", flatness},
      {2, "vacuum", vacuum},
      {3, "conjugate point", conjugate},
      {5, "degeneracy oracle equivalence", oracle_equivalence},
      {6, "strong degeneracy", strong_degeneracy},
      {7, "perturbation efficacy", perturbation},
      {8, "admissibility verdicts", admissibility},
      {9, "obstruction table", obstruction},
      {10, "energy iterate law", iterate_law},
      {11, "census", census},
      {4, "conservation and order", conservation},
  };
  std::map<int, std::string> lines;
  bool all = true;
  for (const Criterion& c : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << " (" << seconds_since(t0) << " s): "
         << o.detail.str();
    lines[c.id] = line.str();
    all = all && o.pass;
  }
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::fflush(stdout);
  return all ? 0 : 1;
}
