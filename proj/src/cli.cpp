#include "geovar/cli.hpp"

#include "geovar/config.hpp"
#include "geovar/degeneracy.hpp"
#include "geovar/index_form.hpp"
#include "geovar/obstruction.hpp"
#include "geovar/parallel.hpp"
#include "geovar/perturb.hpp"
#include "geovar/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace geovar {

namespace {

std::string out_path(const GlobalOptions& o, const std::string& name) {
  return (std::filesystem::path(o.out) / name).string();
}

void write_report(const GlobalOptions& o, const std::string& name, const Json& j, std::ostream& log) {
  write_file_atomic(out_path(o, name), dump_json(j));
  log << "wrote " << out_path(o, name) << "\n";
}

void write_csv(const GlobalOptions& o, const std::string& name, const CsvWriter& csv, std::ostream& log) {
  write_file_atomic(out_path(o, name), csv.text());
  log << "wrote " << out_path(o, name) << "\n";
}

// Checks the keys shared by every config plus the command's own.
ConfigReader command_reader(const Json& config, const char* command, std::initializer_list<const char*> required,
                            std::initializer_list<const char*> optional) {
  ConfigReader r(config, "config");
  std::vector<const char*> opt = {"schema_version", "command", "tol", "seed", "threads"};
  opt.insert(opt.end(), optional.begin(), optional.end());
  // keys() takes initializer lists; check by hand to merge the two sets.
  for (const char* k : required)
    if (!r.has(k)) r.fail(std::string("missing key '") + k + "'");
  for (auto it = config.begin(); it != config.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : opt) known = known || it.key() == k;
    if (!known) r.fail("unknown key '" + it.key() + "'");
  }
  if (r.has("command") && r.string("command") != command)
    r.fail("config is for '" + r.string("command") + "', not '" + command + "'");
  return r;
}

double option_tol(const ConfigReader& r, const GlobalOptions& o, double fallback) {
  const double t = o.tol ? *o.tol : r.number("tol", fallback);
  if (!(t > 0.0)) r.fail("tol must be positive");
  return t;
}

int option_threads(const ConfigReader& r, const GlobalOptions& o) {
  return resolve_threads(o.threads ? *o.threads : r.integer("threads", 1));
}

std::uint64_t option_seed(const ConfigReader& r, const GlobalOptions& o) {
  if (o.seed) return *o.seed;
  if (!r.has("seed")) return 1;
  const Json& s = r.raw("seed");
  if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long>() >= 0))
    r.fail("'seed' must be a non-negative integer");
  return s.get<std::uint64_t>();
}

Json metric_json(const MetricField& g) {
  return Json{{"name", g.name()}, {"dim", g.dim()}, {"index", g.index()}};
}

Json path_json(const GeodesicPath& p) {
  return Json{{"x0", to_json(p.x0)},
              {"v0", to_json(p.v0)},
              {"T", p.T},
              {"t_end", p.t_end},
              {"status", ode_status_name(p.status)},
              {"speed", p.speed},
              {"conservation_error", p.conservation_error}};
}

Json periodicity_json(const PeriodicityVerdict& pv) {
  Json j{{"periodic", pv.periodic}};
  if (pv.periodic) {
    j["omega"] = pv.omega;
    j["k"] = pv.k;
    j["residual"] = pv.residual;
  }
  return j;
}

Json degeneracy_json(const DegeneracyReport& r) {
  Json j{{"kind", degeneracy_name(r.kind)},
         {"kernel_dim", r.kernel_dim},
         {"index_kernel_dim", r.index_kernel_dim},
         {"k", r.k},
         {"omega", r.omega},
         {"rel_threshold", r.rel_threshold},
         {"index_threshold", r.index_threshold},
         {"gap_factor", r.gap_factor},
         {"boundary_residual", r.residual}};
  Json basis = Json::array();
  for (const auto& J : r.kernel_basis) basis.push_back(Json{{"J0", to_json(J.J0)}, {"DJ0", to_json(J.DJ0)}});
  j["kernel_basis"] = basis;
  if (r.witness) {
    j["strong_witness"] = Json{{"k", r.witness->k},
                               {"J0", to_json(r.witness->field.J0)},
                               {"DJ0", to_json(r.witness->field.DJ0)},
                               {"sum_residual", r.witness->sum_residual},
                               {"periodic_residual", r.witness->periodic_residual}};
  }
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

Json admissibility_json(const AdmissibilityReport& a) {
  Json pts = Json::array();
  for (const auto& u : a.diagonal_points) pts.push_back(to_json(u));
  return Json{{"verdict", verdict_name(a.verdict)},
              {"rule", a.rule},
              {"compact", a.compact},
              {"nondegenerate_restriction", a.nondegenerate_restriction},
              {"worst_condition", a.worst_condition},
              {"transversal_to_diagonal", a.transversal_to_diagonal},
              {"worst_transversality_margin", a.worst_transversality_margin},
              {"diagonal_points", pts},
              {"length_lower_bound", a.length_lower_bound},
              {"length_bound_estimated", a.length_bound_estimated}};
}

std::vector<std::string> state_header(int m) {
  std::vector<std::string> h = {"t"};
  for (int i = 1; i <= m; ++i) h.push_back("x" + std::to_string(i));
  for (int i = 1; i <= m; ++i) h.push_back("v" + std::to_string(i));
  return h;
}

std::vector<double> state_row(const MetricField& g, const GeodesicPath& p, double t, bool with_speed) {
  const Vec x = p.x(t), v = p.v(t);
  std::vector<double> row = {t};
  for (int i = 0; i < x.size(); ++i) row.push_back(x[i]);
  for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
  if (with_speed) row.push_back(v.dot(g.g(x) * v));
  return row;
}

GeodesicOptions geodesic_options(const ConfigReader& r, double tol) {
  GeodesicOptions go;
  go.tol = tol;
  go.fixed_step = r.boolean("fixed_step", false);
  go.step = r.number("step", go.step);
  if (!(go.step > 0.0)) r.fail("step must be positive");
  return go;
}

GeodesicPath path_from(const ConfigReader& r, const MetricField& g, const GeodesicOptions& go) {
  const int m = g.dim();
  const Vec x0 = r.vec("x0", m), v0 = r.vec("v0", m);
  const double T = r.number("T", 1.0);
  if (!(T > 0.0)) r.fail("T must be positive");
  if (!g.domain().contains(x0)) r.fail("x0 lies outside the chart");
  return integrate_geodesic(g, x0, v0, T, go);
}

Json interval_json(const PerturbInterval& I) {
  return Json{{"t0", I.t0},         {"t1", I.t1},           {"margin", I.margin},
              {"collar", I.collar}, {"clearance", I.clearance}, {"periodic_range", I.periodic}};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (const auto* ge = dynamic_cast<const Error*>(&e)) {
    switch (ge->code()) {
      case ErrorCode::ParseError:
      case ErrorCode::ConfigError:
      case ErrorCode::InvalidArgument: return kExitConfig;
      default: return kExitNumerical;
    }
  }
  return kExitNumerical;
}

// ---------------------------------------------------------------------------

int cmd_geodesic(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r = command_reader(config, "geodesic", {"metric", "x0", "v0"}, {"T", "samples", "fixed_step", "step"});
  const MetricField g = parse_metric(r.child("metric"));
  const GeodesicPath p = path_from(r, g, geodesic_options(r, option_tol(r, o, 1e-11)));
  const int samples = r.integer("samples", 201);
  if (samples < 2) r.fail("samples must be at least 2");

  std::vector<std::string> header = state_header(g.dim());
  header.push_back("speed");
  CsvWriter csv(header);
  for (int i = 0; i < samples; ++i) csv.row(state_row(g, p, p.t_end * i / (samples - 1), true));

  const auto gR = AuxiliaryRiemannian::euclidean(g.dim());
  const LengthEnergy le = riem_length_energy(p, gR);
  Json j{{"command", "geodesic"}, {"metric", metric_json(g)}, {"path", path_json(p)}};
  j["causal_character"] = causal_name(causal_character(g, p.x0, p.v0));
  j["end"] = Json{{"x", to_json(p.x(p.t_end))}, {"v", to_json(p.v(p.t_end))}};
  j["riemannian_length"] = le.L_R;
  j["riemannian_energy"] = le.E_R;
  j["periodicity"] = periodicity_json(detect_periodicity(p));
  write_csv(o, "trajectory.csv", csv, log);
  write_report(o, "geodesic.json", j, log);
  return kExitOk;
}

int cmd_conjugate(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r =
      command_reader(config, "conjugate", {"metric", "x0", "v0"}, {"T", "rel_threshold", "n_basis", "fixed_step", "step"});
  const MetricField g = parse_metric(r.child("metric"));
  const GeodesicPath p = path_from(r, g, geodesic_options(r, option_tol(r, o, 1e-11)));
  const double rel = r.number("rel_threshold", 1e-6);
  const std::vector<ConjugatePoint> cps = conjugate_points(g, p, rel);
  Json list = Json::array();
  for (const auto& c : cps)
    list.push_back(Json{{"t", c.t}, {"multiplicity", c.multiplicity}, {"smallest_singular_value", c.smallest_singular_value}});
  Json j{{"command", "conjugate"}, {"metric", metric_json(g)}, {"path", path_json(p)}, {"conjugate_points", list}};

  // Second variation with both endpoints fixed, over the whole path.
  const int n_basis = r.integer("n_basis", 32);
  if (n_basis > 0) {
    try {
      const IndexFormOperator op = index_form(g, p, Gec::fixed(p.x0, p.x(p.t_end)), n_basis);
      Json head = Json::array();
      for (Eigen::Index i = 0; i < std::min<Eigen::Index>(10, op.eigenvalues.size()); ++i)
        head.push_back(op.eigenvalues[i]);
      j["index_form"] = Json{{"n_basis", n_basis},          {"spectrum_head", head},
                             {"kernel_dim", op.kernel_dim}, {"morse_index", op.morse_index},
                             {"threshold", op.threshold},   {"gap_factor", op.gap_factor}};
    } catch (const Error& e) {
      j["index_form"] = Json{{"n_basis", n_basis}, {"error", e.what()}};
    }
  }
  write_report(o, "conjugate.json", j, log);
  return kExitOk;
}

int cmd_bvp(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r = command_reader(config, "bvp", {"metric", "gec"},
                                       {"guesses", "multistart", "max_iter", "admissibility", "classify", "n_basis",
                                        "samples", "require_nondegenerate"});
  const MetricField g = parse_metric(r.child("metric"));
  const Gec gec = parse_gec(r.child("gec"), g);
  const int threads = option_threads(r, o);

  AdmissibilitySampling as;
  as.threads = threads;
  if (r.has("admissibility")) {
    const ConfigReader a = r.child("admissibility");
    a.keys({}, {"per_axis", "max_samples", "transversality_tol"});
    as.per_axis = a.integer("per_axis", as.per_axis);
    as.max_samples = a.integer("max_samples", as.max_samples);
    as.transversality_tol = a.number("transversality_tol", as.transversality_tol);
  }
  Json j{{"command", "bvp"}, {"metric", metric_json(g)}, {"gec", Json{{"kind", gec_kind_name(gec.kind)}, {"dim", gec.dim()}}}};
  const AdmissibilityReport adm = check_admissibility(gec, g, as);
  j["admissibility"] = admissibility_json(adm);
  if (o.require_admissible && adm.verdict == Verdict::not_admissible) {
    j["solutions"] = Json::array();
    j["skipped"] = "not admissible and --require-admissible is set";
    write_report(o, "bvp.json", j, log);
    return kExitNotAdmissible;
  }

  BvpOptions bo;
  bo.tol = option_tol(r, o, bo.tol);
  bo.max_iter = r.integer("max_iter", bo.max_iter);
  bo.require_nondegenerate = r.boolean("require_nondegenerate", bo.require_nondegenerate);
  std::vector<BvpGuess> guesses;
  if (r.has("guesses")) {
    const Json& gs = r.raw("guesses");
    if (!gs.is_array()) r.fail("'guesses' must be an array");
    for (size_t i = 0; i < gs.size(); ++i) {
      const ConfigReader e(gs[i], r.where() + ".guesses[" + std::to_string(i) + "]");
      e.keys({"u", "v0"}, {});
      guesses.push_back({e.vec("u", gec.dim()), e.vec("v0", g.dim())});
    }
  }
  if (r.has("multistart")) {
    const ConfigReader ms = r.child("multistart");
    ms.keys({"per_axis"}, {});
    const auto grid = grid_guesses(gec, g.domain(), ms.integer("per_axis"));
    guesses.insert(guesses.end(), grid.begin(), grid.end());
  }
  if (guesses.empty()) r.fail("give 'guesses' or 'multistart'");
  const std::vector<BvpSolution> sols = multistart_gp_geodesic(g, gec, guesses, bo, threads);

  ClassifyOptions co;
  co.n_basis = r.integer("n_basis", co.n_basis);
  const bool do_classify = r.boolean("classify", true);
  const int samples = r.integer("samples", 101);
  if (samples < 2) r.fail("samples must be at least 2");
  std::vector<std::string> header = state_header(g.dim());
  header.insert(header.begin(), "solution");
  CsvWriter csv(header);
  Json list = Json::array();
  for (size_t s = 0; s < sols.size(); ++s) {
    const BvpSolution& b = sols[s];
    Json e{{"u", to_json(b.u)},
           {"v0", to_json(b.v0)},
           {"endpoint_residual", b.endpoint_residual},
           {"orthogonality_residual", b.orthogonality_residual},
           {"jacobian_condition", b.jacobian_condition},
           {"iterations", b.iterations},
           {"path", path_json(b.path)}};
    if (do_classify) {
      try {
        e["degeneracy"] = degeneracy_json(classify(g, b.path, gec, co));
      } catch (const Error& err) {
        e["degeneracy"] = Json{{"error", err.what()}};
      }
    }
    list.push_back(e);
    for (int i = 0; i < samples; ++i) {
      std::vector<double> row = state_row(g, b.path, b.path.t_end * i / (samples - 1), false);
      row.insert(row.begin(), static_cast<double>(s));
      csv.row(row);
    }
  }
  j["guesses"] = static_cast<int>(guesses.size());
  j["solutions"] = list;
  write_csv(o, "solutions.csv", csv, log);
  write_report(o, "bvp.json", j, log);
  return kExitOk;
}

int cmd_classify(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r = command_reader(config, "classify", {"metric", "gec", "x0", "v0"},
                                       {"T", "n_basis", "rel_threshold", "crosscheck", "critical_tol", "fixed_step", "step"});
  const MetricField g = parse_metric(r.child("metric"));
  const Gec gec = parse_gec(r.child("gec"), g);
  const GeodesicPath p = path_from(r, g, geodesic_options(r, option_tol(r, o, 1e-12)));
  ClassifyOptions co;
  co.n_basis = r.integer("n_basis", co.n_basis);
  co.rel_threshold = r.number("rel_threshold", co.rel_threshold);
  co.crosscheck = r.boolean("crosscheck", co.crosscheck);
  co.critical_tol = r.number("critical_tol", co.critical_tol);
  const DegeneracyReport rep = classify(g, p, gec, co);
  Json j{{"command", "classify"},
         {"metric", metric_json(g)},
         {"gec", Json{{"kind", gec_kind_name(gec.kind)}, {"dim", gec.dim()}}},
         {"path", path_json(p)},
         {"degeneracy", degeneracy_json(rep)}};
  write_report(o, "classify.json", j, log);
  return kExitOk;
}

int cmd_census(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r = command_reader(config, "census", {"metric", "K", "a", "b"}, {"options"});
  const MetricField g = parse_metric(r.child("metric"));
  const ChartDomain K = parse_domain(r.child("K"), g.dim());
  const double a = r.number("a"), b = r.number("b");
  if (!(a > 0.0) || !(b > 0.0)) r.fail("a and b must be positive");
  CensusOptions co;
  co.tol = option_tol(r, o, co.tol);
  co.threads = option_threads(r, o);
  if (r.has("options")) {
    const ConfigReader q = r.child("options");
    q.keys({}, {"positions_per_axis", "directions", "periods", "max_iter", "closure_tol"});
    co.positions_per_axis = q.integer("positions_per_axis", co.positions_per_axis);
    co.directions = q.integer("directions", co.directions);
    co.periods = q.integer("periods", co.periods);
    co.max_iter = q.integer("max_iter", co.max_iter);
    co.closure_tol = q.number("closure_tol", co.closure_tol);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const CensusResult c = periodic_census(g, K, a, b, co);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Json orbits = Json::array();
  CsvWriter csv({"orbit", "geometric_id", "k", "omega", "closing_time", "total_energy", "minimal_energy", "kind"});
  for (size_t i = 0; i < c.orbits.size(); ++i) {
    const CensusOrbit& ob = c.orbits[i];
    orbits.push_back(Json{{"geometric_id", ob.geometric_id},
                          {"x0", to_json(ob.path.x0)},
                          {"v0", to_json(ob.path.v0)},
                          {"omega", ob.omega},
                          {"closing_time", ob.path.T},
                          {"k", ob.energy.k},
                          {"total_energy", ob.energy.total},
                          {"minimal_energy", ob.energy.minimal},
                          {"degeneracy", degeneracy_json(ob.report)}});
    csv.row({std::to_string(i), std::to_string(ob.geometric_id), std::to_string(ob.energy.k), format_double(ob.omega),
             format_double(ob.path.T), format_double(ob.energy.total), format_double(ob.energy.minimal),
             degeneracy_name(ob.report.kind)});
  }
  Json kj{{"lower", c.K.lower}, {"upper", c.K.upper}, {"periods", c.K.period}};
  Json j{{"command", "census"},
         {"metric", metric_json(g)},
         {"K", kj},
         {"a", a},
         {"b", b},
         {"options", Json{{"positions_per_axis", co.positions_per_axis},
                          {"directions", co.directions},
                          {"periods", co.periods},
                          {"max_iter", co.max_iter},
                          {"tol", co.tol}}},
         {"seeds", c.seeds},
         {"converged", c.converged},
         {"geometric_orbits", c.geometric_orbits},
         {"orbits", orbits},
         {"member", c.member}};
  if (!c.note.empty()) j["note"] = c.note;
  write_csv(o, "orbits.csv", csv, log);
  write_report(o, "census.json", j, log);
  // Timing stays out of the report so reruns are byte-identical.
  log << "census wall-clock " << wall << " s\n";
  return kExitOk;
}

int cmd_perturb(const Json& config, const GlobalOptions& o, std::ostream& log) {
  const ConfigReader r = command_reader(config, "perturb", {"scenario"},
                                       {"rho", "length_fraction", "epsilons", "montecarlo", "bump_csv",
                                        "signature_samples", "max_halvings"});
  Scenario sc;
  const Json& sj = r.raw("scenario");
  if (sj.is_string()) {
    const std::string name = sj.get<std::string>();
    if (name == "sphere_antipodal") sc = sphere_antipodal_scenario();
    else if (name == "football_double_equator") sc = football_double_equator_scenario();
    else r.fail("unknown scenario '" + name + "'");
  } else {
    const ConfigReader s = r.child("scenario");
    s.keys({"metric", "gec", "x0", "v0"}, {"T", "J0", "DJ0", "name"});
    const MetricField g = parse_metric(s.child("metric"));
    const Gec gec = parse_gec(s.child("gec"), g);
    const GeodesicPath p = path_from(s, g, GeodesicOptions{1e-12});
    const std::string name = s.string("name", "custom");
    if (s.has("J0") != s.has("DJ0")) s.fail("give both J0 and DJ0, or neither");
    if (s.has("J0"))
      sc = make_scenario(name, g, gec, p, propagate_jacobi(g, p, s.vec("J0", g.dim()), s.vec("DJ0", g.dim())));
    else
      sc = scenario_from_solution(name, g, gec, p);
  }
  const double rho = r.number("rho", 0.1);
  if (!(rho > 0.0)) r.fail("rho must be positive");
  const double frac = r.number("length_fraction", 0.2);
  RecheckOptions ro;
  ro.seed = option_seed(r, o);
  ro.signature_samples = r.integer("signature_samples", ro.signature_samples);
  ro.max_halvings = r.integer("max_halvings", ro.max_halvings);
  ro.bvp.tol = option_tol(r, o, ro.bvp.tol);

  Json j{{"command", "perturb"}, {"scenario", sc.name}, {"metric", metric_json(sc.metric)}, {"path", path_json(sc.path)}};
  EffectiveField W;
  bool strong = false;
  try {
    W = iterate_sum_field(sc.J, sc.path, sc.periodicity);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StronglyDegenerateSuspected) throw;
    strong = true;
    const double w1 = sc.periodicity.periodic ? sc.periodicity.omega : sc.path.t_end;
    W = plain_field([J = sc.J](double t) { return J.J(t); }, 0.0, w1);
    W.omega = sc.periodicity.periodic ? sc.periodicity.omega : 0.0;
  }
  j["effective_field"] = Json{{"terms", W.terms},  {"window", W.window},          {"t0", W.t0},
                              {"t1", W.t1},        {"omega", W.omega},            {"sup_norm", W.sup_norm},
                              {"strongly_degenerate_suspected", strong}};
  const PerturbInterval I = select_interval(sc.path, W, rho, frac);
  const PerturbationBump bump = build_bump(sc.metric, sc.path, W, I, rho);
  j["interval"] = interval_json(I);
  j["rho"] = rho;
  j["bump_sup_norm"] = bump.sup_norm();

  // The two defining identities, sampled along I.
  double on_curve = 0.0, dev = 0.0;
  const double L = I.t1 - I.t0;
  for (int i = 0; i <= 100; ++i) {
    on_curve = std::max(on_curve, max_abs(bump.h(sc.path.x(I.t0 + L * i / 100))));
    const double ti = I.t0 + L * (0.1 + 0.8 * i / 100);
    dev = std::max(dev, max_abs(Mat(bump.covariant_derivative(sc.metric, sc.path.x(ti), W(ti)) - bump.target(ti))));
  }
  j["identities"] = Json{{"h_on_curve", on_curve}, {"covariant_derivative_deviation", dev}};
  j["mixed_derivative"] = mixed_derivative(sc.metric, sc.path, sc.J, bump);

  std::vector<double> eps = {1e-2, -1e-2, 0.0};
  if (r.has("epsilons")) eps = r.numbers("epsilons");
  Json sweep = Json::array();
  for (double e : eps) {
    Json row{{"epsilon", e}};
    try {
      const RecheckResult rr = apply_and_recheck(sc, bump, e, ro);
      row["epsilon_used"] = rr.epsilon_used;
      row["halvings"] = rr.halvings;
      row["scale"] = rr.scale;
      row["outcome"] = trial_outcome_name(rr.outcome);
      row["kernel_gap"] = rr.kernel_gap;
      row["degeneracy"] = degeneracy_name(rr.report.kind);
      row["kernel_dim"] = rr.report.kernel_dim;
      if (!rr.note.empty()) row["note"] = rr.note;
    } catch (const Error& err) {
      row["outcome"] = trial_outcome_name(TrialOutcome::SolverFailed);
      row["error"] = err.what();
    }
    sweep.push_back(row);
  }
  j["recheck"] = sweep;

  if (r.has("montecarlo")) {
    const ConfigReader mc = r.child("montecarlo");
    mc.keys({"n_trials"}, {"epsilon", "rho", "min_length", "max_length"});
    MonteCarloOptions mo;
    mo.rho = mc.number("rho", rho);
    mo.min_length = mc.number("min_length", mo.min_length);
    mo.max_length = mc.number("max_length", mo.max_length);
    mo.threads = option_threads(r, o);
    mo.recheck = ro;
    const int n = mc.integer("n_trials");
    if (n < 1) mc.fail("n_trials must be positive");
    const double e = mc.number("epsilon", 1e-2);
    const GenericityTrial tr = genericity_montecarlo(sc, n, e, ro.seed, mo);
    Json trials = Json::array();
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < n; ++i) {
      counts[static_cast<int>(tr.outcomes[i])]++;
      trials.push_back(Json{{"trial", i},
                            {"outcome", trial_outcome_name(tr.outcomes[i])},
                            {"kernel_gap", tr.kernel_gaps[i]},
                            {"mixed_derivative", tr.mixed_derivatives[i]}});
    }
    j["montecarlo"] = Json{{"n_trials", n},
                           {"epsilon", e},
                           {"seed", tr.seed},
                           {"nondegenerate_fraction", tr.nondegenerate_fraction},
                           {"nondegenerate", counts[0]},
                           {"degenerate", counts[1]},
                           {"solver_failed", counts[2]},
                           {"trials", trials}};
  }

  if (r.has("bump_csv")) {
    const ConfigReader bc = r.child("bump_csv");
    bc.keys({}, {"samples"});
    const int n = bc.integer("samples", 41);
    if (n < 2) bc.fail("samples must be at least 2");
    const int m = sc.metric.dim();
    // Tidy grid over the box spanned by the tube.
    Vec lo = Vec::Constant(m, std::numeric_limits<double>::infinity()), hi = -lo;
    for (int i = 0; i <= 200; ++i) {
      const Vec x = sc.path.x(I.t0 + L * i / 200);
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    lo.array() -= 1.5 * rho;
    hi.array() += 1.5 * rho;
    std::vector<std::string> header;
    for (int a = 1; a <= m; ++a) header.push_back("x" + std::to_string(a));
    header.insert(header.end(), {"i", "j", "h"});
    CsvWriter csv(header);
    if (m == 2) {
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          Vec x(2);
          x << lo[0] + (hi[0] - lo[0]) * p / (n - 1), lo[1] + (hi[1] - lo[1]) * q / (n - 1);
          const Mat h = bump.h(x);
          for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b)
              csv.row({format_double(x[0]), format_double(x[1]), std::to_string(a), std::to_string(b),
                       format_double(h(a, b))});
        }
    } else {
      // Higher dimensions: samples along the core and its offsets in W.
      for (int p = 0; p < n; ++p) {
        const double t = I.t0 + L * p / (n - 1);
        const Vec dir = W(t).normalized();
        for (int q = 0; q < n; ++q) {
          const Vec x = sc.path.x(t) + (-1.5 * rho + 3.0 * rho * q / (n - 1)) * dir;
          const Mat h = bump.h(x);
          for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) {
              std::vector<std::string> row;
              for (int c = 0; c < m; ++c) row.push_back(format_double(x[c]));
              row.insert(row.end(), {std::to_string(a), std::to_string(b), format_double(h(a, b))});
              csv.row(row);
            }
        }
      }
    }
    write_csv(o, "bump.csv", csv, log);
  }
  write_report(o, "perturb.json", j, log);
  return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

ManifoldDescriptor parse_generic(const std::string& text) {
  std::optional<bool> compact, orientable;
  std::optional<int> dim;
  std::optional<long> chi;
  auto as_bool = [](const std::string& k, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::ConfigError, "--generic: " + k + " must be true or false");
  };
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    const std::string k = item.substr(0, eq);
    const std::string v = eq == std::string::npos ? "true" : item.substr(eq + 1);
    try {
      if (k == "compact") compact = as_bool(k, v);
      else if (k == "noncompact") compact = !as_bool(k, v);
      else if (k == "orientable") orientable = as_bool(k, v);
      else if (k == "nonorientable") orientable = !as_bool(k, v);
      else if (k == "dim") dim = std::stoi(v);
      else if (k == "chi") chi = std::stol(v);
      else throw Error(ErrorCode::ConfigError, "--generic: unknown field '" + k + "'");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ConfigError, "--generic: bad value for '" + k + "'");
    }
  }
  if (!compact || !orientable || !dim)
    throw Error(ErrorCode::ConfigError, "--generic needs compact, orientable and dim (chi optional)");
  return ManifoldDescriptor::generic(*compact, *orientable, *dim, chi);
}

}  // namespace

Json obstruct_report(const ObstructArgs& a) {
  const int given = a.sphere.has_value() + a.surface.has_value() + a.generic.has_value();
  if (given != 1) throw Error(ErrorCode::ConfigError, "give exactly one of --sphere, --surface, --generic");
  ManifoldDescriptor d;
  if (a.sphere) d = ManifoldDescriptor::sphere(*a.sphere);
  else if (a.surface) d = ManifoldDescriptor::surface(*a.surface);
  else d = parse_generic(*a.generic);
  const ObstructionVerdict v = metric_exists(d, a.index);
  Json j{{"command", "obstruct"}, {"manifold", d.name()}, {"dim", d.dim}, {"index", v.index}};
  j["compact"] = d.compact;
  j["orientable"] = d.orientable;
  j["euler_characteristic"] = d.euler ? Json(*d.euler) : Json(nullptr);
  j["exists"] = existence_name(v.exists);
  j["rule"] = v.rule;
  j["explanation"] = v.explanation;
  return j;
}

int cmd_obstruct(const ObstructArgs& a, const GlobalOptions& o, std::ostream& log) {
  const Json j = obstruct_report(a);
  log << dump_json(j);
  write_report(o, "obstruct.json", j, log);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Numerical toolkit for semi-Riemannian geodesic variational problems", "geovar"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions go;
  double tol = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("--config", go.config, "JSON problem config");
  app.add_option("--out", go.out, "output directory")->capture_default_str();
  auto* tol_opt = app.add_option("--tol", tol, "main solver tolerance (overrides config)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides config)");
  auto* thr_opt = app.add_option("--threads", threads, "worker threads; GEOVAR_THREADS overrides")->check(CLI::PositiveNumber);
  app.add_flag("--require-admissible", go.require_admissible, "exit 4 when the GEC is not admissible");

  using Cmd = int (*)(const Json&, const GlobalOptions&, std::ostream&);
  const std::vector<std::pair<std::string, Cmd>> cmds = {
      {"geodesic", cmd_geodesic}, {"conjugate", cmd_conjugate}, {"bvp", cmd_bvp},
      {"classify", cmd_classify}, {"census", cmd_census},       {"perturb", cmd_perturb}};
  const std::vector<std::string> help = {"integrate a geodesic; trajectory CSV and summary JSON",
                                         "conjugate points and index form along a geodesic",
                                         "solve a (g,P)-geodesic boundary problem",
                                         "classify degeneracy of a given geodesic",
                                         "census of closed geodesics in a compact region",
                                         "bump perturbation, recheck sweep and Monte Carlo"};
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < cmds.size(); ++i) subs.push_back(app.add_subcommand(cmds[i].first, help[i]));

  ObstructArgs oa;
  auto* obs = app.add_subcommand("obstruct", "existence of metrics of a given index");
  obs->add_option("--sphere", oa.sphere, "sphere dimension m");
  obs->add_option("--surface", oa.surface, "closed surface name");
  obs->add_option("--generic", oa.generic, "compact=..,orientable=..,dim=..[,chi=..]");
  obs->add_option("--index", oa.index, "metric index nu")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (tol_opt->count()) go.tol = tol;
  if (seed_opt->count()) go.seed = seed;
  if (thr_opt->count()) go.threads = threads;

  try {
    if (obs->parsed()) return cmd_obstruct(oa, go, out);
    for (size_t i = 0; i < cmds.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      if (go.config.empty()) throw Error(ErrorCode::ConfigError, "--config is required for " + cmds[i].first);
      return cmds[i].second(load_config_file(go.config), go, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitConfig;
}

}  // namespace geovar
