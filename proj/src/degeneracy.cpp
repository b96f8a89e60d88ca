#include "geovar/degeneracy.hpp"

#include "geovar/parallel.hpp"
#include "geovar/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace geovar {

const char* degeneracy_name(DegeneracyKind k) {
  switch (k) {
    case DegeneracyKind::Nondegenerate: return "nondegenerate";
    case DegeneracyKind::Degenerate: return "degenerate";
    case DegeneracyKind::StronglyDegenerate: return "strongly_degenerate";
    case DegeneracyKind::S1Nondegenerate: return "s1_nondegenerate";
    case DegeneracyKind::S1Degenerate: return "s1_degenerate";
  }
  return "?";
}

namespace {

Mat fundamental_initial(int m, bool velocity_block) {
  Mat M = Mat::Zero(m, 2 * m);
  if (velocity_block)
    M.rightCols(m) = Mat::Identity(m, m);
  else
    M.leftCols(m) = Mat::Identity(m, m);
  return M;
}

}  // namespace

std::optional<StrongWitness> strongly_degenerate_check(const MetricField& metric, const GeodesicPath& path, int k,
                                                       double tol) {
  if (k < 2) return std::nullopt;
  const int m = path.dim();
  const double T = path.t_end, omega = T / k;
  const JacobiBundle fund = propagate_bundle(path, fundamental_initial(m, false), fundamental_initial(m, true), T);
  const Mat Pw = fund.phase(omega);
  const Mat PT = fund.phase(T);
  const Mat I = Mat::Identity(2 * m, 2 * m);
  Mat L = I, Pi = I;
  for (int i = 1; i < k; ++i) {
    Pi = Pw * Pi;
    L += Pi;
  }
  const Vec v0 = path.v0;
  const double vn = v0.norm();
  if (vn == 0.0) return std::nullopt;
  Mat U = Mat::Zero(2 * m, 2);
  U.col(0).head(m) = v0 / vn;
  U.col(1).tail(m) = v0 / vn;
  const Mat offU = I - U * U.transpose();
  // Periodic data whose iterate sum is a multiple of gamma'.
  Mat A(4 * m, 2 * m);
  A.topRows(2 * m) = offU * L;
  A.bottomRows(2 * m) = PT - I;
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec s = svd.singularValues();
  const double cut = tol * std::max(1.0, s[0]);
  int r = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] <= cut) ++r;
  if (r == 0) return std::nullopt;
  const Mat N = svd.matrixV().rightCols(r);
  // Direction in the null space farthest from the trivial tangent fields.
  Eigen::JacobiSVD<Mat> csvd(offU * N, Eigen::ComputeFullV);
  if (csvd.singularValues()[0] <= 1e-6) return std::nullopt;
  Vec z = N * csvd.matrixV().col(0);
  const Vec ab = U.transpose() * (L * z) / vn;  // sum = (a + b t) gamma'
  const double a = ab[0], b = ab[1];
  const double d = b / k;
  const double c = (a - b * omega * (k - 1) / 2.0) / k;
  Vec zc = z;
  zc.head(m) -= c * v0;
  zc.tail(m) -= d * v0;

  StrongWitness w;
  w.k = k;
  w.tangent_correction = std::hypot(c, d) * vn;
  w.field = propagate_jacobi(metric, path, zc.head(m), zc.tail(m));
  double sup = 0.0, sum = 0.0;
  const int n = 64;
  for (int j = 0; j <= n; ++j) {
    const double t = omega * j / n;
    Vec acc = Vec::Zero(m);
    for (int i = 0; i < k; ++i) {
      const Vec Ji = w.field.J(t + i * omega);
      acc += Ji;
      sup = std::max(sup, Ji.norm());
    }
    sum = std::max(sum, acc.norm());
  }
  if (sup == 0.0) return std::nullopt;
  w.sum_residual = sum / sup;
  Vec p0(2 * m), pT(2 * m);
  p0 << w.field.J(0.0), w.field.DJ(0.0);
  pT << w.field.J(T), w.field.DJ(T);
  w.periodic_residual = (pT - p0).norm() / p0.norm();
  if (w.sum_residual > tol || w.periodic_residual > tol) return std::nullopt;
  return w;
}

DegeneracyReport classify(const MetricField& metric, const GeodesicPath& path, const Gec& gec,
                          const ClassifyOptions& opts) {
  DegeneracyReport rep;
  rep.rel_threshold = opts.rel_threshold;
  const Vec u = check_critical(metric, gec, path, opts.critical_tol);
  const int m = path.dim();
  {
    const Vec off = gec.offset(metric.domain(), u, path.x(0.0), path.x(path.t_end));
    rep.residual = off.norm();
  }
  if (gec.kind == GecKind::Diagonal) {
    const MonodromyMap mm = monodromy(metric, path, opts.rel_threshold, opts.critical_tol);
    rep.kernel_dim = mm.fixed_dim;
    rep.k = std::max(1, mm.periodicity.k);
    rep.omega = mm.periodicity.periodic ? mm.periodicity.omega : path.t_end;
    for (int j = 0; j < mm.fixed_dim; ++j)
      rep.kernel_basis.push_back(
          propagate_jacobi(metric, path, mm.fixed_space.col(j).head(m), mm.fixed_space.col(j).tail(m)));
    if (opts.crosscheck) {
      const IndexFormOperator op = index_form(metric, path, gec, opts.n_basis, opts.critical_tol);
      rep.index_kernel_dim = op.kernel_dim;
      rep.index_threshold = op.threshold;
      rep.gap_factor = op.gap_factor;
      if (op.kernel_dim != mm.fixed_dim) rep.note = "index-form kernel disagrees with the monodromy fixed space";
    }
    if (mm.fixed_dim <= 1) {
      rep.kind = DegeneracyKind::S1Nondegenerate;
      return rep;
    }
    rep.kind = DegeneracyKind::S1Degenerate;
    if (rep.k >= 2) {
      rep.witness = strongly_degenerate_check(metric, path, rep.k, opts.rel_threshold);
      if (rep.witness) rep.kind = DegeneracyKind::StronglyDegenerate;
    }
    return rep;
  }
  const PJacobiSpace sp = pjacobi_shooting(metric, gec, path, u, opts.rel_threshold);
  rep.kernel_dim = sp.dimension;
  rep.kernel_basis = sp.basis;
  if (opts.crosscheck) {
    const IndexFormOperator op = index_form(metric, path, gec, opts.n_basis, opts.critical_tol);
    rep.index_kernel_dim = op.kernel_dim;
    rep.index_threshold = op.threshold;
    rep.gap_factor = op.gap_factor;
    if (op.kernel_dim != sp.dimension) rep.note = "index-form kernel disagrees with the shooting oracle";
  }
  rep.kind = sp.dimension > 0 ? DegeneracyKind::Degenerate : DegeneracyKind::Nondegenerate;
  return rep;
}

EnergyPair energies(const GeodesicPath& path, const AuxiliaryRiemannian& g_R, const PeriodicityVerdict& periodicity) {
  EnergyPair e;
  e.k = periodicity.periodic ? std::max(1, periodicity.k) : 1;
  e.total = path.t_end * riem_length_energy(path, g_R).E_R;
  e.minimal = e.total / (double(e.k) * e.k);
  return e;
}

GeodesicPath iterate(const GeodesicPath& path, int n, double tol) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "iterate count must be positive");
  const PeriodicityVerdict pv = detect_periodicity(path, tol);
  if (!pv.periodic || pv.k != 1 || std::abs(pv.omega - path.t_end) > tol * std::max(1.0, path.t_end))
    throw Error(ErrorCode::NotPeriodic, "path does not close exactly once at its end time");
  if (n == 1) return path;
  const int m = path.dim();
  const double T = path.t_end;
  Vec offset = Vec::Zero(2 * m);
  offset.head(m) = path.x(T) - path.x0;
  GeodesicPath out = path;
  for (int i = 1; i < n; ++i) out.trajectory.append(path.trajectory.shifted(i * T, i * offset));
  out.T = n * T;
  out.t_end = n * T;
  return out;
}

double image_distance(const ChartDomain& chart, const GeodesicPath& A, const GeodesicPath& B, int samples) {
  auto one_sided = [&](const GeodesicPath& P, const GeodesicPath& Q) {
    const int nq = 4 * samples;
    std::vector<Vec> qs(nq + 1);
    for (int j = 0; j <= nq; ++j) qs[j] = Q.x(Q.t_end * j / nq);
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
      const Vec p = P.x(P.t_end * i / samples);
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int j = 0; j <= nq; ++j) {
        const double dd = chart.displacement(p, qs[j]).norm();
        if (dd < bd) {
          bd = dd;
          best = j;
        }
      }
      // Golden-section refinement around the nearest sample.
      double a = Q.t_end * std::max(0, best - 1) / nq, c = Q.t_end * std::min(nq, best + 1) / nq;
      auto f = [&](double t) { return chart.displacement(p, Q.x(t)).norm(); };
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = c - gr * (c - a), x2 = a + gr * (c - a), f1 = f(x1), f2 = f(x2);
      for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
          c = x2; x2 = x1; f2 = f1;
          x1 = c - gr * (c - a); f1 = f(x1);
        } else {
          a = x1; x1 = x2; f1 = f2;
          x2 = a + gr * (c - a); f2 = f(x2);
        }
      }
      worst = std::max(worst, std::min({bd, f1, f2}));
    }
    return worst;
  };
  return std::max(one_sided(A, B), one_sided(B, A));
}

namespace {

struct ClosedOrbit {
  Vec x0, v0;
  double omega = 0.0;
};

// Newton on the phase-space return map with unknowns (x0, v0, omega). The
// extra row |v0|^2 = 1 fixes the scaling symmetry; minimum-norm steps absorb
// the time shift. Closing times above omega_cap are abandoned.
std::optional<ClosedOrbit> close_orbit(const MetricField& metric, Vec x0, Vec v0, double omega, double omega_cap,
                                       const CensusOptions& opts) {
  const int m = metric.dim();
  const ChartDomain& chart = metric.domain();
  GeodesicOptions go;
  go.tol = 1e-12;
  go.max_steps = 20000;
  auto residual = [&](const Vec& x, const Vec& v, double w, GeodesicPath* keep) -> std::optional<Vec> {
    if (!chart.contains(x) || !(w > 1e-3) || !(w < omega_cap) || !(v.norm() > 1e-3)) return std::nullopt;
    GeodesicPath p;
    try {
      p = integrate_geodesic(metric, x, v, w, go);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (!p.complete()) return std::nullopt;
    const Vec y = p.state(w);
    Vec r(2 * m + 1);
    r.head(m) = chart.displacement(x, y.head(m));
    r.segment(m, m) = y.tail(m) - v;
    r[2 * m] = v.squaredNorm() - 1.0;
    if (keep) *keep = std::move(p);
    return r;
  };
  GeodesicPath path;
  auto r = residual(x0, v0, omega, &path);
  if (!r) return std::nullopt;
  for (int it = 0; it < opts.max_iter; ++it) {
    if (r->norm() <= opts.tol) return ClosedOrbit{x0, v0, omega};
    // Analytic sensitivities: coordinate variations of (x, v) at time omega.
    const Connection c0 = connection_unchecked(metric, x0);
    Mat DJ0 = Mat::Zero(m, 2 * m);
    for (int i = 0; i < m; ++i) DJ0.col(i) = c0.apply(v0, Vec::Unit(m, i));
    DJ0.rightCols(m) = Mat::Identity(m, m);
    Mat J0 = Mat::Zero(m, 2 * m);
    J0.leftCols(m) = Mat::Identity(m, m);
    JacobiBundle b;
    try {
      b = propagate_bundle(path, J0, DJ0, omega);
    } catch (const Error&) {
      return std::nullopt;
    }
    const Vec y = path.state(omega);
    Mat Jac = Mat::Zero(2 * m + 1, 2 * m + 1);
    Jac.topLeftCorner(m, 2 * m) = b.J(omega);
    Jac.block(m, 0, m, 2 * m) = b.Jdot(omega);
    Jac.topLeftCorner(m, m) -= Mat::Identity(m, m);
    Jac.block(m, m, m, m) -= Mat::Identity(m, m);
    Jac.col(2 * m).head(m) = y.tail(m);
    Jac.col(2 * m).segment(m, m) = geodesic_acceleration(metric, y.head(m), y.tail(m));
    Jac.block(2 * m, m, 1, m) = 2.0 * v0.transpose();
    Eigen::JacobiSVD<Mat> svd(Jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    const Vec step = svd.solve(*r);
    double lambda = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 20; ++ls) {
      const Vec xt = chart.wrap(x0 - lambda * step.head(m));
      const Vec vt = v0 - lambda * step.segment(m, m);
      const double wt = omega - lambda * step[2 * m];
      GeodesicPath pt;
      auto rt = residual(xt, vt, wt, &pt);
      if (rt && rt->norm() < (1.0 - 1e-4 * lambda) * r->norm()) {
        x0 = xt;
        v0 = vt;
        omega = wt;
        r = rt;
        path = std::move(pt);
        ok = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!ok) return std::nullopt;
  }
  if (r->norm() <= opts.tol) return ClosedOrbit{x0, v0, omega};
  return std::nullopt;
}

std::vector<double> axis_samples(const ChartDomain& K, int a, int n) {
  std::vector<double> out;
  if (K.periodic(a)) {
    const double lo = std::isfinite(K.lower[a]) ? K.lower[a] : 0.0;
    for (int i = 0; i < n; ++i) out.push_back(lo + K.period[a] * i / n);
  } else {
    for (int i = 0; i < n; ++i) out.push_back(K.lower[a] + (K.upper[a] - K.lower[a]) * (i + 0.5) / n);
  }
  return out;
}

bool image_inside(const ChartDomain& K, const GeodesicPath& p) {
  const int n = 200;
  for (int i = 0; i <= n; ++i)
    if (!K.contains(p.x(p.t_end * i / n))) return false;
  return true;
}

}  // namespace

CensusResult periodic_census(const MetricField& metric, const ChartDomain& K, double a, double b,
                             const CensusOptions& opts) {
  const int m = metric.dim();
  if (K.dim != m) throw Error(ErrorCode::InvalidArgument, "census box has wrong dimension");
  for (int i = 0; i < m; ++i)
    if (!K.periodic(i) && (!std::isfinite(K.lower[i]) || !std::isfinite(K.upper[i])))
      throw Error(ErrorCode::InvalidArgument, "census box must be bounded");
  CensusResult res;
  res.K = K;
  res.a = a;
  res.b = b;

  // Seeds: positions x unit directions x trial periods.
  std::vector<std::vector<double>> axes(m);
  for (int i = 0; i < m; ++i) axes[i] = axis_samples(K, i, opts.positions_per_axis);
  std::vector<Vec> positions;
  std::vector<int> idx(m, 0);
  for (;;) {
    Vec x(m);
    for (int i = 0; i < m; ++i) x[i] = axes[i][idx[i]];
    positions.push_back(x);
    int i = 0;
    while (i < m && ++idx[i] == opts.positions_per_axis) idx[i++] = 0;
    if (i == m) break;
  }
  std::vector<Vec> dirs;
  for (int j = 0; j < opts.directions; ++j) {
    Vec v(m);
    if (m == 2) {
      const double ang = 2 * M_PI * j / opts.directions;
      v << std::cos(ang), std::sin(ang);
    } else {
      CounterRng rng(0x5eed, j);
      for (int i = 0; i < m; ++i) v[i] = rng.normal();
    }
    dirs.push_back(v / v.norm());
  }
  const double omega_max = std::sqrt(2.0 * std::max(b, 0.0));
  std::vector<double> periods;
  for (int j = 0; j < opts.periods; ++j) periods.push_back(omega_max * (j + 1) / opts.periods);

  struct Seed {
    Vec x, v;
    double w;
  };
  std::vector<Seed> seeds;
  for (const auto& x : positions)
    for (const auto& v : dirs)
      for (double w : periods) seeds.push_back({x, v, w});
  res.seeds = static_cast<int>(seeds.size());

  std::vector<std::optional<ClosedOrbit>> found(seeds.size());
  parallel_for(seeds.size(), resolve_threads(opts.threads), [&](size_t i) {
    found[i] = close_orbit(metric, seeds[i].x, seeds[i].v, seeds[i].w, 2.0 * omega_max + 1.0, opts);
  });

  const AuxiliaryRiemannian gR = AuxiliaryRiemannian::euclidean(m);
  std::vector<CensusOrbit> cands;
  for (auto& f : found) {
    if (!f) continue;
    ++res.converged;
    CensusOrbit o;
    o.path = integrate_geodesic(metric, f->x0, f->v0, f->omega);
    if (!o.path.complete() || !image_inside(K, o.path)) continue;
    o.omega = f->omega;
    o.energy = energies(o.path, gR, detect_periodicity(o.path, opts.closure_tol));
    if (o.energy.total > b * (1 + 1e-12) || o.energy.minimal > a * (1 + 1e-12)) continue;
    cands.push_back(std::move(o));
  }
  // Canonical order, then geometric deduplication.
  std::sort(cands.begin(), cands.end(), [](const CensusOrbit& p, const CensusOrbit& q) {
    if (p.energy.total != q.energy.total) return p.energy.total < q.energy.total;
    for (int i = 0; i < p.path.x0.size(); ++i)
      if (p.path.x0[i] != q.path.x0[i]) return p.path.x0[i] < q.path.x0[i];
    return false;
  });
  const ChartDomain& chart = metric.domain();
  for (auto& c : cands) {
    bool dup = false;
    for (const auto& o : res.orbits) {
      if (std::abs(o.energy.total - c.energy.total) > 1e-6 * std::max(1.0, c.energy.total)) continue;
      if (image_distance(chart, o.path, c.path) < 1e-4) {
        dup = true;
        break;
      }
    }
    if (!dup) res.orbits.push_back(std::move(c));
  }
  // Geometric grouping; iterates of each prime orbit are listed while b allows.
  auto group_of = [&](const CensusOrbit& c, size_t upto) -> int {
    for (size_t j = 0; j < upto; ++j)
      if (image_distance(chart, res.orbits[j].path, c.path) < 1e-4) return res.orbits[j].geometric_id;
    return -1;
  };
  int groups = 0;
  for (size_t i = 0; i < res.orbits.size(); ++i) {
    const int g = group_of(res.orbits[i], i);
    res.orbits[i].geometric_id = g >= 0 ? g : groups++;
  }
  const size_t found_count = res.orbits.size();
  for (size_t i = 0; i < found_count; ++i) {
    if (res.orbits[i].energy.k != 1) continue;
    const double e = res.orbits[i].energy.total;
    for (int n = 2; e > 0.0 && n * n * e <= b * (1 + 1e-12); ++n) {
      bool listed = false;
      for (const auto& o : res.orbits)
        if (o.geometric_id == res.orbits[i].geometric_id &&
            std::abs(o.energy.total - n * n * e) <= 1e-6 * n * n * e)
          listed = true;
      if (listed) continue;
      CensusOrbit it;
      try {
        it.path = iterate(res.orbits[i].path, n, opts.closure_tol);
      } catch (const Error&) {
        break;
      }
      it.omega = res.orbits[i].omega;
      it.energy = energies(it.path, gR, detect_periodicity(it.path, opts.closure_tol));
      if (it.energy.minimal > a * (1 + 1e-12)) break;
      it.geometric_id = res.orbits[i].geometric_id;
      res.orbits.push_back(std::move(it));
    }
  }
  std::stable_sort(res.orbits.begin(), res.orbits.end(), [](const CensusOrbit& p, const CensusOrbit& q) {
    if (p.geometric_id != q.geometric_id) return p.geometric_id < q.geometric_id;
    return p.energy.total < q.energy.total;
  });
  res.geometric_orbits = groups;

  ClassifyOptions co;
  co.crosscheck = false;
  co.critical_tol = opts.closure_tol;
  const Gec diag = Gec::diagonal(chart);
  std::vector<DegeneracyReport> reports(res.orbits.size());
  parallel_for(res.orbits.size(), resolve_threads(opts.threads), [&](size_t i) {
    reports[i] = classify(metric, res.orbits[i].path, diag, co);
  });
  for (size_t i = 0; i < res.orbits.size(); ++i) res.orbits[i].report = std::move(reports[i]);
  res.member = census_member(res, a, b);
  res.note = "membership is relative to the seed density: " + std::to_string(res.seeds) + " seeds";
  return res;
}

bool census_member(const CensusResult& census, double a, double b) {
  for (const auto& o : census.orbits) {
    if (o.energy.total > b * (1 + 1e-12) || o.energy.minimal > a * (1 + 1e-12)) continue;
    if (o.report.kind != DegeneracyKind::S1Nondegenerate) return false;
  }
  return true;
}

}  // namespace geovar
