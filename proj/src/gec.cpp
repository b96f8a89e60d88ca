#include "geovar/gec.hpp"

#include "geovar/parallel.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace geovar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ChartDomain empty_box() {
  ChartDomain b;
  b.dim = 0;
  return b;
}

ChartDomain concat_boxes(const ChartDomain& a, const ChartDomain& b) {
  ChartDomain c;
  c.dim = a.dim + b.dim;
  c.lower = a.lower;
  c.upper = a.upper;
  c.period = a.period;
  c.lower.insert(c.lower.end(), b.lower.begin(), b.lower.end());
  c.upper.insert(c.upper.end(), b.upper.begin(), b.upper.end());
  c.period.insert(c.period.end(), b.period.begin(), b.period.end());
  return c;
}

Mat pinv(const Mat& a, double rel = 1e-12) {
  if (a.size() == 0) return Mat::Zero(a.cols(), a.rows());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  Vec inv = Vec::Zero(s.size());
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel * s[0]) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Product metric and its connection at (p, q).
struct ProductConnection {
  Mat Gbar;
  Connection cp, cq;
  int m = 0;
  Vec apply(const Vec& a, const Vec& b) const {
    Vec out(2 * m);
    out.head(m) = cp.apply(a.head(m), b.head(m));
    out.tail(m) = cq.apply(a.tail(m), b.tail(m));
    return out;
  }
};

ProductConnection product_connection(const MetricField& metric, const Vec& point) {
  const int m = metric.dim();
  ProductConnection pc;
  pc.m = m;
  const Vec p = point.head(m), q = point.tail(m);
  eval_metric(metric, p);
  eval_metric(metric, q);
  pc.cp = connection_unchecked(metric, p);
  pc.cq = connection_unchecked(metric, q);
  pc.Gbar = Mat::Zero(2 * m, 2 * m);
  pc.Gbar.topLeftCorner(m, m) = pc.cp.g;
  pc.Gbar.bottomRightCorner(m, m) = -pc.cq.g;
  return pc;
}

// Grid over a parameter box; unbounded axes are sampled on [-1, 1].
std::vector<Vec> parameter_grid(const ChartDomain& box, int per_axis, int max_samples) {
  const int d = box.dim;
  if (d == 0) return {Vec(0)};
  while (per_axis > 2 && std::pow(per_axis, d) > max_samples) --per_axis;
  std::vector<std::vector<double>> axes(d);
  for (int a = 0; a < d; ++a) {
    double lo = box.lower[a], hi = box.upper[a];
    const bool per = box.period[a] > 0;
    if (per) {
      if (!std::isfinite(lo)) lo = 0.0;
      hi = lo + box.period[a];
    } else {
      if (!std::isfinite(lo)) lo = -1.0;
      if (!std::isfinite(hi)) hi = 1.0;
    }
    for (int i = 0; i < per_axis; ++i) {
      // Periodic axes: half-open grid. Bounded axes: stay strictly inside.
      const double s = per ? double(i) / per_axis : (i + 0.5) / per_axis;
      axes[a].push_back(lo + s * (hi - lo));
    }
  }
  std::vector<Vec> out;
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec u(d);
    for (int a = 0; a < d; ++a) u[a] = axes[a][idx[a]];
    out.push_back(u);
    int a = 0;
    while (a < d && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == d) break;
  }
  return out;
}

bool params_compact(const ChartDomain& box) {
  for (int a = 0; a < box.dim; ++a) {
    if (box.period[a] > 0) continue;
    if (!std::isfinite(box.lower[a]) || !std::isfinite(box.upper[a])) return false;
  }
  return true;
}

Vec wrap_params(const ChartDomain& box, const Vec& u) {
  Vec w = u;
  for (int a = 0; a < box.dim; ++a) {
    if (box.period[a] <= 0) continue;
    const double lo = std::isfinite(box.lower[a]) ? box.lower[a] : 0.0;
    w[a] = lo + std::fmod(std::fmod(u[a] - lo, box.period[a]) + box.period[a], box.period[a]);
  }
  return w;
}

double param_distance(const ChartDomain& box, const Vec& a, const Vec& b) {
  Vec d = b - a;
  for (int i = 0; i < box.dim; ++i)
    if (box.period[i] > 0) d[i] -= box.period[i] * std::round(d[i] / box.period[i]);
  return d.norm();
}

// Gauss-Newton on a vector function of u; returns the final iterate.
Vec gauss_newton(const std::function<Vec(const Vec&)>& F, const std::function<Mat(const Vec&)>& JF, Vec u,
                 const ChartDomain& box, int iters, double tol) {
  for (int it = 0; it < iters; ++it) {
    const Vec r = F(u);
    if (r.norm() <= tol) break;
    const Vec step = pinv(JF(u)) * r;
    if (!step.allFinite()) break;
    double lambda = 1.0;
    Vec trial = u;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls) {
      trial = wrap_params(box, u - lambda * step);
      if (F(trial).norm() < r.norm()) {
        moved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!moved) break;
    u = trial;
  }
  return u;
}

}  // namespace

Immersion::Immersion(int d_, int n_, Map map_, ChartDomain params_)
    : d(d_), n(n_), params(std::move(params_)), map(std::move(map_)) {
  if (params.dim != d) throw Error(ErrorCode::InvalidArgument, "parameter box dimension differs from d");
}

Mat Immersion::d1(const Vec& u) const {
  if (jacobian) return jacobian(u);
  Mat J(n, d);
  for (int a = 0; a < d; ++a) {
    const double h = fd_step * std::max(1.0, std::abs(u[a]));
    Vec up = u, um = u;
    up[a] += h;
    um[a] -= h;
    J.col(a) = (map(up) - map(um)) / (2 * h);
  }
  return J;
}

std::vector<Vec> Immersion::d2(const Vec& u) const {
  if (hessian) return hessian(u);
  std::vector<Vec> H(d * d, Vec::Zero(n));
  if (jacobian) {
    for (int a = 0; a < d; ++a) {
      const double h = fd_step * std::max(1.0, std::abs(u[a]));
      Vec up = u, um = u;
      up[a] += h;
      um[a] -= h;
      const Mat D = (jacobian(up) - jacobian(um)) / (2 * h);
      for (int b = 0; b < d; ++b) H[a * d + b] = D.col(b);
    }
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) {
        const Vec s = 0.5 * (H[a * d + b] + H[b * d + a]);
        H[a * d + b] = s;
        H[b * d + a] = s;
      }
    return H;
  }
  const Vec f0 = map(u);
  for (int a = 0; a < d; ++a) {
    const double ha = fd_step2 * std::max(1.0, std::abs(u[a]));
    for (int b = a; b < d; ++b) {
      const double hb = fd_step2 * std::max(1.0, std::abs(u[b]));
      Vec v;
      if (a == b) {
        Vec up = u, um = u;
        up[a] += ha;
        um[a] -= ha;
        v = (map(up) - 2 * f0 + map(um)) / (ha * ha);
      } else {
        Vec pp = u, pm = u, mp = u, mm = u;
        pp[a] += ha; pp[b] += hb;
        pm[a] += ha; pm[b] -= hb;
        mp[a] -= ha; mp[b] += hb;
        mm[a] -= ha; mm[b] -= hb;
        v = (map(pp) - map(pm) - map(mp) + map(mm)) / (4 * ha * hb);
      }
      H[a * d + b] = v;
      H[b * d + a] = v;
    }
  }
  return H;
}

Immersion Immersion::point(const Vec& p) {
  Immersion im;
  im.d = 0;
  im.n = static_cast<int>(p.size());
  im.params = empty_box();
  im.map = [p](const Vec&) { return p; };
  const int n = im.n;
  im.jacobian = [n](const Vec&) { return Mat(n, 0); };
  im.hessian = [](const Vec&) { return std::vector<Vec>{}; };
  return im;
}

Immersion Immersion::circle(const Vec& center, double radius, int axis0, int axis1) {
  const int n = static_cast<int>(center.size());
  if (axis0 < 0 || axis1 < 0 || axis0 >= n || axis1 >= n || axis0 == axis1)
    throw Error(ErrorCode::InvalidArgument, "bad circle axes");
  if (!(radius > 0)) throw Error(ErrorCode::InvalidArgument, "circle radius must be positive");
  const double tau = 2 * M_PI;
  Immersion im(1, n, [=](const Vec& u) {
    Vec x = center;
    x[axis0] += radius * std::cos(u[0]);
    x[axis1] += radius * std::sin(u[0]);
    return x;
  }, ChartDomain({0.0}, {tau}, "circle", {tau}));
  im.jacobian = [=](const Vec& u) {
    Mat J = Mat::Zero(n, 1);
    J(axis0, 0) = -radius * std::sin(u[0]);
    J(axis1, 0) = radius * std::cos(u[0]);
    return J;
  };
  im.hessian = [=](const Vec& u) {
    Vec h = Vec::Zero(n);
    h[axis0] = -radius * std::cos(u[0]);
    h[axis1] = -radius * std::sin(u[0]);
    return std::vector<Vec>{h};
  };
  return im;
}

const char* gec_kind_name(GecKind k) {
  switch (k) {
    case GecKind::FixedPoints: return "fixed";
    case GecKind::ProductSubmanifolds: return "product";
    case GecKind::Diagonal: return "diagonal";
    case GecKind::Parametrized: return "parametrized";
  }
  return "?";
}

Gec Gec::fixed(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw Error(ErrorCode::InvalidArgument, "endpoint dimensions differ");
  Gec g = product(Immersion::point(p), Immersion::point(q));
  g.kind = GecKind::FixedPoints;
  return g;
}

Gec Gec::product(const Immersion& P, const Immersion& Q) {
  if (P.n != Q.n) throw Error(ErrorCode::InvalidArgument, "factor immersions live in different dimensions");
  Gec g;
  g.kind = GecKind::ProductSubmanifolds;
  g.m = P.n;
  g.P = P;
  g.Q = Q;
  const int m = P.n, d1 = P.d, d2 = Q.d;
  Immersion psi(d1 + d2, 2 * m, [P, Q, d1, d2, m](const Vec& u) {
    Vec x(2 * m);
    x.head(m) = P.eval(u.head(d1));
    x.tail(m) = Q.eval(u.tail(d2));
    return x;
  }, concat_boxes(P.params, Q.params));
  psi.jacobian = [P, Q, d1, d2, m](const Vec& u) {
    Mat J = Mat::Zero(2 * m, d1 + d2);
    if (d1) J.topLeftCorner(m, d1) = P.d1(u.head(d1));
    if (d2) J.bottomRightCorner(m, d2) = Q.d1(u.tail(d2));
    return J;
  };
  psi.hessian = [P, Q, d1, d2, m](const Vec& u) {
    const int d = d1 + d2;
    std::vector<Vec> H(d * d, Vec::Zero(2 * m));
    if (d1) {
      const auto hp = P.d2(u.head(d1));
      for (int a = 0; a < d1; ++a)
        for (int b = 0; b < d1; ++b) H[a * d + b].head(m) = hp[a * d1 + b];
    }
    if (d2) {
      const auto hq = Q.d2(u.tail(d2));
      for (int a = 0; a < d2; ++a)
        for (int b = 0; b < d2; ++b) H[(d1 + a) * d + d1 + b].tail(m) = hq[a * d2 + b];
    }
    return H;
  };
  g.psi = psi;
  return g;
}

Gec Gec::diagonal(const ChartDomain& domain) {
  Gec g;
  g.kind = GecKind::Diagonal;
  const int m = domain.dim;
  g.m = m;
  Immersion psi(m, 2 * m, [m](const Vec& u) {
    Vec x(2 * m);
    x << u, u;
    return x;
  }, domain);
  psi.jacobian = [m](const Vec&) {
    Mat J(2 * m, m);
    J << Mat::Identity(m, m), Mat::Identity(m, m);
    return J;
  };
  psi.hessian = [m](const Vec&) { return std::vector<Vec>(m * m, Vec::Zero(2 * m)); };
  g.psi = psi;
  return g;
}

Gec Gec::parametrized(const Immersion& psi) {
  if (psi.n % 2 != 0) throw Error(ErrorCode::InvalidArgument, "parametrization must map into M x M");
  Gec g;
  g.kind = GecKind::Parametrized;
  g.m = psi.n / 2;
  g.psi = psi;
  return g;
}

Gec Gec::transpose() const {
  Gec t = *this;
  t.transposed = !transposed;
  std::swap(t.P, t.Q);
  const Immersion src = psi;
  const int m = this->m;
  auto swap_halves = [m](const Vec& x) {
    Vec y(2 * m);
    y << x.tail(m), x.head(m);
    return y;
  };
  t.psi.map = [src, swap_halves](const Vec& u) { return swap_halves(src.eval(u)); };
  t.psi.jacobian = [src, m](const Vec& u) {
    const Mat J = src.d1(u);
    Mat out(2 * m, J.cols());
    out << J.bottomRows(m), J.topRows(m);
    return out;
  };
  t.psi.hessian = [src, swap_halves](const Vec& u) {
    auto H = src.d2(u);
    for (auto& h : H) h = swap_halves(h);
    return H;
  };
  return t;
}

Vec Gec::offset(const ChartDomain& chart, const Vec& u, const Vec& x0, const Vec& x1) const {
  const Vec p = psi.eval(u);
  Vec r(2 * m);
  r.head(m) = chart.displacement(x0, p.head(m));
  r.tail(m) = chart.displacement(x1, p.tail(m));
  return r;
}

std::optional<Vec> Gec::locate(const ChartDomain& chart, const Vec& x0, const Vec& x1, double tol,
                               const Vec* guess) const {
  const double scale = std::max(1.0, std::max(x0.norm(), x1.norm()));
  auto ok = [&](const Vec& u) { return offset(chart, u, x0, x1).norm() <= tol * scale; };
  if (kind == GecKind::Diagonal) {
    if (ok(x0)) return Vec(x0);
    return std::nullopt;
  }
  if (dim() == 0) {
    const Vec u(0);
    if (ok(u)) return u;
    return std::nullopt;
  }
  std::vector<Vec> starts;
  if (guess) starts.push_back(*guess);
  for (const Vec& u : parameter_grid(psi.params, 8, 512)) starts.push_back(u);
  auto F = [&](const Vec& u) { return offset(chart, u, x0, x1); };
  auto JF = [&](const Vec& u) { return psi.d1(u); };
  for (const Vec& s : starts) {
    const Vec u = gauss_newton(F, JF, s, psi.params, 60, 1e-14 * scale);
    if (ok(u)) return u;
  }
  return std::nullopt;
}

Mat BoundaryGeometry::S(const Vec& eta) const {
  const int d = static_cast<int>(tangent.cols());
  Mat s(d, d);
  const Vec ge = Gbar * eta;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) s(a, b) = covariant_second[a * d + b].dot(ge);
  return symmetrize(s);
}

BoundaryGeometry boundary_geometry(const Gec& gec, const MetricField& metric, const Vec& u,
                                   bool allow_degenerate) {
  if (metric.dim() != gec.m) throw Error(ErrorCode::InvalidArgument, "GEC and metric dimensions differ");
  const int d = gec.dim(), m = gec.m;
  BoundaryGeometry bg;
  bg.u = u;
  bg.point = gec.point(u);
  bg.tangent = gec.tangent(u);
  const ProductConnection pc = product_connection(metric, bg.point);
  bg.Gbar = pc.Gbar;
  bg.gram = symmetrize(bg.tangent.transpose() * bg.Gbar * bg.tangent);
  const auto H = gec.second(u);
  bg.covariant_second.resize(d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      bg.covariant_second[a * d + b] = H[a * d + b] + pc.apply(bg.tangent.col(a), bg.tangent.col(b));
  const Mat I = Mat::Identity(2 * m, 2 * m);
  if (d == 0) {
    bg.nondegenerate = true;
    bg.gram_condition = 1.0;
    bg.tangent_projector = Mat::Zero(2 * m, 2 * m);
    bg.normal_projector = I;
    return bg;
  }
  Eigen::JacobiSVD<Mat> svd(bg.gram);
  const Vec s = svd.singularValues();
  const double bnorm = Eigen::JacobiSVD<Mat>(bg.tangent).singularValues()[0];
  const double gnorm = Eigen::JacobiSVD<Mat>(bg.Gbar).singularValues()[0];
  const double floor = 1e-10 * gnorm * bnorm * bnorm;
  bg.nondegenerate = s[d - 1] > floor;
  bg.gram_condition = bg.nondegenerate ? s[0] / s[d - 1] : kInf;
  if (!bg.nondegenerate) {
    if (!allow_degenerate)
      throw Error(ErrorCode::DegenerateRestriction, "product metric restricted to the endpoint manifold is degenerate");
    bg.tangent_projector = Mat::Zero(2 * m, 2 * m);
    bg.normal_projector = I;
    return bg;
  }
  bg.tangent_projector = bg.tangent * bg.gram.ldlt().solve(bg.tangent.transpose() * bg.Gbar);
  bg.normal_projector = I - bg.tangent_projector;
  return bg;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::admissible: return "admissible";
    case Verdict::not_admissible: return "not_admissible";
    case Verdict::undetermined: return "undetermined";
  }
  return "?";
}

AdmissibilityReport check_admissibility(const Gec& gec, const MetricField& metric,
                                        const AdmissibilitySampling& sampling) {
  AdmissibilityReport rep;
  const int m = gec.m, d = gec.dim();
  const ChartDomain& chart = metric.domain();
  rep.compact = params_compact(gec.psi.params);
  const auto grid = parameter_grid(gec.psi.params, sampling.per_axis, sampling.max_samples);

  // Restricted metric over the samples.
  rep.nondegenerate_restriction = true;
  rep.worst_condition = 1.0;
  std::vector<char> inside(grid.size(), 1);
  for (size_t i = 0; i < grid.size(); ++i) {
    BoundaryGeometry bg;
    try {
      bg = boundary_geometry(gec, metric, grid[i], true);
    } catch (const Error&) {
      inside[i] = 0;
      continue;
    }
    rep.worst_condition = std::max(rep.worst_condition, bg.gram_condition);
    if (!bg.nondegenerate) rep.nondegenerate_restriction = false;
  }

  // Intersections with the diagonal: psi_0(u) = psi_1(u).
  auto F = [&](const Vec& u) {
    const Vec p = gec.point(u);
    return Vec(chart.displacement(p.tail(m), p.head(m)));
  };
  auto JF = [&](const Vec& u) {
    const Mat B = gec.tangent(u);
    return Mat(B.topRows(m) - B.bottomRows(m));
  };
  double min_gap = kInf;
  for (size_t i = 0; i < grid.size(); ++i) {
    if (!inside[i]) continue;
    const Vec u = d ? gauss_newton(F, JF, grid[i], gec.psi.params, 60, 1e-13) : grid[i];
    const double gap = F(u).norm();
    min_gap = std::min(min_gap, gap);
    if (gap > 1e-10) continue;
    bool dup = false;
    for (const Vec& w : rep.diagonal_points)
      if (param_distance(gec.psi.params, u, w) < 1e-6) dup = true;
    if (!dup) rep.diagonal_points.push_back(u);
  }
  rep.transversal_to_diagonal = true;
  rep.worst_transversality_margin = rep.diagonal_points.empty() ? 1.0 : kInf;
  for (const Vec& u : rep.diagonal_points) {
    Mat M(2 * m, d + m);
    M.leftCols(d) = gec.tangent(u);
    M.rightCols(m) << Mat::Identity(m, m), Mat::Identity(m, m);
    double margin = 0.0;
    if (d + m >= 2 * m) {
      const Vec s = Eigen::JacobiSVD<Mat>(M).singularValues();
      margin = s[2 * m - 1] / s[0];
    }
    rep.worst_transversality_margin = std::min(rep.worst_transversality_margin, margin);
    if (margin <= sampling.transversality_tol) rep.transversal_to_diagonal = false;
  }

  if (!rep.nondegenerate_restriction) {
    rep.verdict = Verdict::not_admissible;
    rep.rule = "restricted product metric is degenerate on the endpoint manifold (DegenerateRestriction)";
    return rep;
  }
  if (!rep.compact) {
    rep.verdict = Verdict::not_admissible;
    rep.rule = "endpoint manifold is not compact";
    return rep;
  }
  if (rep.diagonal_points.empty()) {
    rep.verdict = Verdict::admissible;
    rep.length_lower_bound = min_gap;
    rep.length_bound_estimated = d > 0;
    rep.rule = "endpoint manifold misses the diagonal; a is the minimal coordinate distance between endpoints";
    return rep;
  }
  if (!rep.transversal_to_diagonal) {
    rep.verdict = Verdict::undetermined;
    rep.rule = "endpoint manifold meets the diagonal non-transversally; the sufficient condition does not apply";
    return rep;
  }
  rep.verdict = Verdict::admissible;
  rep.rule = "endpoint manifold is compact, nondegenerate and transverse to the diagonal";
  // Estimate a from nonconstant short solutions.
  BvpOptions bo;
  bo.max_iter = 30;
  const auto sols = multistart_gp_geodesic(metric, gec, grid_guesses(gec, chart, sampling.per_axis), bo,
                                           sampling.threads);
  const AuxiliaryRiemannian gR = AuxiliaryRiemannian::euclidean(m);
  double best = kInf;
  for (const auto& s : sols) {
    const double L = riem_length_energy(s.path, gR).L_R;
    if (L > 1e-6) best = std::min(best, L);
  }
  if (std::isfinite(best)) {
    rep.length_lower_bound = 0.9 * best;
  } else {
    rep.length_lower_bound = 0.0;
    rep.rule += "; no nonconstant solution found, a not estimated";
  }
  return rep;
}

namespace {

struct ShootEval {
  bool ok = false;
  Vec r;
  GeodesicPath path;
};

ShootEval shoot(const MetricField& metric, const Gec& gec, const Vec& z, const BvpOptions& opts) {
  ShootEval e;
  const int m = gec.m, d = gec.dim();
  const Vec u = z.head(d), v0 = z.tail(m);
  const Vec pt = gec.point(u);
  const Vec x0 = pt.head(m);
  const ChartDomain& chart = metric.domain();
  if (!chart.contains(x0) || !chart.contains(pt.tail(m)) || !v0.allFinite()) return e;
  try {
    e.path = integrate_geodesic(metric, x0, v0, 1.0, opts.geodesic);
  } catch (const Error&) {
    return e;
  }
  if (!e.path.complete()) return e;
  const Vec y1 = e.path.state(1.0);
  const Vec x1 = y1.head(m), v1 = y1.tail(m);
  e.r.resize(m + d);
  e.r.head(m) = chart.displacement(pt.tail(m), x1);
  if (d) {
    const Mat B = gec.tangent(u);
    const Mat g0 = metric.g(x0), g1 = metric.g(x1);
    e.r.tail(d) = B.topRows(m).transpose() * (g0 * v0) - B.bottomRows(m).transpose() * (g1 * v1);
  }
  e.ok = e.r.allFinite();
  return e;
}

}  // namespace

BvpSolution solve_gp_geodesic(const MetricField& metric, const Gec& gec, const BvpGuess& guess,
                              const BvpOptions& opts) {
  const int m = gec.m, d = gec.dim();
  if (metric.dim() != m) throw Error(ErrorCode::InvalidArgument, "GEC and metric dimensions differ");
  if (guess.u.size() != d || guess.v0.size() != m) throw Error(ErrorCode::InvalidArgument, "guess has wrong shape");
  const ChartDomain& box = gec.psi.params;
  Vec z(d + m);
  z << guess.u, guess.v0;
  ShootEval cur = shoot(metric, gec, z, opts);
  if (!cur.ok) throw Error(ErrorCode::DomainExit, "initial guess leaves the chart");
  auto converged = [&](const Vec& r) {
    return r.head(m).norm() <= opts.tol && (d == 0 || r.tail(d).norm() <= opts.tol);
  };
  Mat Jac(m + d, d + m);
  int it = 0;
  auto jacobian_at = [&](const Vec& zz) {
    for (int i = 0; i < d + m; ++i) {
      const double h = opts.fd_step * std::max(1.0, std::abs(zz[i]));
      Vec zp = zz, zm = zz;
      zp[i] += h;
      zm[i] -= h;
      const ShootEval ep = shoot(metric, gec, zp, opts);
      const ShootEval em = shoot(metric, gec, zm, opts);
      if (ep.ok && em.ok) {
        Jac.col(i) = (ep.r - em.r) / (2 * h);
      } else if (ep.ok) {
        Jac.col(i) = (ep.r - cur.r) / h;
      } else if (em.ok) {
        Jac.col(i) = (cur.r - em.r) / h;
      } else {
        throw Error(ErrorCode::NewtonDiverged, "finite-difference Jacobian left the chart");
      }
    }
  };
  for (; it < opts.max_iter && !converged(cur.r); ++it) {
    jacobian_at(z);
    const Vec step = pinv(Jac, 1e-12) * cur.r;
    const double r0 = cur.r.norm();
    double lambda = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec zt = z - lambda * step;
      zt.head(d) = wrap_params(box, zt.head(d));
      ShootEval et = shoot(metric, gec, zt, opts);
      if (et.ok && et.r.norm() < (1.0 - 1e-4 * lambda) * r0) {
        z = zt;
        cur = std::move(et);
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      throw Error(ErrorCode::NewtonDiverged,
                  "line search failed at residual " + std::to_string(r0) + " after " + std::to_string(it) + " iterations");
    }
  }
  if (!converged(cur.r))
    throw Error(ErrorCode::NewtonDiverged, "no convergence in " + std::to_string(opts.max_iter) + " iterations");
  jacobian_at(z);
  const Vec sv = Eigen::JacobiSVD<Mat>(Jac).singularValues();
  BvpSolution sol;
  sol.u = z.head(d);
  sol.v0 = z.tail(m);
  sol.path = std::move(cur.path);
  sol.endpoint_residual = cur.r.head(m).norm();
  sol.orthogonality_residual = d ? cur.r.tail(d).norm() : 0.0;
  sol.jacobian_condition = sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1] : kInf;
  sol.iterations = it;
  if (opts.require_nondegenerate && gec.kind != GecKind::Diagonal) boundary_geometry(gec, metric, sol.u);
  return sol;
}

std::vector<BvpSolution> multistart_gp_geodesic(const MetricField& metric, const Gec& gec,
                                                const std::vector<BvpGuess>& guesses, const BvpOptions& opts,
                                                int threads) {
  std::vector<std::optional<BvpSolution>> slots(guesses.size());
  parallel_for(guesses.size(), threads, [&](size_t i) {
    try {
      slots[i] = solve_gp_geodesic(metric, gec, guesses[i], opts);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidArgument) throw;
    }
  });
  std::vector<BvpSolution> out;
  const ChartDomain& chart = metric.domain();
  for (auto& s : slots) {
    if (!s) continue;
    bool dup = false;
    for (const auto& o : out) {
      const double dist = std::sqrt(chart.displacement(o.path.x0, s->path.x0).squaredNorm() +
                                    (o.v0 - s->v0).squaredNorm());
      if (dist < 1e-4) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(std::move(*s));
  }
  return out;
}

std::vector<BvpGuess> grid_guesses(const Gec& gec, const ChartDomain& chart, int per_axis) {
  std::vector<BvpGuess> out;
  const int m = gec.m;
  for (const Vec& u : parameter_grid(gec.psi.params, per_axis, 4096)) {
    const Vec p = gec.point(u);
    out.push_back({u, chart.displacement(p.head(m), p.tail(m))});
  }
  return out;
}

double PJacobiResidual::norm() const { return std::sqrt(membership.squaredNorm() + tangential.squaredNorm()); }

PJacobiResidual pjacobi_boundary_residual(const MetricField& metric, const Gec& gec, const JacobiSolution& J,
                                          const Vec& u) {
  const int m = gec.m, d = gec.dim();
  const double T = J.t_end();
  Vec ends(2 * m), Dends(2 * m), eta(2 * m);
  ends << J.J(0.0), J.J(T);
  Dends << J.DJ(0.0), J.DJ(T);
  eta << J.v(0.0), J.v(T);
  const BoundaryGeometry bg = boundary_geometry(gec, metric, u, true);
  PJacobiResidual r;
  if (d == 0) {
    r.membership = ends;
    r.tangential = Vec(0);
    return r;
  }
  const Vec a = pinv(bg.tangent) * ends;
  r.membership = ends - bg.tangent * a;
  r.tangential = bg.tangent.transpose() * (bg.Gbar * Dends) + bg.S(eta) * a;
  return r;
}

PJacobiSpace pjacobi_shooting(const MetricField& metric, const Gec& gec, const GeodesicPath& path, const Vec& u,
                              double rel_threshold) {
  const int m = gec.m, d = gec.dim();
  if (metric.dim() != m) throw Error(ErrorCode::InvalidArgument, "GEC and metric dimensions differ");
  const double T = path.t_end;
  Mat J0 = Mat::Zero(m, 2 * m), DJ0 = Mat::Zero(m, 2 * m);
  J0.leftCols(m) = Mat::Identity(m, m);
  DJ0.rightCols(m) = Mat::Identity(m, m);
  const JacobiBundle fund = propagate_bundle(path, J0, DJ0, T);
  const Mat Phi = fund.phase(T);
  const BoundaryGeometry bg = boundary_geometry(gec, metric, u, true);
  const Mat B0 = bg.tangent.topRows(m), B1 = bg.tangent.bottomRows(m);
  Vec eta(2 * m);
  eta << path.v(0.0), path.v(T);
  const Mat S = bg.S(eta);
  const Mat g0 = bg.Gbar.topLeftCorner(m, m);
  const Mat g1 = -bg.Gbar.bottomRightCorner(m, m);
  // Initial data (J0, DJ0) = (B0 a, w) as a linear map of z = (a, w).
  Mat E = Mat::Zero(2 * m, d + m);
  E.topLeftCorner(m, d) = B0;
  E.bottomRightCorner(m, m) = Mat::Identity(m, m);
  const Mat end = Phi * E;  // (J1; DJ1) in terms of z
  Mat L(m + d, d + m);
  L.topRows(m) = end.topRows(m);
  L.topLeftCorner(m, d) -= B1;
  if (d) {
    L.bottomRows(d) = -B1.transpose() * g1 * end.bottomRows(m);
    L.bottomRightCorner(d, m) += B0.transpose() * g0;
    L.bottomLeftCorner(d, d) += S;
  }
  Eigen::JacobiSVD<Mat> svd(L, Eigen::ComputeFullV);
  const Vec s = svd.singularValues();
  PJacobiSpace out;
  out.singular_values = s.reverse();
  const double scale = s.size() ? s[0] : 0.0;
  int k = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] <= rel_threshold * scale) ++k;
  out.dimension = k;
  out.initial_data = E * svd.matrixV().rightCols(k);
  for (int j = 0; j < k; ++j)
    out.basis.push_back(propagate_jacobi(metric, path, out.initial_data.col(j).head(m), out.initial_data.col(j).tail(m)));
  return out;
}

Vec check_critical(const MetricField& metric, const Gec& gec, const GeodesicPath& path, double tol) {
  const int m = gec.m;
  if (!path.complete()) throw Error(ErrorCode::NotCritical, "path did not complete");
  const double T = path.t_end;
  const Vec x0 = path.x(0.0), x1 = path.x(T);
  const auto u = gec.locate(metric.domain(), x0, x1, tol);
  if (!u) throw Error(ErrorCode::NotCritical, "path endpoints are not on the endpoint manifold");
  if (gec.dim()) {
    const Mat B = gec.tangent(*u);
    const Vec v0 = path.v(0.0), v1 = path.v(T);
    const Vec orth = B.topRows(m).transpose() * (metric.g(x0) * v0) - B.bottomRows(m).transpose() * (metric.g(x1) * v1);
    if (orth.norm() > tol * std::max(1.0, v0.norm()))
      throw Error(ErrorCode::NotCritical, "endpoint velocities are not orthogonal to the endpoint manifold");
  }
  return *u;
}

PJacobiSpace pjacobi_shooting_checked(const MetricField& metric, const Gec& gec, const GeodesicPath& path, double tol,
                                      double rel_threshold) {
  const Vec u = check_critical(metric, gec, path, tol);
  return pjacobi_shooting(metric, gec, path, u, rel_threshold);
}

FocalityReport focality_report(const MetricField& metric, const Immersion& P, const Immersion& Q,
                               const std::vector<BvpGuess>& guesses, const BvpOptions& opts) {
  const Gec gec = Gec::product(P, Q);
  FocalityReport rep;
  rep.solutions = multistart_gp_geodesic(metric, gec, guesses, opts);
  for (const auto& s : rep.solutions) {
    const int k = pjacobi_shooting(metric, gec, s.path, s.u).dimension;
    rep.kernel_dimensions.push_back(k);
    if (k >= 1) rep.focal = true;
  }
  return rep;
}

}  // namespace geovar
