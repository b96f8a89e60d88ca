#include "geovar/geodesic.hpp"

#include "geovar/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace geovar {

OdeOptions GeodesicOptions::ode() const {
  OdeOptions o;
  o.rtol = tol;
  o.atol = tol * 1e-2;
  o.fixed_step = fixed_step;
  o.step = step;
  o.max_step = max_step;
  o.max_steps = max_steps;
  return o;
}

Curve GeodesicPath::as_curve() const {
  Curve c;
  c.t0 = 0.0;
  c.t1 = t_end;
  const int m = dim();
  auto traj = trajectory;
  c.position = [traj, m](double t) { return Vec(traj.eval(t).head(m)); };
  c.velocity = [traj, m](double t) { return Vec(traj.eval(t).tail(m)); };
  return c;
}

Vec geodesic_acceleration(const MetricField& metric, const Vec& x, const Vec& v) {
  const Connection c = connection_unchecked(metric, x);
  return -c.apply(v, v);
}

GeodesicPath integrate_geodesic(const MetricField& metric, const Vec& x0, const Vec& v0, double T,
                                const GeodesicOptions& opts) {
  const int m = metric.dim();
  if (x0.size() != m || v0.size() != m) throw Error(ErrorCode::InvalidArgument, "initial data has wrong dimension");
  if (!metric.domain().contains(x0)) throw Error(ErrorCode::OutOfDomain, "initial point outside chart domain");
  GeodesicPath p;
  p.metric = metric;
  p.x0 = x0;
  p.v0 = v0;
  p.T = T;
  p.options = opts;
  p.speed = v0.dot(metric.g(x0) * v0);
  Vec y0(2 * m);
  y0 << x0, v0;
  auto rhs = [&metric, m](double, const Vec& y, Vec& dy) {
    dy.resize(2 * m);
    dy.head(m) = y.tail(m);
    dy.tail(m) = geodesic_acceleration(metric, y.head(m), y.tail(m));
  };
  const auto& dom = metric.domain();
  auto inside = [&dom, m](const Vec& y) { return dom.contains(y.head(m)); };
  OdeResult r = integrate_dopri5(rhs, 0.0, y0, T, opts.ode(), inside);
  p.trajectory = std::move(r.trajectory);
  p.status = r.status;
  p.t_end = r.t_final;
  if (r.status == OdeStatus::step_failure) throw Error(ErrorCode::StepFailure, r.message);
  double err = 0.0;
  const auto nodes = p.trajectory.nodes();
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Vec y = p.trajectory.state_at_node(i);
    const Vec v = y.tail(m);
    err = std::max(err, std::abs(v.dot(metric.g(y.head(m)) * v) - p.speed));
  }
  p.conservation_error = err;
  return p;
}

Vec exp_map(const MetricField& metric, const Vec& x, const Vec& v, const GeodesicOptions& opts) {
  if (v.isZero(0.0)) {
    if (!metric.domain().contains(x)) throw Error(ErrorCode::OutOfDomain, "point outside chart domain");
    return x;
  }
  GeodesicPath p = integrate_geodesic(metric, x, v, 1.0, opts);
  if (!p.complete())
    throw Error(ErrorCode::DomainExit, "geodesic left the chart at t=" + std::to_string(p.t_end));
  return p.x(1.0);
}

Mat FieldAlongCurve::at(double t) const {
  const Vec y = trajectory.eval(t);
  return Eigen::Map<const Mat>(y.data() + (y.size() - m * k), m, k);
}

FieldAlongCurve parallel_transport(const MetricField& metric, const Curve& curve, const Mat& W0,
                                   const GeodesicOptions& opts) {
  const int m = metric.dim();
  if (W0.rows() != m) throw Error(ErrorCode::InvalidArgument, "transported vectors have wrong dimension");
  const int k = static_cast<int>(W0.cols());
  auto rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = curve.position(t), v = curve.velocity(t);
    const Connection c = connection_unchecked(metric, x);
    dy.resize(m * k);
    for (int j = 0; j < k; ++j) dy.segment(j * m, m) = -c.apply(v, y.segment(j * m, m));
  };
  const auto& dom = metric.domain();
  auto inside = [&](const Vec&) { return true; };
  for (double s : {curve.t0, 0.5 * (curve.t0 + curve.t1), curve.t1})
    if (!dom.contains(curve.position(s))) throw Error(ErrorCode::DomainExit, "curve leaves the chart domain");
  Vec y0 = Eigen::Map<const Vec>(W0.data(), m * k);
  OdeResult r = integrate_dopri5(rhs, curve.t0, y0, curve.t1, opts.ode(), inside);
  if (r.status != OdeStatus::completed) throw Error(ErrorCode::StepFailure, r.message);
  FieldAlongCurve f;
  f.m = m;
  f.k = k;
  f.trajectory = std::move(r.trajectory);
  return f;
}

FieldAlongCurve parallel_transport(const GeodesicPath& path, const Mat& W0) {
  // Integrate jointly with the geodesic so the transport sees the exact flow.
  const int m = path.dim();
  if (W0.rows() != m) throw Error(ErrorCode::InvalidArgument, "transported vectors have wrong dimension");
  const int k = static_cast<int>(W0.cols());
  const MetricField& metric = path.metric;
  auto rhs = [&](double, const Vec& y, Vec& dy) {
    dy.resize(y.size());
    const Vec x = y.head(m), v = y.segment(m, m);
    const Connection c = connection_unchecked(metric, x);
    dy.head(m) = v;
    dy.segment(m, m) = -c.apply(v, v);
    for (int j = 0; j < k; ++j) dy.segment(2 * m + j * m, m) = -c.apply(v, y.segment(2 * m + j * m, m));
  };
  Vec y0(2 * m + m * k);
  y0 << path.x0, path.v0, Eigen::Map<const Vec>(W0.data(), m * k);
  const auto& dom = metric.domain();
  auto inside = [&](const Vec& y) { return dom.contains(y.head(m)); };
  OdeResult r = integrate_dopri5(rhs, 0.0, y0, path.t_end, path.options.ode(), inside);
  if (r.status == OdeStatus::domain_exit) throw Error(ErrorCode::DomainExit, "path leaves the chart domain");
  if (r.status != OdeStatus::completed) throw Error(ErrorCode::StepFailure, r.message);
  FieldAlongCurve f;
  f.m = m;
  f.k = k;
  f.trajectory = std::move(r.trajectory);
  return f;
}

LengthEnergy riem_length_energy(const GeodesicPath& path, const AuxiliaryRiemannian& g_R) {
  const int m = path.dim();
  static const Gauss5 rule;
  LengthEnergy le;
  for (const auto& s : path.trajectory.segments()) {
    const double h = s.h * s.len;
    for (int i = 0; i < Gauss5::n; ++i) {
      const Vec y = path.trajectory.eval(s.t0 + rule.x[i] * h);
      const Vec x = y.head(m), v = y.tail(m);
      const double qR = v.dot(g_R(x) * v);
      le.L_R += rule.w[i] * h * std::sqrt(std::max(0.0, qR));
      le.E_R += rule.w[i] * h * 0.5 * qR;
      le.E_g += rule.w[i] * h * 0.5 * v.dot(path.metric.g(x) * v);
    }
  }
  return le;
}

LengthEnergy length_energy(const MetricField& metric, const Curve& curve, const AuxiliaryRiemannian& g_R,
                           int pieces) {
  LengthEnergy le;
  le.L_R = integrate_composite<Gauss5>([&](double t) {
    const Vec v = curve.velocity(t);
    return std::sqrt(std::max(0.0, v.dot(g_R(curve.position(t)) * v)));
  }, curve.t0, curve.t1, pieces);
  le.E_R = integrate_composite<Gauss5>([&](double t) {
    const Vec v = curve.velocity(t);
    return 0.5 * v.dot(g_R(curve.position(t)) * v);
  }, curve.t0, curve.t1, pieces);
  le.E_g = integrate_composite<Gauss5>([&](double t) {
    const Vec v = curve.velocity(t);
    return 0.5 * v.dot(metric.g(curve.position(t)) * v);
  }, curve.t0, curve.t1, pieces);
  return le;
}

namespace {

struct Samples {
  std::vector<double> t;
  std::vector<Vec> x;
  std::vector<Vec> v;
};

Samples sample_path(const GeodesicPath& path, int n) {
  Samples s;
  const int m = path.dim();
  s.t.resize(n + 1);
  s.x.resize(n + 1);
  s.v.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    s.t[i] = path.t_end * i / n;
    const Vec y = path.trajectory.eval(s.t[i]);
    s.x[i] = y.head(m);
    s.v[i] = y.tail(m);
  }
  return s;
}

int sample_count(const GeodesicPath& path) {
  return std::clamp(static_cast<int>(8 * path.trajectory.segments().size()), 1000, 20000);
}

}  // namespace

SelfIntersections self_intersections(const GeodesicPath& path, double tol) {
  SelfIntersections out;
  const int m = path.dim();
  const auto& dom = path.metric.domain();
  const int n = sample_count(path);
  const Samples s = sample_path(path, n);
  double ds = 0.0, vmin = std::numeric_limits<double>::infinity();
  std::vector<double> arc(n + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    const double d = dom.displacement(s.x[i], s.x[i + 1]).norm();
    ds = std::max(ds, d);
    arc[i + 1] = arc[i] + d;
  }
  for (int i = 0; i <= n; ++i) vmin = std::min(vmin, s.v[i].norm());
  if (!(vmin > 0.0) || ds == 0.0) return out;  // constant curve
  const double cell = std::max(10.0 * tol, 1.01 * ds);

  // Spatial hash on wrapped coordinates; periodic axes tile exactly.
  std::vector<double> csize(m, cell);
  std::vector<long> ncell(m, 0);
  for (int a = 0; a < m; ++a)
    if (dom.periodic(a)) {
      ncell[a] = std::max<long>(1, static_cast<long>(std::floor(dom.period[a] / cell)));
      csize[a] = dom.period[a] / static_cast<double>(ncell[a]);
    }
  auto key_of = [&](const Vec& x) {
    const Vec w = dom.wrap(x);
    std::vector<long> k(m);
    for (int a = 0; a < m; ++a) {
      k[a] = static_cast<long>(std::floor((w[a] - (dom.periodic(a) ? dom.lower[a] : 0.0)) / csize[a]));
      if (dom.periodic(a)) k[a] = ((k[a] % ncell[a]) + ncell[a]) % ncell[a];
    }
    return k;
  };
  std::map<std::vector<long>, std::vector<int>> grid;
  for (int i = 0; i <= n; ++i) grid[key_of(s.x[i])].push_back(i);

  std::vector<std::pair<int, int>> cand;
  int noff = 1;
  for (int a = 0; a < m; ++a) noff *= 3;
  for (int i = 0; i <= n; ++i) {
    const auto k0 = key_of(s.x[i]);
    std::set<std::vector<long>> seen;
    for (int o = 0; o < noff; ++o) {
      auto k = k0;
      int code = o;
      for (int a = 0; a < m; ++a) {
        k[a] += code % 3 - 1;
        code /= 3;
        if (dom.periodic(a)) k[a] = ((k[a] % ncell[a]) + ncell[a]) % ncell[a];
      }
      if (!seen.insert(k).second) continue;
      auto it = grid.find(k);
      if (it == grid.end()) continue;
      for (int j : it->second) {
        if (j <= i) continue;
        if (arc[j] - arc[i] <= 3.0 * cell) continue;
        if (dom.displacement(s.x[i], s.x[j]).norm() <= cell) cand.emplace_back(i, j);
      }
    }
  }

  // Gauss-Newton refinement of each candidate on F(t,s) = x(s) - x(t).
  std::vector<std::pair<double, double>> found;
  const double T = path.t_end;
  for (auto [i, j] : cand) {
    double t = s.t[i], u = s.t[j];
    double dist = 0.0;
    for (int it = 0; it < 30; ++it) {
      const Vec yt = path.trajectory.eval(t), yu = path.trajectory.eval(u);
      const Vec F = dom.displacement(yt.head(m), yu.head(m));
      dist = F.norm();
      if (dist <= 1e-3 * tol) break;
      Mat J(m, 2);
      J.col(0) = -yt.tail(m);
      J.col(1) = yu.tail(m);
      const Vec step = J.completeOrthogonalDecomposition().solve(-F);
      t = std::clamp(t + step[0], 0.0, T);
      u = std::clamp(u + step[1], 0.0, T);
    }
    if (dist > tol) continue;
    if (std::abs(u - t) * vmin <= 3.0 * cell) continue;
    found.emplace_back(std::min(t, u), std::max(t, u));
  }
  if (found.empty()) return out;
  std::sort(found.begin(), found.end());

  // Single-linkage clustering in parameter space.
  const double dt = 2.0 * ds / vmin + 10.0 * tol / vmin;
  std::vector<std::vector<std::pair<double, double>>> clusters;
  for (const auto& p : found) {
    bool merged = false;
    for (auto& c : clusters) {
      for (const auto& q : c)
        if (std::abs(p.first - q.first) <= dt && std::abs(p.second - q.second) <= dt) {
          c.push_back(p);
          merged = true;
          break;
        }
      if (merged) break;
    }
    if (!merged) clusters.push_back({p});
  }
  for (const auto& c : clusters) {
    double tmin = c.front().first, tmax = c.front().first;
    for (const auto& p : c) {
      tmin = std::min(tmin, p.first);
      tmax = std::max(tmax, p.first);
    }
    if ((tmax - tmin) > 3.0 * dt) {
      out.infinite_family = true;
      out.pairs.clear();
      return out;
    }
    out.pairs.push_back(c[c.size() / 2]);
  }
  return out;
}

PeriodicityVerdict detect_periodicity(const GeodesicPath& path, double tol) {
  PeriodicityVerdict pv;
  const int m = path.dim();
  const auto& dom = path.metric.domain();
  const double vn = path.v0.norm();
  if (!(vn > 0.0) || path.t_end <= 0.0) return pv;
  const Vec x0 = path.x0, v0 = path.v0;
  auto phase = [&](double t) {
    const Vec y = path.trajectory.eval(t);
    const Vec dx = dom.displacement(x0, y.head(m));
    const Vec dv = (y.tail(m) - v0) / vn;
    return dx.squaredNorm() + dv.squaredNorm();
  };
  const int n = sample_count(path);
  const double T = path.t_end;
  std::vector<double> D(n + 1);
  for (int i = 0; i <= n; ++i) D[i] = phase(T * i / n);
  const double leave = std::max(1e3 * tol, 1e-6);
  int start = 0;
  while (start <= n && std::sqrt(D[start]) <= leave) ++start;
  if (start > n) return pv;

  for (int i = start; i <= n; ++i) {
    const bool left_ok = D[i] <= D[i - 1];
    const bool right_ok = (i == n) || D[i] <= D[i + 1];
    if (!left_ok || !right_ok) continue;
    if (std::sqrt(D[i]) > std::max(100.0 * tol, 50.0 * (T / n) * (1.0 + vn))) continue;
    // Golden-section search on the bracket, then Newton on the derivative.
    double a = T * (i - 1) / n, b = std::min(T, T * (i + 1) / n);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = phase(c), fd = phase(d);
    for (int it = 0; it < 80; ++it) {
      if (fc < fd) {
        b = d; d = c; fd = fc;
        c = b - gr * (b - a); fc = phase(c);
      } else {
        a = c; c = d; fc = fd;
        d = a + gr * (b - a); fd = phase(d);
      }
    }
    double w = 0.5 * (a + b);
    if (i == n && phase(T) <= phase(w)) w = T;
    for (int it = 0; it < 5 && w < T; ++it) {
      const double h = 1e-5 * std::max(1.0, w);
      const double d1 = (phase(w + h) - phase(w - h)) / (2 * h);
      const double d2 = (phase(w + h) - 2 * phase(w) + phase(w - h)) / (h * h);
      if (!(d2 > 0)) break;
      const double nw = std::clamp(w - d1 / d2, a, std::min(b, T));
      if (phase(nw) > phase(w)) break;
      w = nw;
    }
    const double r = std::sqrt(phase(w));
    if (r > tol) continue;
    // Verify the shift symmetry along the whole span.
    double res = r;
    const int checks = 64;
    for (int q = 0; q <= checks; ++q) {
      const double t = (T - w) * q / checks;
      const Vec ya = path.trajectory.eval(t), yb = path.trajectory.eval(t + w);
      const double e = std::sqrt(dom.displacement(ya.head(m), yb.head(m)).squaredNorm() +
                                 ((yb.tail(m) - ya.tail(m)) / vn).squaredNorm());
      res = std::max(res, e);
    }
    if (res > 10.0 * tol) continue;
    pv.periodic = true;
    pv.omega = w;
    pv.k = static_cast<int>(std::floor(T / w + 1e-6));
    pv.residual = res;
    return pv;
  }
  return pv;
}

TurningBound turning_bound_check(const MetricField& metric, const GeodesicPath& path, const ChartDomain& K) {
  const int m = metric.dim();
  for (int a = 0; a < m; ++a)
    if (!std::isfinite(K.lower[a]) || !std::isfinite(K.upper[a]))
      throw Error(ErrorCode::InvalidArgument, "compact box needs finite bounds");
  const auto nodes = path.nodes();
  auto in_box = [&](const Vec& x) {
    for (int a = 0; a < m; ++a) {
      double xa = x[a];
      if (K.periodic(a)) xa = K.wrap(x)[a];
      if (xa < K.lower[a] - 1e-12 || xa > K.upper[a] + 1e-12) return false;
    }
    return true;
  };
  auto gamma_norm = [&](const Vec& x) {
    const Connection c = connection_unchecked(metric, x);
    double s = 0.0;
    for (const auto& g : c.gamma) s += g.squaredNorm();
    return std::sqrt(s);  // bounds the operator norm of the bilinear map
  };
  double kappa = 0.0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Vec x = path.trajectory.state_at_node(i).head(m);
    if (!in_box(x)) throw Error(ErrorCode::DomainExit, "path leaves the compact box");
    kappa = std::max(kappa, gamma_norm(x));
  }
  const int per_axis = m <= 2 ? 9 : (m == 3 ? 7 : 5);
  long total = 1;
  for (int a = 0; a < m; ++a) total *= per_axis;
  for (long idx = 0; idx < total; ++idx) {
    Vec x(m);
    long code = idx;
    for (int a = 0; a < m; ++a) {
      const int q = static_cast<int>(code % per_axis);
      code /= per_axis;
      x[a] = K.lower[a] + (K.upper[a] - K.lower[a]) * q / (per_axis - 1);
    }
    if (metric.domain().contains(x)) kappa = std::max(kappa, gamma_norm(x));
  }
  TurningBound tb;
  tb.kappa = kappa;
  tb.c = 2.0 * (kappa + 1.0);
  const Vec va = path.v(0.0), vb = path.v(path.t_end);
  if (va.norm() == 0.0 || vb.norm() == 0.0) {
    tb.holds = true;
    return tb;
  }
  tb.lhs = (vb / vb.norm() - va / va.norm()).norm();
  double speed_int = 0.0;
  static const Gauss5 rule;
  for (const auto& s : path.trajectory.segments()) {
    const double h = s.h * s.len;
    for (int i = 0; i < Gauss5::n; ++i) speed_int += rule.w[i] * h * path.v(s.t0 + rule.x[i] * h).norm();
  }
  tb.rhs = tb.c * speed_int;
  tb.holds = tb.lhs <= tb.rhs;
  return tb;
}

}  // namespace geovar
