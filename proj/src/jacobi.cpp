#include "geovar/jacobi.hpp"

#include "geovar/gec.hpp"
#include "geovar/quadrature.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace geovar {

Mat JacobiBundle::J(double t) const {
  const Vec y = trajectory.eval(t);
  Mat out(m, k);
  for (int j = 0; j < k; ++j) out.col(j) = y.segment(2 * m + 2 * m * j, m);
  return out;
}

Mat JacobiBundle::Jdot(double t) const {
  const Vec y = trajectory.eval(t);
  Mat out(m, k);
  for (int j = 0; j < k; ++j) out.col(j) = y.segment(3 * m + 2 * m * j, m);
  return out;
}

Mat JacobiBundle::DJ(double t) const {
  const Vec y = trajectory.eval(t);
  const Connection c = connection_unchecked(metric, y.head(m));
  const Vec v = y.segment(m, m);
  Mat out(m, k);
  for (int j = 0; j < k; ++j)
    out.col(j) = y.segment(3 * m + 2 * m * j, m) + c.apply(v, y.segment(2 * m + 2 * m * j, m));
  return out;
}

Mat JacobiBundle::phase(double t) const {
  Mat out(2 * m, k);
  out.topRows(m) = J(t);
  out.bottomRows(m) = DJ(t);
  return out;
}

JacobiBundle propagate_bundle(const GeodesicPath& path, const Mat& J0, const Mat& DJ0, double T) {
  const int m = path.dim();
  if (J0.rows() != m || DJ0.rows() != m || J0.cols() != DJ0.cols())
    throw Error(ErrorCode::InvalidArgument, "Jacobi initial data has wrong shape");
  const int k = static_cast<int>(J0.cols());
  if (T < 0) T = path.t_end;
  const MetricField& metric = path.metric;
  const Connection c0 = connection_unchecked(metric, path.x0);
  Vec y0(2 * m + 2 * m * k);
  y0.head(m) = path.x0;
  y0.segment(m, m) = path.v0;
  for (int j = 0; j < k; ++j) {
    y0.segment(2 * m + 2 * m * j, m) = J0.col(j);
    y0.segment(3 * m + 2 * m * j, m) = DJ0.col(j) - c0.apply(path.v0, J0.col(j));
  }
  auto rhs = [&metric, m, k](double, const Vec& y, Vec& dy) {
    dy.resize(y.size());
    const Vec x = y.head(m), v = y.segment(m, m);
    const Connection c = connection_unchecked(metric, x);
    const auto dG = christoffel_derivatives_unchecked(metric, x, c);
    dy.head(m) = v;
    dy.segment(m, m) = -c.apply(v, v);
    // Precompute the matrices acting on J and J'.
    Mat A(m, m), Bm(m, m);
    for (int p = 0; p < m; ++p) {
      Vec col(m);
      for (int i = 0; i < m; ++i) col[i] = v.dot(dG[p][i] * v);
      A.col(p) = -col;
    }
    for (int i = 0; i < m; ++i) Bm.row(i) = -2.0 * (c.gamma[i] * v).transpose();
    for (int j = 0; j < k; ++j) {
      const auto Jj = y.segment(2 * m + 2 * m * j, m);
      const auto Jd = y.segment(3 * m + 2 * m * j, m);
      dy.segment(2 * m + 2 * m * j, m) = Jd;
      dy.segment(3 * m + 2 * m * j, m) = A * Jj + Bm * Jd;
    }
  };
  OdeResult r = integrate_dopri5(rhs, 0.0, y0, T, path.options.ode());
  if (r.status != OdeStatus::completed) throw Error(ErrorCode::StepFailure, "Jacobi propagation failed: " + r.message);
  JacobiBundle b;
  b.metric = metric;
  b.trajectory = std::move(r.trajectory);
  b.m = m;
  b.k = k;
  b.t_end = T;
  return b;
}

JacobiSolution propagate_jacobi(const MetricField& metric, const GeodesicPath& path, const Vec& J0, const Vec& DJ0) {
  if (metric.dim() != path.dim()) throw Error(ErrorCode::InvalidArgument, "metric and path dimensions differ");
  JacobiSolution s;
  s.bundle = propagate_bundle(path, J0, DJ0);
  s.J0 = J0;
  s.DJ0 = DJ0;
  return s;
}

double jacobi_residual(const JacobiSolution& sol, int samples) {
  const double T = sol.t_end();
  const double h = 1e-4 * std::max(1.0, T);
  double worst = 0.0;
  for (int i = 1; i < samples; ++i) {
    const double t = T * i / samples;
    if (t - h < 0 || t + h > T) continue;
    const Vec D2 = (sol.DJ(t + h) - sol.DJ(t - h)) / (2 * h);
    // D of DJ along the curve: (DJ)' + Gamma(v, DJ)
    const Vec x = sol.x(t), v = sol.v(t);
    const Connection c = connection_unchecked(sol.bundle.metric, x);
    const Vec cov = D2 + c.apply(v, sol.DJ(t));
    const CurvatureValue cv = curvature_unchecked(sol.bundle.metric, x);
    const Vec rhs = cv.apply(v, sol.J(t), v);
    worst = std::max(worst, (cov - rhs).norm());
  }
  return worst;
}

namespace {

Vec singular_values_of(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues();  // descending
}

}  // namespace

std::vector<ConjugatePoint> conjugate_points(const MetricField& metric, const GeodesicPath& path,
                                             double rel_threshold) {
  const int m = path.dim();
  if (metric.dim() != m) throw Error(ErrorCode::InvalidArgument, "metric and path dimensions differ");
  const double T = path.t_end;
  JacobiBundle b = propagate_bundle(path, Mat::Zero(m, m), Mat::Identity(m, m), T);
  // A(t)/t stays regular at t = 0.
  auto scaled = [&](double t) -> Mat { return b.J(t) / t; };
  auto det_at = [&](double t) { return scaled(t).determinant(); };
  auto smin = [&](double t) {
    const Vec s = singular_values_of(scaled(t));
    return s[s.size() - 1] / std::max(1e-300, s[0]);
  };
  const int n = std::clamp(static_cast<int>(20 * b.trajectory.segments().size()), 400, 20000);
  const double t_lo = T * 1e-6;
  std::vector<double> ts(n + 1), dv(n + 1), sv(n + 1);
  for (int i = 0; i <= n; ++i) {
    ts[i] = t_lo + (T - t_lo) * i / n;
    dv[i] = det_at(ts[i]);
    sv[i] = smin(ts[i]);
  }
  std::vector<double> cands;
  for (int i = 0; i < n; ++i) {
    if (dv[i] == 0.0) {
      cands.push_back(ts[i]);
      continue;
    }
    if ((dv[i] < 0) != (dv[i + 1] < 0) && dv[i + 1] != 0.0) {
      // Bisection on the sign change of the determinant.
      double a = ts[i], c = ts[i + 1], fa = dv[i];
      for (int it = 0; it < 100 && c - a > 1e-15 * std::max(1.0, c); ++it) {
        const double mid = 0.5 * (a + c);
        const double fm = det_at(mid);
        if ((fm < 0) == (fa < 0)) {
          a = mid;
          fa = fm;
        } else {
          c = mid;
        }
      }
      cands.push_back(0.5 * (a + c));
    }
  }
  // Even-multiplicity zeros do not change sign: local minima of the smallest singular value.
  for (int i = 1; i <= n; ++i) {
    const bool right = (i == n) || sv[i] <= sv[i + 1];
    if (!(sv[i] <= sv[i - 1] && right)) continue;
    if (sv[i] > 1e-2) continue;
    double a = ts[i - 1], c = (i == n) ? ts[n] : ts[i + 1];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = c - gr * (c - a), x2 = a + gr * (c - a);
    double f1 = smin(x1), f2 = smin(x2);
    for (int it = 0; it < 100 && c - a > 1e-15 * std::max(1.0, c); ++it) {
      if (f1 < f2) {
        c = x2; x2 = x1; f2 = f1;
        x1 = c - gr * (c - a); f1 = smin(x1);
      } else {
        a = x1; x1 = x2; f1 = f2;
        x2 = a + gr * (c - a); f2 = smin(x2);
      }
    }
    double t = 0.5 * (a + c);
    if (i == n && smin(T) < smin(t)) t = T;
    cands.push_back(t);
  }
  std::sort(cands.begin(), cands.end());
  std::vector<ConjugatePoint> out;
  for (double t : cands) {
    const Vec s = singular_values_of(scaled(t));
    const double rel = s[s.size() - 1] / std::max(1e-300, s[0]);
    if (rel > rel_threshold) continue;
    if (!out.empty() && std::abs(out.back().t - t) <= 1e-7 * std::max(1.0, T)) {
      if (rel < out.back().smallest_singular_value) {
        out.back().t = t;
        out.back().smallest_singular_value = rel;
      }
      continue;
    }
    ConjugatePoint cp;
    cp.t = t;
    cp.smallest_singular_value = rel;
    for (int i = 0; i < s.size(); ++i)
      if (s[i] <= rel_threshold * s[0]) ++cp.multiplicity;
    out.push_back(cp);
  }
  return out;
}

MonodromyMap monodromy(const MetricField& metric, const GeodesicPath& path, double rel_threshold,
                       double closure_tol) {
  const int m = path.dim();
  if (metric.dim() != m) throw Error(ErrorCode::InvalidArgument, "metric and path dimensions differ");
  const double T = path.t_end;
  if (!path.complete()) throw Error(ErrorCode::NotPeriodic, "path did not complete");
  const auto& dom = metric.domain();
  const Vec yT = path.state(T);
  const double vn = std::max(1e-300, path.v0.norm());
  const double closure = std::sqrt(dom.displacement(path.x0, yT.head(m)).squaredNorm() +
                                   ((yT.tail(m) - path.v0) / vn).squaredNorm());
  if (closure > closure_tol) throw Error(ErrorCode::NotPeriodic, "path does not close in phase space");
  MonodromyMap mm;
  mm.T = T;
  mm.periodicity = detect_periodicity(path, std::max(closure_tol, 10 * closure));
  Mat J0 = Mat::Zero(m, 2 * m), DJ0 = Mat::Zero(m, 2 * m);
  J0.leftCols(m) = Mat::Identity(m, m);
  DJ0.rightCols(m) = Mat::Identity(m, m);
  mm.fundamental = propagate_bundle(path, J0, DJ0, T);
  mm.Phi = mm.fundamental.phase(T);
  const Mat D = mm.Phi - Mat::Identity(2 * m, 2 * m);
  Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeFullV);
  const Vec s = svd.singularValues();
  mm.singular_values = s.reverse();
  const double scale = std::max(1.0, singular_values_of(mm.Phi)[0]);
  int d = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] <= rel_threshold * scale) ++d;
  mm.fixed_dim = d;
  mm.fixed_space = svd.matrixV().rightCols(d);
  Vec e(2 * m);
  e << path.v0, Vec::Zero(m);
  mm.tangent_residual = (mm.Phi * e - e).norm() / vn;
  return mm;
}

FieldOnCurve piecewise_linear_field(const std::vector<Vec>& values, double t0, double t1) {
  if (values.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two node values");
  const int n = static_cast<int>(values.size()) - 1;
  const double h = (t1 - t0) / n;
  auto locate = [n, h, t0](double t) {
    int i = static_cast<int>(std::floor((t - t0) / h));
    return std::clamp(i, 0, n - 1);
  };
  FieldOnCurve f;
  f.value = [values, locate, h, t0](double t) {
    const int i = locate(t);
    const double s = (t - (t0 + i * h)) / h;
    return Vec((1 - s) * values[i] + s * values[i + 1]);
  };
  f.derivative = [values, locate, h](double t) {
    const int i = locate(t);
    return Vec((values[i + 1] - values[i]) / h);
  };
  return f;
}

double first_variation(const MetricField& metric, const Curve& curve, const Gec& gec, const FieldOnCurve& v,
                       double tol, int pieces) {
  const int m = metric.dim();
  const Vec xa = curve.position(curve.t0), xb = curve.position(curve.t1);
  const auto u = gec.locate(metric.domain(), xa, xb);
  if (!u) throw Error(ErrorCode::ConstraintViolated, "curve endpoints are not on the endpoint manifold");
  const Mat B = gec.tangent(*u);
  Vec ends(2 * m);
  ends << v.value(curve.t0), v.value(curve.t1);
  double resid = ends.norm();
  if (B.cols() > 0) resid = (ends - B * B.completeOrthogonalDecomposition().solve(ends)).norm();
  if (resid > tol * std::max(1.0, ends.norm()))
    throw Error(ErrorCode::ConstraintViolated, "variation field violates the linearized endpoint condition");
  // Integrate panel by panel; break points of piecewise-linear fields are
  // resolved by using many panels.
  return integrate_composite<Gauss5>([&](double t) {
    const Vec x = curve.position(t), xd = curve.velocity(t);
    const Connection c = connection_unchecked(metric, x);
    const Vec Dv = v.derivative(t) + c.apply(xd, v.value(t));
    return xd.dot(c.g * Dv);
  }, curve.t0, curve.t1, pieces);
}

}  // namespace geovar
