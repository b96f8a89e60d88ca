#include "geovar/perturb.hpp"

#include "geovar/builtins.hpp"
#include "geovar/parallel.hpp"
#include "geovar/quadrature.hpp"
#include "geovar/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace geovar {

namespace {

// Quintic smoothstep on [0, 1].
double smoothstep(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (x * (6.0 * x - 15.0) + 10.0);
}

// Radial cutoff: 1 on [0, 1/2], 0 from 1 on.
double chi_radial(double q) { return smoothstep(2.0 * (1.0 - q)); }

Vec perp(const Vec& w, const Vec& v) {
  const double vv = v.squaredNorm();
  return vv > 0.0 ? Vec(w - (w.dot(v) / vv) * v) : w;
}

double sampled_sup(const std::function<Vec(double)>& W, double t0, double t1, int n) {
  double s = 0.0;
  for (int i = 0; i <= n; ++i) s = std::max(s, W(t0 + (t1 - t0) * i / n).norm());
  return s;
}

}  // namespace

EffectiveField plain_field(std::function<Vec(double)> W, double t0, double t1, int samples) {
  EffectiveField f;
  f.t0 = t0;
  f.t1 = t1;
  f.W = std::move(W);
  f.sup_norm = sampled_sup(f.W, t0, t1, samples);
  return f;
}

double tangent_margin(const GeodesicPath& path, const EffectiveField& W, double t) {
  if (!(W.sup_norm > 0.0)) return 0.0;
  return perp(W(t), path.v(t)).norm() / W.sup_norm;
}

EffectiveField iterate_sum_field(const JacobiSolution& J, const GeodesicPath& path, const PeriodicityVerdict& pv,
                                 double tol) {
  const double T = path.t_end;
  const int n = 200;
  const double supJ = sampled_sup([&](double t) { return J.J(t); }, 0.0, T, 4 * n);
  auto sum_field = [&J, T](double omega, int terms) {
    return [&J, T, omega, terms](double t) {
      Vec s = J.J(std::min(t, T));
      for (int i = 1; i < terms; ++i) s += J.J(std::min(t + i * omega, T));
      return s;
    };
  };
  auto tangent_everywhere = [&](const EffectiveField& f) {
    double worst = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = f.t0 + (f.t1 - f.t0) * i / n;
      worst = std::max(worst, perp(f(t), path.v(t)).norm());
    }
    return worst <= tol * supJ;
  };
  if (!pv.periodic || pv.k < 1 || !(pv.omega > 0.0)) {
    EffectiveField f = plain_field([&J](double t) { return J.J(t); }, 0.0, T, n);
    if (tangent_everywhere(f)) throw Error(ErrorCode::StronglyDegenerateSuspected, "field is tangent everywhere");
    return f;
  }
  const double omega = pv.omega;
  const int k = pv.k;
  const double tstar = T - k * omega;
  EffectiveField f;
  f.omega = omega;
  if (tstar <= 1e-6 * std::max(1.0, T)) {
    // Closed k-fold iterate: one window, k terms.
    f = plain_field(sum_field(omega, k), 0.0, omega, n);
    f.omega = omega;
    f.terms = k;
    if (tangent_everywhere(f))
      throw Error(ErrorCode::StronglyDegenerateSuspected, "iterate sum of J is tangent or zero everywhere");
    return f;
  }
  // Portion of a closed orbit with distinct endpoints: parity trick.
  EffectiveField w1 = plain_field(sum_field(omega, k + 1), 0.0, tstar, n);
  w1.omega = omega;
  w1.terms = k + 1;
  w1.window = 1;
  if (!tangent_everywhere(w1)) return w1;
  EffectiveField w2 = plain_field(sum_field(omega, k), tstar, omega, n);
  w2.omega = omega;
  w2.terms = k;
  w2.window = 2;
  if (!tangent_everywhere(w2)) return w2;
  throw Error(ErrorCode::StronglyDegenerateSuspected, "both parity windows give tangent sums");
}

std::optional<PerturbInterval> try_interval(const GeodesicPath& path, const EffectiveField& W, double rho, double t0,
                                            double t1) {
  if (!(rho > 0.0) || !(t1 > t0)) return std::nullopt;
  const ChartDomain& chart = path.metric.domain();
  PerturbInterval I;
  I.t0 = t0;
  I.t1 = t1;
  I.periodic = W.omega > 0.0;
  I.range_t0 = 0.0;
  I.range_t1 = I.periodic ? W.omega : path.t_end;
  const int nI = 200;
  std::vector<Vec> core(nI + 1);
  double margin = std::numeric_limits<double>::infinity(), vmin = margin, vmax = 0.0;
  for (int i = 0; i <= nI; ++i) {
    const double t = t0 + (t1 - t0) * i / nI;
    core[i] = path.x(t);
    const double sp = path.v(t).norm();
    vmin = std::min(vmin, sp);
    vmax = std::max(vmax, sp);
    if (i % 5 == 0) margin = std::min(margin, tangent_margin(path, W, t));
  }
  if (!(margin > 1e-3) || !(vmin > 0.0)) return std::nullopt;
  I.margin = margin;
  I.collar = 2.5 * rho / vmin;
  const double ds = (t1 - t0) / nI * vmax;
  const double P = I.range_t1 - I.range_t0;
  auto param_gap = [&](double t) {
    if (t >= t0 && t <= t1) return 0.0;
    double d = t < t0 ? t0 - t : t - t1;
    if (I.periodic) d = std::min(d, t < t0 ? (t + P) - t1 : t0 - (t - P));
    return std::max(d, 0.0);
  };
  const int nR = 2000;
  double clearance = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= nR; ++j) {
    const double t = I.range_t0 + P * j / nR;
    if (param_gap(t) <= I.collar) continue;
    const Vec x = path.x(t);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& c : core) best = std::min(best, chart.displacement(c, x).norm());
    clearance = std::min(clearance, best - ds);
  }
  I.clearance = clearance;
  if (clearance < 2.0 * rho) return std::nullopt;
  return I;
}

PerturbInterval select_interval(const GeodesicPath& path, const EffectiveField& W, double rho,
                                double length_fraction) {
  const double w0 = W.t0, w1 = W.t1, len = w1 - w0;
  if (!(len > 0.0)) throw Error(ErrorCode::NoValidInterval, "empty window");
  for (int halving = 0; halving < 6; ++halving) {
    const double L = len * length_fraction / (1 << halving);
    const int nc = 65;
    struct Cand {
      double center, margin;
    };
    std::vector<Cand> cands;
    for (int i = 0; i < nc; ++i) {
      const double c = w0 + L / 2 + (len - L) * i / (nc - 1);
      double mg = std::numeric_limits<double>::infinity();
      for (int q = 0; q <= 16; ++q) mg = std::min(mg, tangent_margin(path, W, c - L / 2 + L * q / 16));
      cands.push_back({c, mg});
    }
    const double mid = 0.5 * (w0 + w1);
    std::stable_sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
      if (std::abs(a.margin - b.margin) > 1e-9) return a.margin > b.margin;
      return std::abs(a.center - mid) < std::abs(b.center - mid);
    });
    for (const auto& c : cands) {
      if (!(c.margin > 1e-3)) break;
      if (auto I = try_interval(path, W, rho, c.center - L / 2, c.center + L / 2)) return *I;
    }
  }
  throw Error(ErrorCode::NoValidInterval,
              "no interval keeps the field off the tangent and the tube clear of the rest of the curve");
}

// ---------------------------------------------------------------------------
// Bump

double PerturbationBump::wrap_s(double s) const {
  if (!interval.periodic) return std::clamp(s, 0.0, path_.t_end);
  const double P = interval.range_t1 - interval.range_t0;
  double r = std::fmod(s - interval.range_t0, P);
  if (r < 0) r += P;
  return interval.range_t0 + r;
}

double PerturbationBump::chi_long(double s) const {
  const double a = interval.t0, b = interval.t1, r = ramp * (b - a);
  if (s <= a || s >= b) return 0.0;
  return smoothstep((s - a) / r) * smoothstep((b - s) / r);
}

Vec PerturbationBump::core(double s) const { return path_.x(wrap_s(s)); }
Vec PerturbationBump::core_velocity(double s) const { return path_.v(wrap_s(s)); }

bool PerturbationBump::near(const Vec& x, double pad) const {
  if (zero_) return false;
  for (int a = 0; a < m_; ++a) {
    const double mid = 0.5 * (lo_[a] + hi_[a]), half = 0.5 * (hi_[a] - lo_[a]) + rho + pad;
    double d = x[a] - mid;
    if (chart_.periodic(a)) {
      const double P = chart_.period[a];
      if (half >= 0.5 * P) continue;
      d -= P * std::round(d / P);
    }
    if (std::abs(d) > half) return false;
  }
  return true;
}

double PerturbationBump::wrapped_diff(const Vec& x, int j, int a) const {
  double d = x[a] - X_[j * m_ + a];
  const double P = periods_[a];
  if (P > 0.0) d -= P * std::round(d / P);
  return d;
}

// Cubic Hermite core on segment j at local coordinate r in [0, 1]: position
// offset from x (wrapped), first and second derivatives in s.
void PerturbationBump::hermite(const Vec& x, int j, double r, Vec& d, Vec& x1, Vec& x2) const {
  const double r2 = r * r, r3 = r2 * r, h = ds_;
  const double h00 = 2 * r3 - 3 * r2 + 1, h10 = r3 - 2 * r2 + r, h01 = -2 * r3 + 3 * r2, h11 = r3 - r2;
  const double d00 = 6 * r2 - 6 * r, d10 = 3 * r2 - 4 * r + 1, d01 = -6 * r2 + 6 * r, d11 = 3 * r2 - 2 * r;
  const double e00 = 12 * r - 6, e10 = 6 * r - 4, e01 = -12 * r + 6, e11 = 6 * r - 2;
  for (int a = 0; a < m_; ++a) {
    const double p0 = X_[j * m_ + a], p1 = X_[(j + 1) * m_ + a];
    const double v0 = V_[j * m_ + a], v1 = V_[(j + 1) * m_ + a];
    const double pos = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1;
    double dd = x[a] - pos;
    if (periods_[a] > 0.0) dd -= periods_[a] * std::round(dd / periods_[a]);
    d[a] = dd;
    x1[a] = (d00 * p0 + d01 * p1) / h + d10 * v0 + d11 * v1;
    x2[a] = (e00 * p0 + e01 * p1) / (h * h) + (e10 * v0 + e11 * v1) / h;
  }
}

PerturbationBump::TubePoint PerturbationBump::locate(const Vec& x) const {
  TubePoint tp;
  if (!near(x)) return tp;
  const int n = static_cast<int>(s_.size());
  auto d2 = [&](int j) {
    double s = 0.0;
    for (int a = 0; a < m_; ++a) {
      const double d = wrapped_diff(x, j, a);
      s += d * d;
    }
    return s;
  };
  // Finite-difference stencils hit nearby points in a row; reuse the last foot.
  struct Hint {
    std::uint64_t owner = 0;
    Vec x;
    int best = 0;
    double s = 0.0;
  };
  thread_local Hint hint;
  const bool hinted = id_ != 0 && hint.owner == id_ && hint.x.size() == x.size() &&
                      (hint.x - x).lpNorm<Eigen::Infinity>() < 0.25 * spacing_;
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  int lo = 0, hi = n - 1;
  if (hinted) {
    lo = hi = best = hint.best;
    bd = 0.0;
  }
  // Coarse-to-fine nearest sample; the tube is embedded, so the coarse pass
  // cannot lock onto a far branch that is still within reach.
  for (int stride : {32, 4, 1}) {
    if (hinted) break;
    for (int j = lo; j <= hi; j += stride) {
      const double d = d2(j);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    lo = std::max(0, best - stride);
    hi = std::min(n - 1, best + stride);
  }
  if (std::sqrt(bd) > rho + spacing_) return tp;
  // Newton on <x - core(s), core'(s)> = 0 over the Hermite core.
  double s = hinted ? hint.s : s_[best];
  const double smax = s_.back();
  thread_local Vec d, x1, x2;
  d.resize(m_);
  x1.resize(m_);
  x2.resize(m_);
  bool converged = false;
  for (int it = 0; it < 30; ++it) {
    const int j = std::clamp(static_cast<int>(std::floor((s - ext0_) / ds_)), 0, n - 2);
    hermite(x, j, (s - s_[j]) / ds_, d, x1, x2);
    const double f = d.dot(x1), fp = -x1.squaredNorm() + d.dot(x2);
    if (!(fp < 0.0)) break;
    const double ns = std::clamp(s - f / fp, ext0_, smax);
    const double step = ns - s;
    s = ns;
    if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(s))) {
      converged = true;
      break;
    }
  }
  const int j = std::clamp(static_cast<int>(std::floor((s - ext0_) / ds_)), 0, n - 2);
  hermite(x, j, (s - s_[j]) / ds_, d, x1, x2);
  if (!converged) converged = std::abs(d.dot(x1)) <= 1e-12 * std::max(1.0, d.norm()) * x1.norm();
  if (!converged) return tp;
  hint.owner = id_;
  hint.x = x;
  hint.best = j;
  hint.s = s;
  tp.s = s;
  tp.y = d;
  tp.inside = s > interval.t0 && s < interval.t1 && d.norm() < rho;
  return tp;
}

Mat PerturbationBump::h(const Vec& x) const {
  const TubePoint tp = locate(x);
  if (!tp.inside) return Mat::Zero(m_, m_);
  const double cl = chi_long(tp.s);
  if (cl == 0.0) return Mat::Zero(m_, m_);
  const double q = tp.y.norm() / rho;
  const double cr = chi_radial(q);
  if (cr == 0.0) return Mat::Zero(m_, m_);
  const Vec n = perp(W_(tp.s), core_velocity(tp.s));
  const double nn2 = n.squaredNorm();
  const double lambda_over_n = tp.y.dot(n) / nn2;  // lambda / |n|
  return (cl * cr * lambda_over_n) * K_(tp.s);
}

Mat PerturbationBump::covariant_derivative(const MetricField& metric, const Vec& x, const Vec& w,
                                           double step) const {
  const double wn = w.norm();
  if (wn == 0.0) return Mat::Zero(m_, m_);
  const double e = step * std::max(1.0, max_abs(x)) / wn;
  const Mat D = (h(x + e * w) - h(x - e * w)) / (2.0 * e);
  const Mat hx = h(x);
  if (hx.isZero(0.0)) return D;
  const Connection c = connection_unchecked(metric, x);
  Mat G(m_, m_);  // G(q, a) = Gamma^q_{pa} w^p
  for (int q = 0; q < m_; ++q) G.row(q) = (c.gamma[q] * w).transpose();
  return D - G.transpose() * hx - hx * G;
}

PerturbationBump build_bump(const MetricField& metric, const GeodesicPath& path, const EffectiveField& W,
                            const PerturbInterval& I0, double rho, std::function<Mat(double)> K) {
  const int m = path.dim();
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "tube radius must be positive");
  const auto I = try_interval(path, W, rho, I0.t0, I0.t1);
  if (!I) throw Error(ErrorCode::TubeTooWide, "tube around the interval meets another part of the curve");
  PerturbationBump b;
  b.m_ = m;
  b.chart_ = metric.domain();
  for (int a = 0; a < m; ++a) b.periods_.push_back(b.chart_.periodic(a) ? b.chart_.period[a] : 0.0);
  b.path_ = path;
  b.interval = *I;
  b.rho = rho;
  b.W_ = W.W;
  b.K_ = K ? std::move(K) : std::function<Mat(double)>([m](double) { return Mat(Mat::Identity(m, m)); });
  b.ext0_ = I->t0 - I->collar;
  b.ext1_ = I->t1 + I->collar;
  if (!I->periodic) {
    b.ext0_ = std::max(b.ext0_, 0.0);
    b.ext1_ = std::min(b.ext1_, path.t_end);
  }
  const int ns = 800;
  b.ds_ = (b.ext1_ - b.ext0_) / ns;
  b.lo_ = Vec::Constant(m, std::numeric_limits<double>::infinity());
  b.hi_ = -b.lo_;
  double vmax = 0.0, zero_check = 0.0;
  for (int i = 0; i <= ns; ++i) {
    const double s = b.ext0_ + (b.ext1_ - b.ext0_) * i / ns;
    b.s_.push_back(s);
    const Vec y = path.state(b.wrap_s(s));
    Vec x = y.head(m);
    if (i > 0) x = b.xs_.back() + b.chart_.displacement(b.xs_.back(), x);  // unwrapped chain
    b.xs_.push_back(x);
    for (int a = 0; a < m; ++a) {
      b.X_.push_back(x[a]);
      b.V_.push_back(y[m + a]);
    }
    b.lo_ = b.lo_.cwiseMin(x);
    b.hi_ = b.hi_.cwiseMax(x);
    const Vec v = y.tail(m);
    vmax = std::max(vmax, v.norm());
    // Embedded tube: rho times the coordinate curvature stays below 1/2.
    const Vec a = perp(geodesic_acceleration(metric, y.head(m), v), v);
    if (rho * a.norm() / std::max(v.squaredNorm(), 1e-300) > 0.5)
      throw Error(ErrorCode::TubeTooWide, "tube radius exceeds half the curvature radius of the core");
    for (int k = 0; k < m; ++k)
      for (double sg : {-1.0, 1.0}) {
        Vec z = y.head(m);
        z[k] += sg * rho;
        if (!b.chart_.contains(z)) throw Error(ErrorCode::TubeTooWide, "tube leaves the chart domain");
      }
    if (s > I->t0 && s < I->t1) zero_check = std::max(zero_check, max_abs(b.K_(s)));
  }
  b.spacing_ = (b.ext1_ - b.ext0_) / ns * vmax;
  static std::atomic<std::uint64_t> next_id{1};
  b.id_ = next_id++;
  b.zero_ = zero_check == 0.0;
  // sup |h| = rho max_q (q chi(q)) max_s chi_I |K| / |n|.
  double qmax = 0.0;
  for (int i = 0; i <= 1000; ++i) qmax = std::max(qmax, (i / 1000.0) * chi_radial(i / 1000.0));
  double smax = 0.0;
  for (int i = 0; i <= ns; ++i) {
    const double s = I->t0 + (I->t1 - I->t0) * i / ns;
    const double nn = perp(b.W_(s), b.core_velocity(s)).norm();
    if (nn > 0.0) smax = std::max(smax, b.chi_long(s) * max_abs(b.K_(s)) / nn);
  }
  b.sup_norm_ = b.zero_ ? 0.0 : rho * qmax * smax;
  return b;
}

double mixed_derivative(const MetricField& metric, const GeodesicPath& path, const JacobiSolution& J,
                        const PerturbationBump& bump, int pieces) {
  if (bump.is_zero()) return 0.0;
  const double T = std::min(path.t_end, J.t_end());
  return integrate_composite<Gauss5>([&](double t) {
    const Vec x = path.x(t);
    if (!bump.near(x, 1e-3)) return 0.0;
    const Vec v = path.v(t), Jt = J.J(t), DJ = J.DJ(t);
    const double a = v.dot(bump.h(x) * DJ);
    const double b = 0.5 * v.dot(bump.covariant_derivative(metric, x, Jt) * v);
    return a + b;
  }, 0.0, T, pieces);
}

MetricField perturbed_metric(const MetricField& metric, const PerturbationBump& bump, double c) {
  if (c == 0.0 || bump.is_zero()) return metric;
  const auto B = std::make_shared<const PerturbationBump>(bump);
  const int m = metric.dim();
  const double d1 = 1e-6, d2 = 1e-4;
  MetricField out(metric.domain(), metric.index(),
                  [metric, B, c](const Vec& x) { return Mat(metric.g(x) + c * B->h(x)); },
                  metric.name() + "+bump");
  out.set_first_derivatives([metric, B, c, m, d1](const Vec& x) {
    std::vector<Mat> dg = metric.dg(x);
    if (!B->near(x, 2 * d1)) return dg;
    for (int k = 0; k < m; ++k) {
      Vec xp = x, xm = x;
      xp[k] += d1;
      xm[k] -= d1;
      dg[k] += c * (B->h(xp) - B->h(xm)) / (2 * d1);
    }
    return dg;
  });
  out.set_second_derivatives([metric, B, c, m, d2](const Vec& x) {
    std::vector<Mat> dd = metric.d2g(x);
    if (!B->near(x, 3 * d2)) return dd;
    const Mat h0 = B->h(x);
    auto at = [&](int k, double sk, int l, double sl) {
      Vec y = x;
      y[k] += sk;
      y[l] += sl;
      return B->h(y);
    };
    for (int k = 0; k < m; ++k) {
      const Mat hk = (at(k, d2, k, 0) - 2 * h0 + at(k, -d2, k, 0)) / (d2 * d2);
      dd[k * m + k] += c * hk;
      for (int l = k + 1; l < m; ++l) {
        const Mat hkl = (at(k, d2, l, d2) - at(k, d2, l, -d2) - at(k, -d2, l, d2) + at(k, -d2, l, -d2)) /
                        (4 * d2 * d2);
        dd[k * m + l] += c * hkl;
        dd[l * m + k] += c * hkl;
      }
    }
    return dd;
  });
  out.set_steps(metric.steps());
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios and rechecks

Scenario make_scenario(std::string name, const MetricField& metric, const Gec& gec, const GeodesicPath& path,
                       const JacobiSolution& J, double tol) {
  Scenario sc;
  sc.name = std::move(name);
  sc.metric = metric;
  sc.gec = gec;
  sc.path = path;
  sc.u = check_critical(metric, gec, path, tol);
  double sup = 0.0;
  for (int i = 0; i <= 200; ++i) {
    const double t = path.t_end * i / 200;
    sup = std::max(sup, std::hypot(J.J(t).norm(), J.DJ(t).norm()));
  }
  if (!(sup > 0.0)) throw Error(ErrorCode::NotPJacobiField, "field is zero");
  const double r = pjacobi_boundary_residual(metric, gec, J, sc.u).norm();
  if (r > tol * sup)
    throw Error(ErrorCode::NotPJacobiField,
                "field misses the linearized boundary conditions (relative residual " + std::to_string(r / sup) +
                    ")");
  sc.J = J;
  sc.periodicity = detect_periodicity(path);
  return sc;
}

Scenario scenario_from_solution(std::string name, const MetricField& metric, const Gec& gec,
                                const GeodesicPath& path) {
  ClassifyOptions co;
  co.crosscheck = false;
  const DegeneracyReport rep = classify(metric, path, gec, co);
  if (rep.witness) return make_scenario(std::move(name), metric, gec, path, rep.witness->field);
  // Field with the largest part normal to the curve.
  int best = -1;
  double bn = 0.0;
  for (size_t j = 0; j < rep.kernel_basis.size(); ++j) {
    const JacobiSolution& f = rep.kernel_basis[j];
    double nrm = 0.0, all = 0.0;
    for (int i = 0; i <= 50; ++i) {
      const double t = path.t_end * i / 50;
      nrm = std::max(nrm, perp(f.J(t), path.v(t)).norm());
      all = std::max(all, f.J(t).norm() + f.DJ(t).norm());
    }
    if (all > 0.0 && nrm / all > bn) {
      bn = nrm / all;
      best = static_cast<int>(j);
    }
  }
  if (best < 0 || bn <= 1e-6)
    throw Error(ErrorCode::InvalidArgument, "solution carries no non-tangent kernel field");
  return make_scenario(std::move(name), metric, gec, path, rep.kernel_basis[best]);
}

Scenario sphere_antipodal_scenario() {
  using std::numbers::pi;
  const MetricField S = sphere_metric();
  Vec p(2), q(2), v(2), J0 = Vec::Zero(2), DJ0(2);
  p << pi / 2, 0;
  q << pi / 2, pi;
  v << 0, pi;
  DJ0 << pi, 0;
  const GeodesicPath path = integrate_geodesic(S, p, v, 1.0);
  return make_scenario("sphere_antipodal", S, Gec::fixed(p, q), path, propagate_jacobi(S, path, J0, DJ0));
}

Scenario football_double_equator_scenario() {
  using std::numbers::pi;
  const MetricField F = football_metric();
  Vec x(2), v(2), J0(2), DJ0 = Vec::Zero(2);
  x << 0, 0;
  v << 4 * pi, 0;
  J0 << 0, 1;
  const GeodesicPath path = integrate_geodesic(F, x, v, 1.0);
  return make_scenario("football_double_equator", F, Gec::diagonal(F.domain()), path,
                       propagate_jacobi(F, path, J0, DJ0));
}

const char* trial_outcome_name(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::Nondegenerate: return "nondegenerate";
    case TrialOutcome::Degenerate: return "degenerate";
    case TrialOutcome::SolverFailed: return "solver_failed";
  }
  return "?";
}

namespace {

// Geodesics of the base metric along the degenerate direction,
// gamma_a = exp(x0 + a J0, v0 + a J'0), and Q(a) = int h(gamma_a', gamma_a').
// To first order the perturbed critical points sit at critical points of Q.
std::vector<BvpGuess> reduced_guesses(const Scenario& sc, const PerturbationBump& bump) {
  std::vector<BvpGuess> out;
  if (bump.is_zero()) return out;
  const int m = sc.metric.dim();
  const double T = sc.path.t_end;
  const Vec J0 = sc.J.J(0.0), Jd0 = sc.J.Jdot(0.0);
  double sup = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double t = T * i / 100;
    sup = std::max(sup, perp(sc.J.J(t), sc.path.v(t)).norm());
  }
  if (!(sup > 0.0)) return out;
  // Endpoint parameter direction: least squares B a = (J(0), J(T)).
  Vec a_dir = Vec::Zero(sc.u.size());
  if (sc.u.size() > 0) {
    const BoundaryGeometry bg = boundary_geometry(sc.gec, sc.metric, sc.u, true);
    Vec rhs(2 * m);
    rhs << J0, sc.J.J(T);
    a_dir = bg.tangent.colPivHouseholderQr().solve(rhs);
  }
  const double amax = 1.5 * bump.rho / sup;
  const int n = 16;
  std::vector<double> al(n + 1), Q(n + 1, 0.0);
  GeodesicOptions go;
  go.tol = 1e-10;
  for (int i = 0; i <= n; ++i) {
    al[i] = -amax + 2 * amax * i / n;
    try {
      const GeodesicPath p = integrate_geodesic(sc.metric, sc.path.x0 + al[i] * J0, sc.path.v0 + al[i] * Jd0, T, go);
      if (!p.complete()) continue;
      Q[i] = integrate_composite<Gauss5>([&](double t) {
        const Vec x = p.x(t);
        if (!bump.near(x)) return 0.0;
        const Vec v = p.v(t);
        return v.dot(bump.h(x) * v);
      }, 0.0, T, 256);
    } catch (const Error&) {
    }
  }
  double qmax = 0.0;
  for (double q : Q) qmax = std::max(qmax, std::abs(q));
  if (!(qmax > 0.0)) return out;
  std::vector<int> ext;
  for (int i = 1; i < n; ++i) {
    const bool mx = Q[i] > Q[i - 1] && Q[i] >= Q[i + 1];
    const bool mn = Q[i] < Q[i - 1] && Q[i] <= Q[i + 1];
    if ((mx || mn) && std::abs(Q[i]) > 1e-3 * qmax) ext.push_back(i);
  }
  std::stable_sort(ext.begin(), ext.end(), [&](int x, int y) { return std::abs(al[x]) < std::abs(al[y]); });
  for (int i : ext) {
    // Parabolic refinement of the extremum.
    const double d = Q[i - 1] - 2 * Q[i] + Q[i + 1];
    double a = al[i];
    if (d != 0.0) a += 0.5 * (al[1] - al[0]) * (Q[i - 1] - Q[i + 1]) / d;
    out.push_back({sc.u + a * a_dir, sc.path.v0 + a * Jd0});
  }
  return out;
}

}  // namespace

double bump_scale(const MetricField& metric, const PerturbationBump& bump, double epsilon) {
  if (bump.is_zero() || !(bump.sup_norm() > 0.0)) return 0.0;
  double gmax = 0.0;
  for (int i = 0; i <= 50; ++i) {
    const double s = bump.interval.t0 + (bump.interval.t1 - bump.interval.t0) * i / 50;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(metric.g(bump.core(s))), Eigen::EigenvaluesOnly);
    gmax = std::max(gmax, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return epsilon * gmax / bump.sup_norm();
}

void check_signature(const MetricField& metric, const PerturbationBump& bump, double c, int samples,
                     std::uint64_t seed) {
  if (c == 0.0 || bump.is_zero()) return;
  const int m = metric.dim();
  const ChartDomain& chart = metric.domain();
  CounterRng rng(seed, 0x5167);
  for (int i = 0; i < samples; ++i) {
    const double s = rng.uniform(bump.interval.t0, bump.interval.t1);
    Vec y(m);
    for (int k = 0; k < m; ++k) y[k] = rng.normal();
    y = perp(y, bump.core_velocity(s));
    const double yn = y.norm();
    const double r = bump.rho * std::pow(rng.uniform(), 1.0 / std::max(1, m - 1));
    const Vec x = bump.core(s) + (yn > 0.0 ? Vec(y * (r / yn)) : Vec::Zero(m));
    if (!chart.contains(x)) continue;
    const Signature sg = signature_of(metric.g(x) + c * bump.h(x));
    if (sg.zero > 0 || sg.negative != metric.index())
      throw Error(ErrorCode::SignatureBroken, "perturbed metric changes signature inside the tube");
  }
}

RecheckResult apply_and_recheck(const Scenario& sc, const PerturbationBump& bump, double epsilon,
                                const RecheckOptions& opts) {
  RecheckResult r;
  r.epsilon = epsilon;
  double e = epsilon, c = 0.0;
  for (int h = 0;; ++h) {
    c = bump_scale(sc.metric, bump, e);
    try {
      check_signature(sc.metric, bump, c, opts.signature_samples, opts.seed);
      r.halvings = h;
      break;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::SignatureBroken || h >= opts.max_halvings) throw;
      e *= 0.5;
    }
  }
  r.epsilon_used = e;
  r.scale = c;
  const MetricField g = perturbed_metric(sc.metric, bump, c);
  BvpOptions bo = opts.bvp;
  // Steps must resolve the bump: on straight cores the integrator would skip it.
  bo.geodesic.max_step = std::min(bo.geodesic.max_step, bump.ramp * (bump.interval.t1 - bump.interval.t0) / 4);
  // Continue along the critical points of the reduced function; the base
  // guess comes last since the degenerate solution usually stops being critical.
  std::vector<BvpGuess> guesses;
  if (c != 0.0) guesses = reduced_guesses(sc, bump);
  guesses.push_back({sc.u, sc.path.v0});
  std::optional<Error> last;
  bool solved = false;
  for (size_t i = 0; i < guesses.size() && !solved; ++i) {
    try {
      r.solution = solve_gp_geodesic(g, sc.gec, guesses[i], bo);
      solved = true;
      r.note = i + 1 < guesses.size() ? "continued from a critical point of the reduced function"
                                      : "continued from the unperturbed solution";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NewtonDiverged && e.code() != ErrorCode::DomainExit &&
          e.code() != ErrorCode::StepFailure)
        throw;
      last = e;
    }
  }
  if (!solved) throw *last;
  const BvpSolution& sol = r.solution;
  if (sc.gec.kind == GecKind::Diagonal) {
    ClassifyOptions co;
    co.crosscheck = false;
    co.rel_threshold = opts.rel_threshold;
    r.report = classify(g, sol.path, sc.gec, co);
    const MonodromyMap mm = monodromy(g, sol.path, opts.rel_threshold);
    const double scale = std::max(1.0, Eigen::JacobiSVD<Mat>(mm.Phi).singularValues()[0]);
    r.kernel_gap = mm.singular_values.size() > 1 ? mm.singular_values[1] / scale : 0.0;
  } else {
    const PJacobiSpace sp = pjacobi_shooting(g, sc.gec, sol.path, sol.u, opts.rel_threshold);
    r.report.kind = sp.dimension > 0 ? DegeneracyKind::Degenerate : DegeneracyKind::Nondegenerate;
    r.report.kernel_dim = sp.dimension;
    r.report.kernel_basis = sp.basis;
    r.report.rel_threshold = opts.rel_threshold;
    r.kernel_gap = sp.singular_values.size() ? sp.singular_values[0] / sp.singular_values.maxCoeff() : 0.0;
  }
  const bool nondeg = r.report.kind == DegeneracyKind::Nondegenerate ||
                      r.report.kind == DegeneracyKind::S1Nondegenerate;
  r.outcome = nondeg ? TrialOutcome::Nondegenerate : TrialOutcome::Degenerate;
  return r;
}

MetricField conformal_perturb(const MetricField& metric, std::function<double(const Vec&)> f, int check_per_axis) {
  const ChartDomain& dom = metric.domain();
  const int m = metric.dim();
  // Grid check of positivity over the (clamped) chart box.
  std::vector<int> idx(m, 0);
  const int n = std::max(2, check_per_axis);
  for (;;) {
    Vec x(m);
    for (int a = 0; a < m; ++a) {
      const double lo = std::isfinite(dom.lower[a]) ? dom.lower[a] : -10.0;
      const double hi = std::isfinite(dom.upper[a]) ? dom.upper[a] : 10.0;
      x[a] = lo + (hi - lo) * (idx[a] + 0.5) / n;
    }
    if (dom.contains(x) && !(f(x) > 0.0))
      throw Error(ErrorCode::NonPositiveFactor, "conformal factor is not positive on the chart");
    int a = 0;
    while (a < m && ++idx[a] == n) idx[a++] = 0;
    if (a == m) break;
  }
  auto fp = [f](const Vec& x) {
    const double v = f(x);
    if (!(v > 0.0)) throw Error(ErrorCode::NonPositiveFactor, "conformal factor is not positive");
    return v;
  };
  const double d1 = 1e-6, d2 = 1e-4;
  auto grad = [f, m](const Vec& x, double d) {
    Vec g(m);
    for (int k = 0; k < m; ++k) {
      Vec xp = x, xm = x;
      xp[k] += d;
      xm[k] -= d;
      g[k] = (f(xp) - f(xm)) / (2 * d);
    }
    return g;
  };
  MetricField out(dom, metric.index(), [metric, fp](const Vec& x) { return Mat(fp(x) * metric.g(x)); },
                  "conformal(" + metric.name() + ")");
  out.set_first_derivatives([metric, fp, grad, d1, m](const Vec& x) {
    std::vector<Mat> dg = metric.dg(x);
    const Mat g = metric.g(x);
    const double fx = fp(x);
    const Vec df = grad(x, d1);
    for (int k = 0; k < m; ++k) dg[k] = df[k] * g + fx * dg[k];
    return dg;
  });
  out.set_second_derivatives([metric, f, fp, grad, d2, m](const Vec& x) {
    std::vector<Mat> dd = metric.d2g(x);
    const std::vector<Mat> dg = metric.dg(x);
    const Mat g = metric.g(x);
    const double fx = fp(x);
    const Vec df = grad(x, d2);
    for (int k = 0; k < m; ++k)
      for (int l = 0; l < m; ++l) {
        Vec pp = x, pm = x, mp = x, mm = x;
        pp[k] += d2; pp[l] += d2;
        pm[k] += d2; pm[l] -= d2;
        mp[k] -= d2; mp[l] += d2;
        mm[k] -= d2; mm[l] -= d2;
        const double fkl = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * d2 * d2);
        dd[k * m + l] = fkl * g + df[k] * dg[l] + df[l] * dg[k] + fx * dd[k * m + l];
      }
    return dd;
  });
  out.set_steps(metric.steps());
  return out;
}

std::function<double(const Vec&)> scalar_bump(const Vec& center, double radius, double amplitude) {
  return [center, radius, amplitude](const Vec& x) {
    return 1.0 + amplitude * chi_radial((x - center).norm() / radius);
  };
}

PerturbationBump random_bump(const MetricField& metric, const GeodesicPath& path, const EffectiveField& W,
                             CounterRng& rng, const MonteCarloOptions& opts) {
  const int m = path.dim();
  const double len = W.t1 - W.t0;
  std::optional<PerturbInterval> I;
  for (int attempt = 0; attempt < 50 && !I; ++attempt) {
    const double L = len * rng.uniform(opts.min_length, opts.max_length);
    const double c = rng.uniform(W.t0 + L / 2, W.t1 - L / 2);
    I = try_interval(path, W, opts.rho, c - L / 2, c + L / 2);
  }
  if (!I) I = select_interval(path, W, opts.rho);
  Mat A(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) A(i, j) = rng.normal();
  Mat K = A * A.transpose();
  K /= max_abs(K);
  return build_bump(metric, path, W, *I, opts.rho, [K](double) { return K; });
}

GenericityTrial genericity_montecarlo(const Scenario& sc, int n_trials, double epsilon, std::uint64_t seed,
                                      const MonteCarloOptions& opts) {
  GenericityTrial tr;
  tr.scenario = sc.name;
  tr.metric = sc.metric.name();
  tr.epsilon = epsilon;
  tr.seed = seed;
  tr.n_trials = n_trials;
  EffectiveField W;
  try {
    W = iterate_sum_field(sc.J, sc.path, sc.periodicity);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StronglyDegenerateSuspected) throw;
    // No admissible sum: bumps follow J on the first window instead.
    const double w1 = sc.periodicity.periodic ? sc.periodicity.omega : sc.path.t_end;
    W = plain_field([J = sc.J](double t) { return J.J(t); }, 0.0, w1);
    W.omega = sc.periodicity.periodic ? sc.periodicity.omega : 0.0;
  }
  tr.outcomes.assign(n_trials, TrialOutcome::SolverFailed);
  tr.kernel_gaps.assign(n_trials, 0.0);
  tr.mixed_derivatives.assign(n_trials, 0.0);
  parallel_for(static_cast<size_t>(n_trials), resolve_threads(opts.threads), [&](size_t i) {
    CounterRng rng(seed, i);
    RecheckOptions ro = opts.recheck;
    ro.seed = seed ^ (0x9e3779b97f4a7c15ULL * (i + 1));
    try {
      const PerturbationBump b = random_bump(sc.metric, sc.path, W, rng, opts);
      tr.mixed_derivatives[i] = mixed_derivative(sc.metric, sc.path, sc.J, b);
      const RecheckResult r = apply_and_recheck(sc, b, epsilon, ro);
      tr.outcomes[i] = r.outcome;
      tr.kernel_gaps[i] = r.kernel_gap;
    } catch (const Error&) {
      tr.outcomes[i] = TrialOutcome::SolverFailed;
    }
  });
  int good = 0;
  for (auto o : tr.outcomes) good += o == TrialOutcome::Nondegenerate;
  tr.nondegenerate_fraction = n_trials > 0 ? double(good) / n_trials : 0.0;
  return tr;
}

}  // namespace geovar
