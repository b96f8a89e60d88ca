#include "geovar/ode.hpp"

#include <algorithm>
#include <cmath>

namespace geovar {

namespace {

// Dormand-Prince 5(4) tableau and Hairer's dense-output coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

bool finite(const Vec& v) { return v.allFinite(); }

Vec eval_segment(const DenseTrajectory::Segment& s, double theta) {
  const double t1 = 1.0 - theta;
  return s.r1 + theta * (s.r2 + t1 * (s.r3 + theta * (s.r4 + t1 * s.r5)));
}

}  // namespace

const char* ode_status_name(OdeStatus s) {
  switch (s) {
    case OdeStatus::completed: return "completed";
    case OdeStatus::domain_exit: return "domain_exit";
    case OdeStatus::step_failure: return "step_failure";
  }
  return "?";
}

void DenseTrajectory::start(double t0, const Vec& y0) {
  dim_ = static_cast<int>(y0.size());
  t_begin_ = t_end_ = t0;
  y_begin_ = y0;
  segs_.clear();
}

void DenseTrajectory::push(Segment s) {
  t_end_ = s.t0 + s.len * s.h;
  segs_.push_back(std::move(s));
}

std::vector<double> DenseTrajectory::nodes() const {
  std::vector<double> t;
  t.reserve(segs_.size() + 1);
  t.push_back(t_begin_);
  for (const auto& s : segs_) t.push_back(s.t0 + s.len * s.h);
  return t;
}

Vec DenseTrajectory::state_at_node(size_t i) const {
  if (i == 0) return y_begin_;
  const auto& s = segs_.at(i - 1);
  return eval_segment(s, s.len);
}

Vec DenseTrajectory::eval(double t) const {
  if (segs_.empty()) return y_begin_;
  const bool forward = segs_.front().h > 0;
  // Segments are ordered along the direction of integration.
  size_t lo = 0, hi = segs_.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi + 1) / 2;
    const bool after = forward ? (t >= segs_[mid].t0) : (t <= segs_[mid].t0);
    if (after) lo = mid;
    else hi = mid - 1;
  }
  const auto& s = segs_[lo];
  double theta = (t - s.t0) / s.h;
  theta = std::clamp(theta, 0.0, s.len);
  return eval_segment(s, theta);
}

DenseTrajectory DenseTrajectory::shifted(double dt, const Vec& offset) const {
  DenseTrajectory d = *this;
  d.t_begin_ += dt;
  d.t_end_ += dt;
  d.y_begin_ += offset;
  for (auto& s : d.segs_) {
    s.t0 += dt;
    s.r1 += offset;
  }
  return d;
}

void DenseTrajectory::append(const DenseTrajectory& other) {
  if (segs_.empty() && dim_ == 0) {
    *this = other;
    return;
  }
  for (const auto& s : other.segs_) push(s);
}

OdeResult integrate_dopri5(const OdeRhs& f, double t0, const Vec& y0, double t1, const OdeOptions& opts,
                           const OdeInside& inside) {
  OdeResult res;
  res.trajectory.start(t0, y0);
  res.t_final = t0;
  res.y_final = y0;
  const double span = t1 - t0;
  if (span == 0.0) return res;
  const double dir = span > 0 ? 1.0 : -1.0;
  const int n = static_cast<int>(y0.size());

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ys(n), y1(n), err(n);
  Vec y = y0;
  double t = t0;
  f(t, y, k1);
  if (!finite(k1)) {
    res.status = OdeStatus::step_failure;
    res.message = "non-finite derivative at initial state";
    return res;
  }

  double h;
  long nfixed = 0;
  if (opts.fixed_step) {
    nfixed = std::max<long>(1, static_cast<long>(std::ceil(std::abs(span) / opts.step - 1e-9)));
    h = span / static_cast<double>(nfixed);
  } else if (opts.initial_step > 0) {
    h = dir * std::min(opts.initial_step, std::abs(span));
  } else {
    // Hairer's starting step heuristic.
    Vec sc = (opts.atol + opts.rtol * y.cwiseAbs().array()).matrix();
    const double dnf = (k1.cwiseQuotient(sc)).squaredNorm() / n;
    const double dny = (y.cwiseQuotient(sc)).squaredNorm() / n;
    double h0 = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h0 = std::min(h0, std::abs(span));
    Vec yt = y + dir * h0 * k1;
    f(t + dir * h0, yt, k2);
    double der2 = finite(k2) ? std::sqrt(((k2 - k1).cwiseQuotient(sc)).squaredNorm() / n) / h0 : 1e10;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der12, 0.2);
    h = dir * std::min({100 * h0, h1, std::abs(span), opts.max_step});
  }

  bool last = false;
  double fac_old = 1e-4;
  long count = 0;
  while (true) {
    if (++count > opts.max_steps) {
      res.status = OdeStatus::step_failure;
      res.message = "maximum number of steps exceeded";
      break;
    }
    if (!opts.fixed_step) {
      h = dir * std::min(std::abs(h), opts.max_step);
      if ((t + h - t1) * dir >= 0 || std::abs(t1 - (t + h)) < 1e-14 * std::abs(span)) {
        h = t1 - t;
        last = true;
      }
    } else {
      last = (res.steps + 1 == nfixed);
      if (last) h = t1 - t;
    }
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) {
      res.status = OdeStatus::step_failure;
      res.message = "step size underflow";
      break;
    }

    ys = y + h * a21 * k1;
    f(t + c2 * h, ys, k2);
    ys = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, ys, k3);
    ys = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, ys, k4);
    ys = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, ys, k5);
    ys = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, ys, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    f(t + h, y1, k7);

    double e = 0.0;
    const bool ok = finite(y1) && finite(k7);
    if (!opts.fixed_step) {
      if (ok) {
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        for (int i = 0; i < n; ++i) {
          const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
          e += (err[i] / sc) * (err[i] / sc);
        }
        e = std::sqrt(e / n);
      } else {
        e = 1e10;
      }
      if (!(e <= 1.0)) {
        ++res.rejected;
        const double fac = ok ? std::max(0.2, 0.9 * std::pow(e, -0.2)) : 0.25;
        h *= std::min(1.0, fac);
        last = false;
        continue;
      }
    } else if (!ok) {
      res.status = OdeStatus::step_failure;
      res.message = "non-finite state in fixed-step mode";
      break;
    }

    DenseTrajectory::Segment seg;
    seg.t0 = t;
    seg.h = h;
    seg.len = 1.0;
    seg.r1 = y;
    seg.r2 = y1 - y;
    seg.r3 = h * k1 - seg.r2;
    seg.r4 = seg.r2 - h * k7 - seg.r3;
    seg.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

    if (inside && !inside(y1)) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 60 && (hi - lo) > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (inside(eval_segment(seg, mid))) lo = mid;
        else hi = mid;
      }
      if (lo > 0.0) {
        seg.len = lo;
        res.trajectory.push(seg);
      }
      res.status = OdeStatus::domain_exit;
      res.t_final = t + lo * h;
      res.y_final = eval_segment(seg, lo);
      res.message = "trajectory left the chart domain";
      ++res.steps;
      return res;
    }

    res.trajectory.push(seg);
    ++res.steps;
    t = last ? t1 : t + h;
    y = y1;
    k1 = k7;
    if (last) break;
    if (!opts.fixed_step) {
      // Lund-stabilized step size control.
      const double expo = 0.2 - 0.04 * 0.75;
      double fac11 = std::pow(std::max(e, 1e-16), expo);
      double fac = fac11 / std::pow(fac_old, 0.04);
      fac = std::clamp(fac / 0.9, 0.1, 5.0);
      fac_old = std::max(e, 1e-4);
      h /= fac;
    }
  }
  res.t_final = t;
  res.y_final = y;
  return res;
}

}  // namespace geovar
