#include "geovar/metric.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace geovar {

MetricField::MetricField(ChartDomain domain, int index, MatrixFn components, std::string name)
    : domain_(std::move(domain)), index_(index), g_(std::move(components)), name_(std::move(name)) {
  domain_.validate();
  if (index_ < 0 || index_ > domain_.dim) throw Error(ErrorCode::InvalidArgument, "index out of range");
  if (!g_) throw Error(ErrorCode::InvalidArgument, "metric components missing");
}

MetricField& MetricField::set_first_derivatives(MatrixListFn dg) {
  dg_ = std::move(dg);
  return *this;
}

MetricField& MetricField::set_second_derivatives(MatrixListFn d2g) {
  d2g_ = std::move(d2g);
  return *this;
}

MetricField& MetricField::set_steps(FiniteDifferenceSteps steps) {
  if (!(steps.first > 0.0) || !(steps.second > 0.0))
    throw Error(ErrorCode::InvalidArgument, "finite-difference steps must be positive");
  steps_ = steps;
  return *this;
}

MetricField MetricField::finite_difference() const {
  MetricField copy = *this;
  copy.dg_ = nullptr;
  copy.d2g_ = nullptr;
  return copy;
}

Mat MetricField::g(const Vec& x) const { return g_(x); }

std::vector<Mat> MetricField::dg(const Vec& x) const {
  if (dg_) return dg_(x);
  const int m = dim();
  const double h = steps_.first;
  std::vector<Mat> out(m);
  Vec xp = x, xm = x;
  for (int k = 0; k < m; ++k) {
    xp[k] = x[k] + h;
    xm[k] = x[k] - h;
    out[k] = symmetrize((g_(xp) - g_(xm)) / (2.0 * h));
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return out;
}

std::vector<Mat> MetricField::d2g(const Vec& x) const {
  if (d2g_) return d2g_(x);
  const int m = dim();
  std::vector<Mat> out(m * m);
  if (dg_) {
    const double h = steps_.first;
    Vec y = x;
    for (int l = 0; l < m; ++l) {
      y[l] = x[l] + h;
      auto p = dg_(y);
      y[l] = x[l] - h;
      auto q = dg_(y);
      y[l] = x[l];
      for (int k = 0; k < m; ++k) out[k * m + l] = (p[k] - q[k]) / (2.0 * h);
    }
    for (int k = 0; k < m; ++k)
      for (int l = k; l < m; ++l) {
        Mat s = symmetrize(0.5 * (out[k * m + l] + out[l * m + k]));
        out[k * m + l] = s;
        out[l * m + k] = s;
      }
    return out;
  }
  const double h = steps_.second;
  const Mat g0 = g_(x);
  Vec y = x;
  for (int k = 0; k < m; ++k) {
    y[k] = x[k] + h;
    Mat gp = g_(y);
    y[k] = x[k] - h;
    Mat gm = g_(y);
    y[k] = x[k];
    out[k * m + k] = symmetrize((gp - 2.0 * g0 + gm) / (h * h));
    for (int l = k + 1; l < m; ++l) {
      y[k] = x[k] + h; y[l] = x[l] + h;
      Mat pp = g_(y);
      y[l] = x[l] - h;
      Mat pm = g_(y);
      y[k] = x[k] - h;
      Mat mm = g_(y);
      y[l] = x[l] + h;
      Mat mp = g_(y);
      y[k] = x[k]; y[l] = x[l];
      Mat v = symmetrize((pp - pm - mp + mm) / (4.0 * h * h));
      out[k * m + l] = v;
      out[l * m + k] = v;
    }
  }
  return out;
}

AuxiliaryRiemannian AuxiliaryRiemannian::euclidean(int m) {
  AuxiliaryRiemannian a;
  a.dim = m;
  a.components = [m](const Vec&) { return Mat::Identity(m, m); };
  return a;
}

double AuxiliaryRiemannian::norm(const Vec& x, const Vec& a) const {
  return std::sqrt(std::max(0.0, inner(x, a, a)));
}

Signature signature_of(const Mat& g, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(g), Eigen::EigenvaluesOnly);
  const Vec& ev = es.eigenvalues();
  const double scale = std::max(1e-300, ev.cwiseAbs().maxCoeff());
  Signature s;
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= rel_tol * scale) ++s.zero;
    else if (ev[i] > 0) ++s.positive;
    else ++s.negative;
  }
  return s;
}

Vec Connection::apply(const Vec& u, const Vec& v) const {
  const int m = static_cast<int>(gamma.size());
  Vec out(m);
  for (int k = 0; k < m; ++k) out[k] = u.dot(gamma[k] * v);
  return out;
}

Connection connection_unchecked(const MetricField& metric, const Vec& x) {
  const int m = metric.dim();
  Connection c;
  c.g = metric.g(x);
  c.ginv = c.g.inverse();
  const auto dg = metric.dg(x);
  // lowered[l](i,j) = Gamma_{l,ij}
  std::vector<Mat> lowered(m, Mat(m, m));
  for (int l = 0; l < m; ++l)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) lowered[l](i, j) = 0.5 * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
  c.gamma.assign(m, Mat::Zero(m, m));
  for (int k = 0; k < m; ++k)
    for (int l = 0; l < m; ++l) {
      const double a = c.ginv(k, l);
      if (a != 0.0) c.gamma[k] += a * lowered[l];
    }
  return c;
}

std::vector<std::vector<Mat>> christoffel_derivatives_unchecked(const MetricField& metric, const Vec& x,
                                                                const Connection& conn) {
  const int m = metric.dim();
  const auto dg = metric.dg(x);
  const auto d2g = metric.d2g(x);
  std::vector<Mat> lowered(m, Mat(m, m));
  for (int l = 0; l < m; ++l)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) lowered[l](i, j) = 0.5 * (dg[i](l, j) + dg[j](l, i) - dg[l](i, j));
  std::vector<std::vector<Mat>> out(m, std::vector<Mat>(m, Mat::Zero(m, m)));
  for (int p = 0; p < m; ++p) {
    const Mat dginv = -conn.ginv * dg[p] * conn.ginv;
    std::vector<Mat> dlow(m, Mat(m, m));
    for (int l = 0; l < m; ++l)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          dlow[l](i, j) = 0.5 * (d2g[p * m + i](l, j) + d2g[p * m + j](l, i) - d2g[p * m + l](i, j));
    for (int k = 0; k < m; ++k)
      for (int l = 0; l < m; ++l) {
        if (dginv(k, l) != 0.0) out[p][k] += dginv(k, l) * lowered[l];
        if (conn.ginv(k, l) != 0.0) out[p][k] += conn.ginv(k, l) * dlow[l];
      }
  }
  return out;
}

Vec ChristoffelValue::operator()(const Vec& u, const Vec& v) const {
  const int m = static_cast<int>(gamma.size());
  Vec out(m);
  for (int k = 0; k < m; ++k) out[k] = u.dot(gamma[k] * v);
  return out;
}

double ChristoffelValue::max_norm() const {
  double r = 0.0;
  for (const auto& g : gamma) r = std::max(r, max_abs(g));
  return r;
}

CurvatureValue curvature_unchecked(const MetricField& metric, const Vec& x) {
  const int m = metric.dim();
  const Connection conn = connection_unchecked(metric, x);
  const auto dG = christoffel_derivatives_unchecked(metric, x, conn);
  CurvatureValue cv;
  cv.x = x;
  cv.m = m;
  cv.g = conn.g;
  cv.riemann.assign(static_cast<size_t>(m) * m * m * m, 0.0);
  const auto& G = conn.gamma;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
          double v = dG[k][i](l, j) - dG[l][i](k, j);
          for (int p = 0; p < m; ++p) v += G[i](k, p) * G[p](l, j) - G[i](l, p) * G[p](k, j);
          cv.riemann[((i * m + j) * m + k) * m + l] = v;
        }
  cv.ricci = Mat::Zero(m, m);
  for (int l = 0; l < m; ++l)
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += cv.r(i, j, i, l);
      cv.ricci(l, j) = s;
    }
  cv.ricci = symmetrize(cv.ricci);
  cv.scalar = (conn.ginv.cwiseProduct(cv.ricci)).sum();
  return cv;
}

Vec CurvatureValue::apply(const Vec& X, const Vec& Y, const Vec& Z) const {
  Vec out = Vec::Zero(m);
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      if (Z[j] == 0.0) continue;
      for (int k = 0; k < m; ++k) {
        if (X[k] == 0.0) continue;
        for (int l = 0; l < m; ++l) s += r(i, j, k, l) * Z[j] * X[k] * Y[l];
      }
    }
    out[i] = s;
  }
  return out;
}

double CurvatureValue::lowered(const Vec& X, const Vec& Y, const Vec& Z, const Vec& W) const {
  return apply(X, Y, Z).dot(g * W);
}

double CurvatureValue::sectional(const Vec& X, const Vec& Y) const {
  const double den = X.dot(g * X) * Y.dot(g * Y) - std::pow(X.dot(g * Y), 2);
  if (std::abs(den) < 1e-300) throw Error(ErrorCode::InvalidArgument, "degenerate plane");
  return lowered(X, Y, Y, X) / den;
}

Mat CurvatureValue::jacobi_operator(const Vec& v) const {
  Mat A(m, m);
  for (int c = 0; c < m; ++c) A.col(c) = apply(v, Vec::Unit(m, c), v);
  return A;
}

double CurvatureValue::max_norm() const {
  double r = 0.0;
  for (double v : riemann) r = std::max(r, std::abs(v));
  return r;
}

namespace {

void require_inside(const MetricField& metric, const Vec& x, double margin) {
  if (x.size() != metric.dim()) throw Error(ErrorCode::InvalidArgument, "point has wrong dimension");
  if (!metric.domain().contains(x, margin)) throw Error(ErrorCode::OutOfDomain, "point outside chart domain");
}

double fd_margin(const MetricField& metric, bool second) {
  const auto& s = metric.steps();
  double h = 0.0;
  if (metric.first_mode() == DerivativeMode::finite_difference) h = s.first;
  if (second && metric.second_mode() == DerivativeMode::finite_difference)
    h = std::max(h, metric.first_mode() == DerivativeMode::analytic ? s.first : s.second);
  return h;
}

}  // namespace

Mat eval_metric(const MetricField& metric, const Vec& x) {
  require_inside(metric, x, 0.0);
  Mat g = metric.g(x);
  if (max_abs(Mat(g - g.transpose())) > 1e-12 * std::max(1.0, max_abs(g)))
    throw Error(ErrorCode::InvalidArgument, "metric components not symmetric");
  const Signature s = signature_of(g);
  if (s.zero > 0) throw Error(ErrorCode::DegenerateAtPoint, "metric has a zero eigenvalue");
  if (s.negative != metric.index())
    throw Error(ErrorCode::SignatureBroken, "metric index differs from declared index");
  return g;
}

ChristoffelValue christoffel(const MetricField& metric, const Vec& x) {
  require_inside(metric, x, fd_margin(metric, false));
  const Connection c = connection_unchecked(metric, x);
  return {x, c.gamma};
}

CurvatureValue curvature(const MetricField& metric, const Vec& x) {
  require_inside(metric, x, fd_margin(metric, true));
  return curvature_unchecked(metric, x);
}

MetricField product_metric(const MetricField& metric) {
  const int m = metric.dim();
  const auto& d = metric.domain();
  std::vector<double> lo = d.lower, hi = d.upper, per = d.period;
  lo.insert(lo.end(), d.lower.begin(), d.lower.end());
  hi.insert(hi.end(), d.upper.begin(), d.upper.end());
  per.insert(per.end(), d.period.begin(), d.period.end());
  ChartDomain dd(lo, hi, d.label + " x " + d.label, per);
  MetricField base = metric;
  MetricField out(dd, m, [base, m](const Vec& x) {
    Mat G = Mat::Zero(2 * m, 2 * m);
    G.topLeftCorner(m, m) = base.g(x.head(m));
    G.bottomRightCorner(m, m) = -base.g(x.tail(m));
    return G;
  }, "product(" + metric.name() + ")");
  out.set_steps(metric.steps());
  if (metric.first_mode() == DerivativeMode::analytic) {
    out.set_first_derivatives([base, m](const Vec& x) {
      std::vector<Mat> r(2 * m, Mat::Zero(2 * m, 2 * m));
      auto a = base.dg(x.head(m));
      auto b = base.dg(x.tail(m));
      for (int k = 0; k < m; ++k) {
        r[k].topLeftCorner(m, m) = a[k];
        r[m + k].bottomRightCorner(m, m) = -b[k];
      }
      return r;
    });
  }
  if (metric.second_mode() == DerivativeMode::analytic) {
    out.set_second_derivatives([base, m](const Vec& x) {
      const int n = 2 * m;
      std::vector<Mat> r(n * n, Mat::Zero(n, n));
      auto a = base.d2g(x.head(m));
      auto b = base.d2g(x.tail(m));
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
          r[k * n + l].topLeftCorner(m, m) = a[k * m + l];
          r[(m + k) * n + (m + l)].bottomRightCorner(m, m) = -b[k * m + l];
        }
      return r;
    });
  }
  return out;
}

namespace {

Mat checked_projector(const DistributionField& dist, const Vec& x) {
  const Mat P = dist.projector(x);
  const int m = dist.domain.dim;
  if (P.rows() != m || P.cols() != m) throw Error(ErrorCode::InvalidArgument, "projector has wrong size");
  if (max_abs(Mat(P * P - P)) > 1e-10) throw Error(ErrorCode::ProjectorNotIdempotent, "P*P != P");
  if (std::abs(P.trace() - dist.rank) > 1e-8)
    throw Error(ErrorCode::ProjectorNotIdempotent, "projector trace differs from rank");
  return P;
}

}  // namespace

MetricField metric_from_distribution(const DistributionField& dist, const AuxiliaryRiemannian& g_R) {
  const int m = dist.domain.dim;
  if (dist.rank < 0 || dist.rank > m) throw Error(ErrorCode::InvalidArgument, "rank out of range");
  {
    // Probe one interior point so invalid projectors fail at construction.
    Vec c(m);
    for (int i = 0; i < m; ++i) {
      const double lo = dist.domain.lower[i], hi = dist.domain.upper[i];
      if (std::isfinite(lo) && std::isfinite(hi)) c[i] = 0.5 * (lo + hi);
      else if (std::isfinite(lo)) c[i] = lo + 1.0;
      else if (std::isfinite(hi)) c[i] = hi - 1.0;
      else c[i] = 0.0;
    }
    checked_projector(dist, c);
  }
  const int nu = dist.rank;
  auto fn = [dist, g_R, m, nu](const Vec& x) -> Mat {
    const Mat GR = g_R(x);
    if (nu == 0) return GR;
    const Mat P = checked_projector(dist, x);
    Eigen::ColPivHouseholderQR<Mat> qr(P);
    const Mat B = Mat(qr.householderQ()).leftCols(nu);
    const Mat Q = B * (B.transpose() * GR * B).inverse() * B.transpose() * GR;
    return symmetrize(GR * (Mat::Identity(m, m) - 2.0 * Q));
  };
  return MetricField(dist.domain, nu, fn, "from_distribution");
}

Mat negative_eigenprojector(const MetricField& metric, const AuxiliaryRiemannian& g_R, const Vec& x) {
  const Mat G = eval_metric(metric, x);
  const Mat GR = g_R(x);
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(G, GR);
  const Vec& ev = es.eigenvalues();
  const Mat& V = es.eigenvectors();  // V^T GR V = I
  const int m = metric.dim();
  const double scale = ev.cwiseAbs().maxCoeff();
  Mat Q = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    if (std::abs(ev[i]) <= 1e-12 * scale) throw Error(ErrorCode::DegenerateAtPoint, "zero eigenvalue");
    if (ev[i] < 0) Q += V.col(i) * V.col(i).transpose() * GR;
  }
  return Q;
}

const char* causal_name(CausalCharacter c) {
  switch (c) {
    case CausalCharacter::timelike: return "timelike";
    case CausalCharacter::lightlike: return "lightlike";
    case CausalCharacter::spacelike: return "spacelike";
  }
  return "?";
}

CausalCharacter causal_character(const MetricField& metric, const Vec& x, const Vec& v, double band) {
  require_inside(metric, x, 0.0);
  const double n2 = v.squaredNorm();
  if (n2 == 0.0) throw Error(ErrorCode::ZeroVector, "causal character of the zero vector");
  const double q = v.dot(metric.g(x) * v);
  if (std::abs(q) <= band * n2) return CausalCharacter::lightlike;
  return q < 0 ? CausalCharacter::timelike : CausalCharacter::spacelike;
}

}  // namespace geovar
