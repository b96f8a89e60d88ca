#include "geovar/index_form.hpp"

#include "geovar/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace geovar {

std::vector<Vec> IndexFormOperator::node_values(const Vec& coef) const {
  const int m = dim();
  const Vec all = P * coef;
  std::vector<Vec> out(elements + 1);
  for (int i = 0; i <= elements; ++i) out[i] = all.segment(i * m, m);
  return out;
}

Vec IndexFormOperator::head_spectrum(int count) const {
  const int n = std::min<int>(count, static_cast<int>(eigenvalues.size()));
  return eigenvalues.head(n);
}

IndexFormOperator index_form(const MetricField& metric, const GeodesicPath& path, const Gec& gec, int n_basis,
                             double critical_tol) {
  if (n_basis < 1) throw Error(ErrorCode::InvalidArgument, "n_basis must be positive");
  const int m = metric.dim();
  if (gec.m != m) throw Error(ErrorCode::InvalidArgument, "GEC and metric dimensions differ");
  IndexFormOperator op;
  op.u = check_critical(metric, gec, path, critical_tol);
  op.path = path;
  op.gec = gec;
  op.n_basis = n_basis;
  const int N = n_basis + 1;
  op.elements = N;
  const double T = path.t_end;
  op.h = T / N;
  const bool periodic = gec.kind == GecKind::Diagonal;
  op.geometry = boundary_geometry(gec, metric, op.u, true);
  if (!op.geometry.nondegenerate && !periodic)
    throw Error(ErrorCode::DegenerateGec, "restricted product metric is degenerate at the endpoints");
  const int d = gec.dim();

  // Node-value space: m (N+1).
  const int nn = m * (N + 1);
  Mat Hn = Mat::Zero(nn, nn), Mn = Mat::Zero(nn, nn);
  static const Gauss5 rule;
  const Mat I = Mat::Identity(m, m);
  double omega2 = 0.0;
  for (int e = 0; e < N; ++e) {
    const double ta = e * op.h;
    Mat Ke = Mat::Zero(2 * m, 2 * m);
    for (int q = 0; q < Gauss5::n; ++q) {
      const double t = ta + rule.x[q] * op.h;
      const Vec y = path.state(t);
      const Vec x = y.head(m), v = y.tail(m);
      const Connection c = connection_unchecked(metric, x);
      Mat Mv(m, m);  // w -> Gamma(v, w)
      for (int k = 0; k < m; ++k) Mv.row(k) = (c.gamma[k] * v).transpose();
      const Mat JO = curvature_unchecked(metric, x).jacobi_operator(v);
      omega2 = std::max(omega2, Eigen::JacobiSVD<Mat>(JO).singularValues()[0]);
      const Mat Q = symmetrize(c.g * JO);
      const double pa = 1.0 - rule.x[q], pb = rule.x[q];
      Mat K(m, 2 * m), Phi(m, 2 * m);
      K << -I / op.h + pa * Mv, I / op.h + pb * Mv;
      Phi << pa * I, pb * I;
      Ke += rule.w[q] * op.h * (K.transpose() * c.g * K + Phi.transpose() * Q * Phi);
    }
    Hn.block(e * m, e * m, 2 * m, 2 * m) += Ke;
    Mat Me(2 * m, 2 * m);
    Me << I, -I, -I, I;
    Mn.block(e * m, e * m, 2 * m, 2 * m) += Me / op.h;
  }
  Mn.topLeftCorner(m, m) += I;
  op.curvature_scale = omega2;

  // Coefficients (a, V_1..V_{N-1}) -> node values.
  const int nc = d + m * (N - 1);
  op.P = Mat::Zero(nn, nc);
  if (d) {
    op.P.block(0, 0, m, d) = op.geometry.tangent.topRows(m);
    op.P.block(N * m, 0, m, d) = op.geometry.tangent.bottomRows(m);
  }
  for (int i = 1; i < N; ++i) op.P.block(i * m, d + (i - 1) * m, m, m) = I;

  Mat H = op.P.transpose() * Hn * op.P;
  if (d) {
    Vec eta(2 * m);
    eta << path.v(0.0), path.v(T);
    H.topLeftCorner(d, d) -= op.geometry.S(eta);
  }
  op.asymmetry = max_abs(Mat(H - H.transpose()));
  op.H = symmetrize(H);
  op.M = symmetrize(op.P.transpose() * Mn * op.P);

  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(op.H, op.M);
  if (es.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "index form eigen-solve failed");
  op.eigenvalues = es.eigenvalues();
  op.eigenvectors = es.eigenvectors();
  op.spectral_norm = op.eigenvalues.cwiseAbs().maxCoeff();
  // P1 elements shift a kernel eigenvalue by about omega^2 h^2 / 12.
  op.threshold = std::max(1e-6 * op.spectral_norm, omega2 * op.h * op.h);
  std::vector<int> kept;
  double max_kept = 0.0, min_rejected = std::numeric_limits<double>::infinity();
  for (int i = 0; i < op.eigenvalues.size(); ++i) {
    const double l = op.eigenvalues[i];
    if (std::abs(l) <= op.threshold) {
      kept.push_back(i);
      max_kept = std::max(max_kept, std::abs(l));
    } else {
      min_rejected = std::min(min_rejected, std::abs(l));
      if (l < 0) ++op.morse_index;
    }
  }
  op.kernel_dim = static_cast<int>(kept.size());
  op.gap_factor = kept.empty() ? std::numeric_limits<double>::infinity()
                               : min_rejected / std::max(max_kept, std::numeric_limits<double>::min());
  op.kernel.resize(nc, op.kernel_dim);
  for (int j = 0; j < op.kernel_dim; ++j) op.kernel.col(j) = op.eigenvectors.col(kept[j]);
  return op;
}

std::vector<JacobiSolution> kernel_refine(const MetricField& metric, const IndexFormOperator& op, double tol) {
  std::vector<JacobiSolution> out;
  if (op.kernel_dim == 0) return out;
  const int m = op.dim(), N = op.elements;
  const GeodesicPath& path = op.path;
  Mat J0 = Mat::Zero(m, 2 * m), DJ0 = Mat::Zero(m, 2 * m);
  J0.leftCols(m) = Mat::Identity(m, m);
  DJ0.rightCols(m) = Mat::Identity(m, m);
  const JacobiBundle fund = propagate_bundle(path, J0, DJ0, path.t_end);
  Mat A(m * (N + 1), 2 * m);
  for (int i = 0; i <= N; ++i) A.middleRows(i * m, m) = fund.J(i * op.h);
  const auto fit = A.colPivHouseholderQr();

  const PJacobiSpace exact = pjacobi_shooting(metric, op.gec, path, op.u);
  if (exact.dimension == 0)
    throw Error(ErrorCode::RefinementDiverged, "shooting finds no P-Jacobi field for a nonempty discrete kernel");
  const Mat Qk = Eigen::HouseholderQR<Mat>(exact.initial_data).householderQ() *
                 Mat::Identity(2 * m, exact.dimension);

  for (int j = 0; j < op.kernel_dim; ++j) {
    const Vec nodes = op.P * op.kernel.col(j);
    const Vec z = fit.solve(nodes);
    const Vec zp = Qk * (Qk.transpose() * z);
    if ((z - zp).norm() > 0.1 * z.norm())
      throw Error(ErrorCode::RefinementDiverged, "kernel vector is not close to an exact P-Jacobi field");
    JacobiSolution s = propagate_jacobi(metric, path, zp.head(m), zp.tail(m));
    if (pjacobi_boundary_residual(metric, op.gec, s, op.u).norm() > tol * std::max(1.0, zp.norm()))
      throw Error(ErrorCode::RefinementDiverged, "refined field violates the P-Jacobi boundary conditions");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace geovar
