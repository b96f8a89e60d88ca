#pragma once

#include "geovar/gec.hpp"
#include "geovar/jacobi.hpp"

#include <vector>

namespace geovar {

// Second variation of the energy on piecewise-linear fields. Coefficients are
// (a, V_1, ..., V_{N-1}): a spans the linearized endpoint space (the endpoint
// node values are B a), V_i are interior node values.
struct IndexFormOperator {
  GeodesicPath path;
  Gec gec;
  Vec u;
  BoundaryGeometry geometry;
  int n_basis = 0;   // interior nodes
  int elements = 0;  // n_basis + 1
  double h = 0.0;
  Mat P;             // node values (m (N+1)) from coefficients
  Mat H;             // index form
  Mat M;             // mass: g_R(v(0), w(0)) + int v'.w'
  double asymmetry = 0.0;  // before symmetrization
  Vec eigenvalues;         // ascending, generalized with respect to M
  Mat eigenvectors;        // M-orthonormal columns
  double spectral_norm = 0.0;
  double curvature_scale = 0.0;  // max over the path of |curvature operator|
  double threshold = 0.0;
  double gap_factor = 0.0;  // smallest rejected |lambda| over largest kept
  int kernel_dim = 0;
  int morse_index = 0;
  Mat kernel;  // coefficient vectors

  int dim() const { return path.dim(); }
  std::vector<Vec> node_values(const Vec& coef) const;
  Vec head_spectrum(int count = 10) const;
};

// Path runs on [0, T]; throws NotCritical if it does not satisfy the boundary
// conditions, DegenerateGec if the restricted product metric is degenerate
// (the periodic case is exempt).
IndexFormOperator index_form(const MetricField& metric, const GeodesicPath& path, const Gec& gec, int n_basis,
                             double critical_tol = 1e-6);

// Fits exact Jacobi fields to the discrete kernel and projects them onto the
// shooting kernel; throws RefinementDiverged when the projection moves a fit
// by more than 10%.
std::vector<JacobiSolution> kernel_refine(const MetricField& metric, const IndexFormOperator& op,
                                          double tol = 1e-6);

}  // namespace geovar
