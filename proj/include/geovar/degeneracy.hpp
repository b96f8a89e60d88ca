#pragma once

#include "geovar/gec.hpp"
#include "geovar/index_form.hpp"
#include "geovar/jacobi.hpp"

#include <optional>
#include <string>
#include <vector>

namespace geovar {

enum class DegeneracyKind { Nondegenerate, Degenerate, StronglyDegenerate, S1Nondegenerate, S1Degenerate };
const char* degeneracy_name(DegeneracyKind k);

struct StrongWitness {
  int k = 0;
  JacobiSolution field;       // over the whole k-fold path
  double sum_residual = 0.0;  // sup |sum_i J(t + i omega)| / sup |J|
  double periodic_residual = 0.0;
  double tangent_correction = 0.0;  // size of the gamma'-multiple that was removed
};

struct DegeneracyReport {
  DegeneracyKind kind = DegeneracyKind::Nondegenerate;
  int kernel_dim = 0;        // shooting kernel, or monodromy fixed dimension for the diagonal
  int index_kernel_dim = -1; // index-form cross-check (-1 when not run)
  int k = 1;                 // iterate order (periodic case)
  double omega = 0.0;
  std::vector<JacobiSolution> kernel_basis;
  std::optional<StrongWitness> witness;
  double rel_threshold = 1e-6;
  double index_threshold = 0.0;
  double gap_factor = 0.0;
  double residual = 0.0;  // boundary-condition residual of the path
  std::string note;
};

struct ClassifyOptions {
  int n_basis = 64;
  double rel_threshold = 1e-6;
  double critical_tol = 1e-6;
  bool crosscheck = true;
};

// Path runs on [0, T]. For the diagonal T is the closing time (possibly k periods).
DegeneracyReport classify(const MetricField& metric, const GeodesicPath& path, const Gec& gec,
                          const ClassifyOptions& opts = {});

// Searches periodic Jacobi fields along a k-fold closed path (duration k omega)
// whose iterate sum vanishes, after removing a gamma'-multiple.
std::optional<StrongWitness> strongly_degenerate_check(const MetricField& metric, const GeodesicPath& path, int k,
                                                       double tol = 1e-6);

struct EnergyPair {
  double total = 0.0;    // T E_R(gamma): energy after reparametrization to [0, 1]
  double minimal = 0.0;  // total / k^2
  int k = 1;
};
EnergyPair energies(const GeodesicPath& path, const AuxiliaryRiemannian& g_R, const PeriodicityVerdict& periodicity);

// n-fold concatenation of a closed path with omega = T.
GeodesicPath iterate(const GeodesicPath& path, int n, double tol = 1e-6);

struct CensusOptions {
  int positions_per_axis = 4;
  int directions = 8;
  int periods = 4;
  double tol = 1e-9;
  int max_iter = 40;
  int threads = 1;
  double closure_tol = 1e-6;
};

struct CensusOrbit {
  GeodesicPath path;  // one closing time omega * k
  double omega = 0.0; // closing time found by Newton (the prime period for listed iterates)
  int geometric_id = 0;  // orbits with the same image share an id
  EnergyPair energy;
  DegeneracyReport report;
};

struct CensusResult {
  ChartDomain K;
  double a = 0.0;
  double b = 0.0;
  int seeds = 0;
  int converged = 0;
  int geometric_orbits = 0;
  std::vector<CensusOrbit> orbits;
  bool member = true;
  std::string note;
};

// Closed geodesics with image in K, total energy <= b and minimal energy <= a.
// Iterates of every prime orbit are listed while their total energy fits b.
// Coverage depends on the seed density, which the result records.
CensusResult periodic_census(const MetricField& metric, const ChartDomain& K, double a, double b,
                             const CensusOptions& opts = {});
// Membership re-evaluated for other bounds on the same orbit list.
bool census_member(const CensusResult& census, double a, double b);

// Two-sided distance between the images of two closed paths.
double image_distance(const ChartDomain& chart, const GeodesicPath& A, const GeodesicPath& B, int samples = 64);

}  // namespace geovar
