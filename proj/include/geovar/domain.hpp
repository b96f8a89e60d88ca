#pragma once

#include "geovar/common.hpp"

#include <limits>
#include <string>
#include <vector>

namespace geovar {

// Axis-aligned coordinate box. An axis with period > 0 is an angular
// coordinate: it is never left, and displacements along it are wrapped.
struct ChartDomain {
  int dim = 0;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<double> period;
  std::string label;

  ChartDomain() = default;
  ChartDomain(std::vector<double> lo, std::vector<double> hi, std::string name = "",
              std::vector<double> periods = {});

  static ChartDomain unbounded(int m, std::string name = "");

  bool periodic(int axis) const { return period[axis] > 0.0; }
  bool contains(const Vec& x, double margin = 0.0) const;
  // Shortest coordinate displacement from a to b, wrapping periodic axes.
  Vec displacement(const Vec& from, const Vec& to) const;
  Vec wrap(const Vec& x) const;
  void validate() const;
};

}  // namespace geovar
