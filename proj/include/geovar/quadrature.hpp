#pragma once

#include <array>
#include <cmath>

namespace geovar {

// Five-point Gauss-Legendre rule on [0,1].
struct Gauss5 {
  static constexpr int n = 5;
  std::array<double, 5> x;
  std::array<double, 5> w;
  Gauss5() {
    const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
    const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
    const std::array<double, 5> xs{-b, -a, 0.0, a, b};
    const std::array<double, 5> ws{wb, wa, 128.0 / 225.0, wa, wb};
    for (int i = 0; i < 5; ++i) {
      x[i] = 0.5 * (xs[i] + 1.0);
      w[i] = 0.5 * ws[i];
    }
  }
};

// Three-point rule on [0,1].
struct Gauss3 {
  static constexpr int n = 3;
  std::array<double, 3> x{0.5 - 0.5 * 0.7745966692414834, 0.5, 0.5 + 0.5 * 0.7745966692414834};
  std::array<double, 3> w{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
};

// Composite rule over [a,b] with `pieces` equal panels.
template <class Rule, class F>
double integrate_composite(F&& f, double a, double b, int pieces) {
  static const Rule rule;
  const double h = (b - a) / pieces;
  double s = 0.0;
  for (int p = 0; p < pieces; ++p)
    for (int i = 0; i < Rule::n; ++i) s += rule.w[i] * f(a + (p + rule.x[i]) * h);
  return s * h;
}

}  // namespace geovar
