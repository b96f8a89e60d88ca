#include "geovar/builtins.hpp"

#include "geovar/expression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geovar {

namespace {

constexpr double kPi = std::numbers::pi;
const double kInf = std::numeric_limits<double>::infinity();

MetricField constant_metric(ChartDomain dom, int index, Mat G, std::string name) {
  const int m = dom.dim;
  MetricField f(std::move(dom), index, [G](const Vec&) { return G; }, std::move(name));
  f.set_first_derivatives([m](const Vec&) { return std::vector<Mat>(m, Mat::Zero(m, m)); });
  f.set_second_derivatives([m](const Vec&) { return std::vector<Mat>(m * m, Mat::Zero(m, m)); });
  return f;
}

std::string strip(const std::string& s) {
  std::string r;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) r += c;
  return r;
}

}  // namespace

MetricField euclidean_metric(int m) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "dimension must be positive");
  return constant_metric(ChartDomain::unbounded(m, "R^" + std::to_string(m)), 0, Mat::Identity(m, m), "euclidean");
}

MetricField minkowski_metric(int m) {
  if (m < 2) throw Error(ErrorCode::InvalidArgument, "Minkowski needs dimension >= 2");
  Mat G = Mat::Identity(m, m);
  G(0, 0) = -1.0;
  return constant_metric(ChartDomain::unbounded(m, "R^" + std::to_string(m)), 1, G, "minkowski");
}

MetricField sphere_metric(double radius, double eps) {
  if (!(radius > 0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
  const double r2 = radius * radius;
  ChartDomain dom({eps, 0.0}, {kPi - eps, 2 * kPi}, "sphere chart", {0.0, 2 * kPi});
  MetricField f(dom, 0, [r2](const Vec& x) {
    Mat G = Mat::Zero(2, 2);
    const double s = std::sin(x[0]);
    G(0, 0) = r2;
    G(1, 1) = r2 * s * s;
    return G;
  }, radius == 1.0 ? "sphere" : "sphere(r=" + std::to_string(radius) + ")");
  f.set_first_derivatives([r2](const Vec& x) {
    std::vector<Mat> d(2, Mat::Zero(2, 2));
    d[0](1, 1) = r2 * std::sin(2 * x[0]);
    return d;
  });
  f.set_second_derivatives([r2](const Vec& x) {
    std::vector<Mat> d(4, Mat::Zero(2, 2));
    d[0](1, 1) = 2 * r2 * std::cos(2 * x[0]);
    return d;
  });
  return f;
}

MetricField flat_torus_metric(int m, std::vector<double> periods) {
  if (periods.empty()) periods.assign(m, 2 * kPi);
  if ((int)periods.size() != m) throw Error(ErrorCode::InvalidArgument, "one period per axis required");
  std::vector<double> lo(m, 0.0);
  ChartDomain dom(lo, periods, "flat torus", periods);
  return constant_metric(dom, 0, Mat::Identity(m, m), "flat_torus");
}

MetricField football_metric(double eps) {
  ChartDomain dom({0.0, -kPi + eps}, {2 * kPi, kPi - eps}, "football chart", {2 * kPi, 0.0});
  MetricField f(dom, 0, [](const Vec& x) {
    Mat G = Mat::Zero(2, 2);
    const double c = std::cos(0.5 * x[1]);
    G(0, 0) = c * c;
    G(1, 1) = 1.0;
    return G;
  }, "football");
  f.set_first_derivatives([](const Vec& x) {
    std::vector<Mat> d(2, Mat::Zero(2, 2));
    d[1](0, 0) = -0.5 * std::sin(x[1]);
    return d;
  });
  f.set_second_derivatives([](const Vec& x) {
    std::vector<Mat> d(4, Mat::Zero(2, 2));
    d[3](0, 0) = -0.5 * std::cos(x[1]);
    return d;
  });
  return f;
}

MetricField schwarzschild_metric(double mass, double eps) {
  if (!(mass > 0)) throw Error(ErrorCode::InvalidArgument, "mass must be positive");
  const double M = mass;
  ChartDomain dom({-kInf, 2 * M + eps, eps, 0.0}, {kInf, kInf, kPi - eps, 2 * kPi}, "schwarzschild exterior",
                  {0.0, 0.0, 0.0, 2 * kPi});
  MetricField f(dom, 1, [M](const Vec& x) {
    const double r = x[1], s = std::sin(x[2]);
    const double fr = 1.0 - 2.0 * M / r;
    Mat G = Mat::Zero(4, 4);
    G(0, 0) = -fr;
    G(1, 1) = 1.0 / fr;
    G(2, 2) = r * r;
    G(3, 3) = r * r * s * s;
    return G;
  }, "schwarzschild");
  f.set_first_derivatives([M](const Vec& x) {
    const double r = x[1], th = x[2], s = std::sin(th);
    const double fr = 1.0 - 2.0 * M / r, fp = 2.0 * M / (r * r);
    std::vector<Mat> d(4, Mat::Zero(4, 4));
    d[1](0, 0) = -fp;
    d[1](1, 1) = -fp / (fr * fr);
    d[1](2, 2) = 2 * r;
    d[1](3, 3) = 2 * r * s * s;
    d[2](3, 3) = r * r * std::sin(2 * th);
    return d;
  });
  f.set_second_derivatives([M](const Vec& x) {
    const double r = x[1], th = x[2], s = std::sin(th);
    const double fr = 1.0 - 2.0 * M / r, fp = 2.0 * M / (r * r), fpp = -4.0 * M / (r * r * r);
    std::vector<Mat> d(16, Mat::Zero(4, 4));
    Mat& rr = d[1 * 4 + 1];
    rr(0, 0) = -fpp;
    rr(1, 1) = -fpp / (fr * fr) + 2 * fp * fp / (fr * fr * fr);
    rr(2, 2) = 2.0;
    rr(3, 3) = 2 * s * s;
    d[1 * 4 + 2](3, 3) = 2 * r * std::sin(2 * th);
    d[2 * 4 + 1](3, 3) = 2 * r * std::sin(2 * th);
    d[2 * 4 + 2](3, 3) = 2 * r * r * std::cos(2 * th);
    return d;
  });
  return f;
}

MetricField expression_metric(const std::vector<std::vector<std::string>>& components,
                              const std::vector<std::string>& variables, ChartDomain domain, int index,
                              std::string name) {
  const int m = domain.dim;
  if ((int)components.size() != m) throw Error(ErrorCode::ConfigError, "components must be an m x m array");
  if ((int)variables.size() != m) throw Error(ErrorCode::ConfigError, "one variable name per coordinate required");
  std::vector<Expression> upper;
  for (int i = 0; i < m; ++i) {
    if ((int)components[i].size() != m) throw Error(ErrorCode::ConfigError, "components must be an m x m array");
    for (int j = 0; j < m; ++j) {
      if (j < i) {
        const std::string lo = strip(components[i][j]);
        if (!lo.empty() && lo != strip(components[j][i]))
          throw Error(ErrorCode::ConfigError, "components are not symmetric at (" + std::to_string(i) + "," +
                                                  std::to_string(j) + ")");
        continue;
      }
      upper.push_back(Expression::parse(components[i][j], variables));
    }
  }
  auto fn = [upper, m](const Vec& x) {
    Mat G(m, m);
    int k = 0;
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        G(i, j) = upper[k++](x);
        G(j, i) = G(i, j);
      }
    return G;
  };
  return MetricField(std::move(domain), index, fn, std::move(name));
}

MetricField builtin_metric(const std::string& name, const BuiltinParams& p) {
  if (name == "euclidean") return euclidean_metric(p.dim);
  if (name == "minkowski") return minkowski_metric(p.dim);
  if (name == "sphere") return sphere_metric(p.radius, p.eps < 0 ? 1e-2 : p.eps);
  if (name == "flat_torus") return flat_torus_metric(p.dim, p.periods);
  if (name == "football") return football_metric(p.eps < 0 ? 1e-2 : p.eps);
  if (name == "schwarzschild") return schwarzschild_metric(p.mass, p.eps < 0 ? 1e-3 : p.eps);
  throw Error(ErrorCode::ConfigError, "unknown builtin metric '" + name + "'");
}

}  // namespace geovar
