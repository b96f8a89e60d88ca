#include <doctest.h>

#include "geovar/builtins.hpp"
#include "geovar/metric.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace geovar;
using std::numbers::pi;

namespace {

// Independent oracle: Christoffel symbols straight from the textbook formula with
// its own central differences, no shared code with the library.
double oracle_gamma(const MetricField& f, const Vec& x, int k, int i, int j) {
  const int m = f.dim();
  const double h = 1e-5;
  auto dgl = [&](int a, int r, int c) {
    Vec xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    return (f.g(xp)(r, c) - f.g(xm)(r, c)) / (2 * h);
  };
  Mat ginv = f.g(x).inverse();
  double s = 0;
  for (int l = 0; l < m; ++l) s += 0.5 * ginv(k, l) * (dgl(i, l, j) + dgl(j, l, i) - dgl(l, i, j));
  return s;
}

Vec random_point(const MetricField& f, std::mt19937_64& rng) {
  const auto& d = f.domain();
  Vec x(d.dim);
  for (int i = 0; i < d.dim; ++i) {
    double lo = d.lower[i], hi = d.upper[i];
    if (!std::isfinite(lo)) lo = -3;
    if (!std::isfinite(hi)) hi = lo + 6;
    const double pad = 0.1 * (hi - lo);
    x[i] = std::uniform_real_distribution<double>(lo + pad, hi - pad)(rng);
  }
  return x;
}

Vec random_vec(int m, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec v(m);
  for (int i = 0; i < m; ++i) v[i] = n(rng);
  return v;
}

std::vector<MetricField> all_builtins() {
  return {euclidean_metric(3), minkowski_metric(4), sphere_metric(1.0), sphere_metric(2.0),
          flat_torus_metric(2), football_metric(), schwarzschild_metric(1.0)};
}

}  // namespace

TEST_CASE("eval_metric examples") {
  CHECK(max_abs(Mat(eval_metric(euclidean_metric(2), Vec::Zero(2)) - Mat::Identity(2, 2))) == 0.0);
  Mat mk = eval_metric(minkowski_metric(4), Vec::Constant(4, 0.3));
  CHECK(mk(0, 0) == -1.0);
  CHECK(mk(3, 3) == 1.0);
  Mat s = eval_metric(sphere_metric(), Vec::Map(std::vector<double>{pi / 2, 0.0}.data(), 2));
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(1, 1) == doctest::Approx(1.0));
  CHECK_THROWS_AS(eval_metric(sphere_metric(), Vec::Map(std::vector<double>{0.0, 0.0}.data(), 2)), Error);
}

TEST_CASE("sphere christoffel closed form and oracle") {
  const auto f = sphere_metric();
  Vec x(2);
  x << pi / 4, 0.3;
  const auto c = christoffel(f, x);
  CHECK(c.gamma[0](1, 1) == doctest::Approx(-std::sin(pi / 4) * std::cos(pi / 4)).epsilon(1e-12));
  CHECK(c.gamma[1](0, 1) == doctest::Approx(1.0 / std::tan(pi / 4)).epsilon(1e-12));
  CHECK(c.gamma[1](1, 0) == doctest::Approx(1.0 / std::tan(pi / 4)).epsilon(1e-12));
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(std::abs(c.gamma[k](i, j) - oracle_gamma(f, x, k, i, j)) < 1e-8);
}

TEST_CASE("analytic and finite-difference christoffels agree") {
  std::mt19937_64 rng(7);
  for (const auto& f : all_builtins()) {
    const auto fd = f.finite_difference();
    for (int n = 0; n < 20; ++n) {
      Vec x = random_point(f, rng);
      auto a = christoffel(f, x);
      auto b = christoffel(fd, x);
      const double scale = std::max(1.0, a.max_norm());
      for (size_t k = 0; k < a.gamma.size(); ++k)
        CHECK(max_abs(Mat(a.gamma[k] - b.gamma[k])) <= 10 * 1e-10 * scale);
      for (size_t k = 0; k < a.gamma.size(); ++k) CHECK(max_abs(Mat(a.gamma[k] - a.gamma[k].transpose())) == 0.0);
    }
  }
}

TEST_CASE("metric compatibility of the connection") {
  std::mt19937_64 rng(11);
  for (const auto& f : all_builtins()) {
    const int m = f.dim();
    for (int n = 0; n < 10; ++n) {
      Vec x = random_point(f, rng), u = random_vec(m, rng), v = random_vec(m, rng), w = random_vec(m, rng);
      const double h = 1e-5;
      const double lhs = (v.dot(f.g(x + h * u) * w) - v.dot(f.g(x - h * u) * w)) / (2 * h);
      auto c = christoffel(f, x);
      const Mat G = f.g(x);
      const double rhs = c(u, v).dot(G * w) + v.dot(G * c(u, w));
      CHECK(std::abs(lhs - rhs) <= 1e-6 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("flat builtins have zero curvature") {
  std::mt19937_64 rng(3);
  for (const auto& f : {euclidean_metric(3), minkowski_metric(4), flat_torus_metric(3)}) {
    for (int n = 0; n < 10; ++n) {
      Vec x = random_point(f, rng);
      CHECK(christoffel(f, x).max_norm() <= 1e-12);
      CHECK(curvature(f, x).max_norm() <= 1e-12);
      CHECK(curvature(f.finite_difference(), x).max_norm() <= 1e-6);
    }
  }
}

TEST_CASE("constant curvature surfaces") {
  std::mt19937_64 rng(5);
  struct Case { MetricField f; double K; };
  std::vector<Case> cases{{sphere_metric(1.0), 1.0}, {sphere_metric(2.0), 0.25}, {football_metric(), 0.25}};
  for (auto& cs : cases) {
    for (int n = 0; n < 10; ++n) {
      Vec x = random_point(cs.f, rng);
      Vec e0 = Vec::Unit(2, 0), e1 = Vec::Unit(2, 1);
      CHECK(curvature(cs.f, x).sectional(e0, e1) == doctest::Approx(cs.K).epsilon(1e-10));
      CHECK(curvature(cs.f.finite_difference(), x).sectional(e0, e1) == doctest::Approx(cs.K).epsilon(1e-5));
      // Ricci = K g in dimension two.
      auto cv = curvature(cs.f, x);
      CHECK(max_abs(Mat(cv.ricci - cs.K * cv.g)) <= 1e-9);
      CHECK(cv.scalar == doctest::Approx(2 * cs.K).epsilon(1e-9));
    }
  }
}

TEST_CASE("curvature symmetries") {
  std::mt19937_64 rng(13);
  for (const auto& f : all_builtins()) {
    const int m = f.dim();
    for (int n = 0; n < 5; ++n) {
      Vec x = random_point(f, rng);
      auto cv = curvature(f, x);
      Vec X = random_vec(m, rng), Y = random_vec(m, rng), Z = random_vec(m, rng), W = random_vec(m, rng);
      const double scale = std::max(1.0, cv.max_norm()) * X.norm() * Y.norm() * Z.norm() * W.norm() * 10;
      CHECK(max_abs(Vec(cv.apply(X, Y, Z) + cv.apply(Y, X, Z))) <= 1e-6 * scale);
      CHECK(std::abs(cv.lowered(X, Y, Z, W) - cv.lowered(Z, W, X, Y)) <= 1e-6 * scale);
      CHECK(std::abs(cv.lowered(X, Y, Z, W) + cv.lowered(X, Y, W, Z)) <= 1e-6 * scale);
      // First Bianchi identity.
      Vec b = cv.apply(X, Y, Z) + cv.apply(Y, Z, X) + cv.apply(Z, X, Y);
      CHECK(max_abs(b) <= 1e-6 * scale);
    }
  }
}

TEST_CASE("schwarzschild is Ricci flat") {
  const auto f = schwarzschild_metric(1.0);
  Vec x(4);
  x << 0.0, 10.0, pi / 2, 0.0;
  CHECK(max_abs(curvature(f.finite_difference(), x).ricci) <= 1e-5);
  CHECK(max_abs(curvature(f, x).ricci) <= 1e-12);
  // Not flat: radial-temporal sectional curvature is -2M/r^3 in magnitude.
  auto cv = curvature(f, x);
  CHECK(std::abs(cv.sectional(Vec::Unit(4, 0), Vec::Unit(4, 1))) == doctest::Approx(2.0 / 1000.0).epsilon(1e-9));
}

TEST_CASE("product metric") {
  auto p = product_metric(euclidean_metric(2));
  CHECK(p.dim() == 4);
  CHECK(p.index() == 2);
  Mat G = eval_metric(p, Vec::Zero(4));
  CHECK(G(0, 0) == 1.0);
  CHECK(G(2, 2) == -1.0);
  CHECK(product_metric(minkowski_metric(4)).index() == 4);
  auto s = product_metric(sphere_metric());
  Vec x(4);
  x << 1.0, 0.2, 2.0, 1.0;
  auto sig = signature_of(eval_metric(s, x));
  CHECK(sig.positive == 2);
  CHECK(sig.negative == 2);
}

TEST_CASE("distribution and negative eigenprojector") {
  const auto gR = AuxiliaryRiemannian::euclidean(2);
  auto dom = ChartDomain::unbounded(2);
  DistributionField zero{dom, 0, [](const Vec&) { return Mat::Zero(2, 2); }};
  CHECK(max_abs(Mat(metric_from_distribution(zero, gR).g(Vec::Zero(2)) - Mat::Identity(2, 2))) == 0.0);
  DistributionField full{dom, 2, [](const Vec&) { return Mat::Identity(2, 2); }};
  CHECK(max_abs(Mat(metric_from_distribution(full, gR).g(Vec::Zero(2)) + Mat::Identity(2, 2))) <= 1e-14);
  DistributionField e1{dom, 1, [](const Vec&) { Mat P = Mat::Zero(2, 2); P(0, 0) = 1; return P; }};
  auto g1 = metric_from_distribution(e1, gR);
  CHECK(g1.index() == 1);
  Mat G1 = g1.g(Vec::Zero(2));
  CHECK(G1(0, 0) == doctest::Approx(-1.0));
  CHECK(G1(1, 1) == doctest::Approx(1.0));
  CHECK(std::abs(G1(0, 1)) <= 1e-14);
  DistributionField bad{dom, 1, [](const Vec&) { Mat P = Mat::Zero(2, 2); P(0, 0) = 2; return P; }};
  CHECK_THROWS_AS(metric_from_distribution(bad, gR), Error);

  CHECK(max_abs(negative_eigenprojector(euclidean_metric(3), AuxiliaryRiemannian::euclidean(3), Vec::Zero(3))) == 0.0);
  Mat Pm = negative_eigenprojector(minkowski_metric(4), AuxiliaryRiemannian::euclidean(4), Vec::Zero(4));
  Mat expect = Mat::Zero(4, 4);
  expect(0, 0) = 1;
  CHECK(max_abs(Mat(Pm - expect)) <= 1e-12);
  auto neg = metric_from_distribution(full, gR);
  CHECK(max_abs(Mat(negative_eigenprojector(neg, gR, Vec::Zero(2)) - Mat::Identity(2, 2))) <= 1e-12);
}

TEST_CASE("distribution round trip with position dependent projector") {
  // g_R-orthogonal rank-1 projector onto a rotating line.
  const auto gR = AuxiliaryRiemannian::euclidean(2);
  DistributionField d{ChartDomain::unbounded(2), 1, [](const Vec& x) {
                        Vec u(2);
                        u << std::cos(x[0] * x[1]), std::sin(x[0] * x[1]);
                        return Mat(u * u.transpose());
                      }};
  auto g = metric_from_distribution(d, gR);
  std::mt19937_64 rng(17);
  for (int n = 0; n < 20; ++n) {
    Vec x = random_vec(2, rng);
    CHECK(max_abs(Mat(negative_eigenprojector(g, gR, x) - d.projector(x))) <= 1e-8);
  }
}

TEST_CASE("causal character") {
  auto mk = minkowski_metric(4);
  Vec x = Vec::Zero(4);
  Vec t = Vec::Unit(4, 0);
  Vec l(4);
  l << 1, 1, 0, 0;
  CHECK(causal_character(mk, x, t) == CausalCharacter::timelike);
  CHECK(causal_character(mk, x, l) == CausalCharacter::lightlike);
  CHECK(causal_character(mk, x, Vec::Unit(4, 2)) == CausalCharacter::spacelike);
  CHECK(causal_character(euclidean_metric(2), Vec::Zero(2), Vec::Ones(2)) == CausalCharacter::spacelike);
  CHECK_THROWS_AS(causal_character(mk, x, Vec::Zero(4)), Error);
}

TEST_CASE("expression metric matches builtin sphere") {
  ChartDomain dom({0.01, 0.0}, {pi - 0.01, 2 * pi}, "", {0.0, 2 * pi});
  auto e = expression_metric({{"1", "0"}, {"", "sin(th)^2"}}, {"th", "ph"}, dom, 0);
  auto s = sphere_metric();
  Vec x(2);
  x << 1.1, 0.4;
  CHECK(max_abs(Mat(e.g(x) - s.g(x))) <= 1e-15);
  auto ce = christoffel(e, x), cs = christoffel(s, x);
  for (int k = 0; k < 2; ++k) CHECK(max_abs(Mat(ce.gamma[k] - cs.gamma[k])) <= 1e-8);
  CHECK_THROWS_AS(expression_metric({{"1", "x"}, {"y", "1"}}, {"x", "y"}, ChartDomain::unbounded(2), 0), Error);
  CHECK_THROWS_AS(expression_metric({{"1", "0"}, {"0", "foo(x)"}}, {"x", "y"}, ChartDomain::unbounded(2), 0), Error);
}
