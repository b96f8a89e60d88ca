#include <doctest.h>

#include "geovar/builtins.hpp"
#include "geovar/geodesic.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace geovar;
using std::numbers::pi;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Great circle on the unit sphere through (pi/2, 0) with chart velocity v0,
// computed in the embedding.
Vec sphere_oracle(const Vec& v0, double t) {
  Eigen::Vector3d P0(1, 0, 0);
  Eigen::Vector3d V = v0[0] * Eigen::Vector3d(0, 0, -1) + v0[1] * Eigen::Vector3d(0, 1, 0);
  const double s = V.norm();
  Eigen::Vector3d P = std::cos(s * t) * P0 + std::sin(s * t) * V / s;
  return v2(std::acos(P.z()), std::atan2(P.y(), P.x()));
}

double wrapped_error(const Vec& a, const Vec& b) {
  Vec d = a - b;
  d[1] -= 2 * pi * std::round(d[1] / (2 * pi));
  return d.norm();
}

}  // namespace

TEST_CASE("dopri5 dense output and direction") {
  auto f = [](double, const Vec& y, Vec& dy) { dy = y; };
  Vec y0 = Vec::Ones(1);
  OdeOptions o;
  o.rtol = 1e-12;
  o.atol = 1e-14;
  auto r = integrate_dopri5(f, 0.0, y0, 2.0, o);
  CHECK(r.status == OdeStatus::completed);
  for (double t : {0.0, 0.123, 0.77, 1.5, 2.0}) CHECK(std::abs(r.trajectory.eval(t)[0] - std::exp(t)) <= 1e-9 * std::exp(t));
  auto b = integrate_dopri5(f, 1.0, y0, -1.0, o);
  for (double t : {0.9, 0.0, -0.4, -1.0}) CHECK(std::abs(b.trajectory.eval(t)[0] - std::exp(t - 1.0)) <= 1e-10);
  // Dense output error between nodes is of the same order as at the nodes.
  o.fixed_step = true;
  o.step = 0.1;
  auto c = integrate_dopri5(f, 0.0, y0, 1.0, o);
  CHECK(c.steps == 10);
  CHECK(std::abs(c.trajectory.eval(0.55)[0] - std::exp(0.55)) <= 1e-7);
}

TEST_CASE("dopri5 stops at domain exit") {
  auto f = [](double, const Vec&, Vec& dy) { dy = Vec::Ones(1); };
  auto inside = [](const Vec& y) { return y[0] < 0.5; };
  auto r = integrate_dopri5(f, 0.0, Vec::Zero(1), 3.0, OdeOptions{}, inside);
  CHECK(r.status == OdeStatus::domain_exit);
  CHECK(r.t_final == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("geodesic examples") {
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(1, 0), 1.0);
  CHECK((e.x(1.0) - v2(1, 0)).norm() <= 1e-12);
  auto s = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 2 * pi);
  CHECK(wrapped_error(s.x(2 * pi), v2(pi / 2, 0)) <= 1e-8);
  CHECK((s.v(2 * pi) - v2(0, 1)).norm() <= 1e-8);
  Vec x0 = Vec::Constant(4, 0.5), l(4);
  l << 1, 0, 1, 0;
  auto mk = integrate_geodesic(minkowski_metric(4), x0, l, 3.0);
  CHECK(std::abs(mk.speed) == 0.0);
  CHECK(mk.conservation_error <= 1e-14);
  CHECK((mk.x(3.0) - (x0 + 3 * l)).norm() <= 1e-12);
}

TEST_CASE("sphere geodesics match great-circle oracle and conserve speed") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-0.8, 0.8);
  for (int n = 0; n < 10; ++n) {
    const double inc = U(rng);
    Vec v0 = v2(-std::sin(inc), std::cos(inc)) * (0.5 + std::abs(U(rng)));
    auto p = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v0, 5.0);
    REQUIRE(p.complete());
    CHECK(p.conservation_error <= 1e-8 * (1 + std::abs(p.speed)));
    for (double t : {0.3, 1.7, 4.1, 5.0}) CHECK(wrapped_error(p.x(t), sphere_oracle(v0, t)) <= 1e-8);
  }
}

TEST_CASE("exp map") {
  CHECK((exp_map(sphere_metric(), v2(1, 1), Vec::Zero(2)) - v2(1, 1)).norm() == 0.0);
  CHECK((exp_map(euclidean_metric(2), v2(1, 2), v2(0.5, -3)) - v2(1.5, -1)).norm() <= 1e-12);
  CHECK(wrapped_error(exp_map(sphere_metric(), v2(pi / 2, 0), v2(0, pi)), v2(pi / 2, pi)) <= 1e-9);
  CHECK_THROWS_AS(exp_map(sphere_metric(), v2(pi / 2, 0), v2(4, 0)), Error);
}

TEST_CASE("flow homogeneity") {
  const auto f = sphere_metric();
  Vec x = v2(1.2, 0.4), v = v2(0.3, 0.5);
  for (double c : {2.0, 0.5, -1.0}) {
    const double t = 1.3;
    auto a = integrate_geodesic(f, x, c * v, t);
    auto b = integrate_geodesic(f, x, v, c * t);
    CHECK((a.x(t) - b.x(c * t)).norm() <= 1e-9);
  }
}

TEST_CASE("parallel transport") {
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(1, 2), 1.0);
  auto we = parallel_transport(e, v2(0.3, -1));
  CHECK((we.at(1.0) - v2(0.3, -1)).norm() <= 1e-14);

  auto s = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 2.0);
  auto ws = parallel_transport(s, v2(0, 1));
  CHECK((ws.at(2.0) - v2(0, 1)).norm() <= 1e-10);

  // Isometry on a tilted geodesic.
  auto t = integrate_geodesic(sphere_metric(), v2(1.3, 0.2), v2(0.4, 0.9), 2.5);
  Mat W(2, 2);
  W << 1, 0.2, -0.5, 1;
  auto wt = parallel_transport(t, W);
  const Mat G0 = t.metric.g(t.x(0));
  const Mat gram0 = W.transpose() * G0 * W;
  for (double q : {0.5, 1.5, 2.5}) {
    Mat Wq = wt.at(q);
    Mat gram = Wq.transpose() * t.metric.g(t.x(q)) * Wq;
    CHECK(max_abs(Mat(gram - gram0)) <= 1e-8);
  }
  // Along a sampled (non-geodesic) curve: the Curve overload.
  Curve c;
  c.t0 = 0;
  c.t1 = 1;
  c.position = [](double u) { return v2(1.2 + 0.3 * u * u, u); };
  c.velocity = [](double u) { return v2(0.6 * u, 1.0); };
  auto wc = parallel_transport(sphere_metric(), c, W);
  Mat g1 = wc.at(1.0).transpose() * sphere_metric().g(c.position(1.0)) * wc.at(1.0);
  CHECK(max_abs(Mat(g1 - W.transpose() * sphere_metric().g(c.position(0.0)) * W)) <= 1e-8);

  Vec x0 = Vec::Zero(4), t4 = Vec::Unit(4, 0);
  auto mp = integrate_geodesic(minkowski_metric(4), x0, Vec::Unit(4, 1), 1.0);
  auto wm = parallel_transport(mp, t4);
  CHECK(causal_character(minkowski_metric(4), mp.x(1.0), wm.at(1.0).col(0)) == CausalCharacter::timelike);
}

TEST_CASE("length and energy") {
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(1, 0), 1.0);
  auto le = riem_length_energy(e, AuxiliaryRiemannian::euclidean(2));
  CHECK(le.L_R == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(le.E_R == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(le.E_g == doctest::Approx(0.5).epsilon(1e-13));
  auto m = integrate_geodesic(minkowski_metric(4), Vec::Zero(4), Vec::Unit(4, 0), 1.0);
  CHECK(riem_length_energy(m, AuxiliaryRiemannian::euclidean(4)).E_g == doctest::Approx(-0.5).epsilon(1e-13));
  auto s = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 2 * pi);
  CHECK(std::abs(riem_length_energy(s, AuxiliaryRiemannian::euclidean(2)).L_R - 2 * pi) <= 1e-8);
}

TEST_CASE("self intersections") {
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(1, 0.3), 4.0);
  auto si = self_intersections(e);
  CHECK(si.pairs.empty());
  CHECK(!si.infinite_family);
  auto s = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 2 * pi);
  auto ss = self_intersections(s);
  REQUIRE(ss.pairs.size() == 1);
  CHECK(ss.pairs[0].first == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(ss.pairs[0].second == doctest::Approx(2 * pi).epsilon(1e-6));
  auto s2 = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 4 * pi);
  CHECK(self_intersections(s2).infinite_family);
  // A tilted great circle of the radius-2 sphere, seen in the football quotient,
  // crosses itself where its two nodes are identified.
  const double inc = 0.3;
  auto t = integrate_geodesic(football_metric(), v2(0, 0), v2(std::cos(inc), std::sin(inc)), 3 * pi);
  auto st = self_intersections(t);
  CHECK(!st.infinite_family);
  REQUIRE(st.pairs.size() == 1);
  CHECK(st.pairs[0].first == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(st.pairs[0].second == doctest::Approx(2 * pi).epsilon(1e-6));
}

TEST_CASE("periodicity detection") {
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(1, 0), 10.0);
  CHECK(!detect_periodicity(e).periodic);
  auto s = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 2 * pi);
  auto p1 = detect_periodicity(s);
  REQUIRE(p1.periodic);
  CHECK(p1.omega == doctest::Approx(2 * pi).epsilon(1e-9));
  CHECK(p1.k == 1);
  auto s2 = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), 4 * pi);
  auto p2 = detect_periodicity(s2);
  REQUIRE(p2.periodic);
  CHECK(p2.omega == doctest::Approx(2 * pi).epsilon(1e-9));
  CHECK(p2.k == 2);
  // Tilted great circle.
  auto tg = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(-0.6, 0.8), 2 * pi * 3);
  auto p3 = detect_periodicity(tg);
  REQUIRE(p3.periodic);
  CHECK(p3.omega == doctest::Approx(2 * pi).epsilon(1e-8));
  CHECK(p3.k == 3);
}

TEST_CASE("no short closed geodesics on the round sphere") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-0.9, 0.9);
  for (int n = 0; n < 10; ++n) {
    const double inc = U(rng);
    auto p = integrate_geodesic(sphere_metric(), v2(pi / 2 + 0.3 * U(rng), U(rng)),
                                v2(std::sin(inc), std::cos(inc)), 7.0);
    if (!p.complete()) continue;
    auto pv = detect_periodicity(p);
    if (pv.periodic) CHECK(pv.omega * p.v0.norm() >= 2 * pi - 0.1);
  }
}

TEST_CASE("turning bound") {
  ChartDomain K({-6, -6}, {6, 6});
  auto e = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(0.5, 0.2), 1.0);
  auto tb = turning_bound_check(euclidean_metric(2), e, K);
  CHECK(tb.lhs == doctest::Approx(0.0));
  CHECK(tb.holds);
  auto e10 = integrate_geodesic(euclidean_metric(2), v2(0, 0), v2(5, 2), 1.0);
  auto tb10 = turning_bound_check(euclidean_metric(2), e10, K);
  CHECK(tb10.rhs == doctest::Approx(10 * tb.rhs).epsilon(1e-12));

  ChartDomain Ks({0.5, 0}, {pi - 0.5, 2 * pi}, "", {0, 2 * pi});
  auto q = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 1), pi / 2);
  auto tq = turning_bound_check(sphere_metric(), q, Ks);
  CHECK(tq.lhs > 0);
  CHECK(tq.holds);
  CHECK(std::isfinite(tq.rhs));
  // Reparametrization: same image at ten times the speed.
  auto q10 = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v2(0, 10), pi / 20);
  auto tq10 = turning_bound_check(sphere_metric(), q10, Ks);
  CHECK(tq10.lhs == doctest::Approx(tq.lhs).epsilon(1e-8));
  CHECK(tq10.rhs == doctest::Approx(tq.rhs).epsilon(1e-8));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1, 1);
  struct Case {
    MetricField f;
    ChartDomain box;
    Vec center;
  };
  std::vector<Case> cases{{euclidean_metric(2), ChartDomain({0.7, 0.5}, {2.4, 5.5}), v2(1.55, 3.0)},
                          {sphere_metric(), ChartDomain({0.7, 0.5}, {2.4, 5.5}), v2(1.55, 3.0)},
                          {flat_torus_metric(2), ChartDomain({0.7, 0.5}, {2.4, 5.5}), v2(1.55, 3.0)},
                          {football_metric(), ChartDomain({0.5, -1.5}, {5.5, 1.5}), v2(3.0, 0.0)}};
  for (const auto& cs : cases) {
    int tested = 0;
    for (int n = 0; n < 100; ++n) {
      Vec x0 = cs.center + v2(0.3 * U(rng), 0.5 * U(rng));
      auto p = integrate_geodesic(cs.f, x0, v2(U(rng), U(rng)), 1.0);
      try {
        auto r = turning_bound_check(cs.f, p, cs.box);
        CHECK(r.holds);
        ++tested;
      } catch (const Error&) {
      }
    }
    CHECK(tested >= 50);
  }
}

TEST_CASE("fixed-step convergence order on a tilted great circle") {
  const Vec v0 = v2(-std::sqrt(0.5), std::sqrt(0.5));
  double prev = -1;
  for (double h : {0.2, 0.1, 0.05}) {
    GeodesicOptions o;
    o.fixed_step = true;
    o.step = h;
    auto p = integrate_geodesic(sphere_metric(), v2(pi / 2, 0), v0, 2 * pi, o);
    const double err = wrapped_error(p.x(2 * pi), v2(pi / 2, 0));
    if (prev > 0) CHECK(prev / err >= 8.0);
    prev = err;
  }
}
