#include <doctest.h>

#include "geovar/common.hpp"
#include "geovar/obstruction.hpp"

using namespace geovar;

TEST_CASE("lorentzian rules") {
  CHECK(lorentzian_exists(ManifoldDescriptor::surface("sphere")).exists == Existence::No);
  CHECK(lorentzian_exists(ManifoldDescriptor::sphere(2)).exists == Existence::No);
  CHECK(lorentzian_exists(ManifoldDescriptor::surface("torus")).exists == Existence::Yes);
  CHECK(lorentzian_exists(ManifoldDescriptor::surface("klein_bottle")).exists == Existence::Yes);
  CHECK(lorentzian_exists(ManifoldDescriptor::surface("projective_plane")).exists == Existence::No);
  CHECK(lorentzian_exists(ManifoldDescriptor::surface("genus_3")).exists == Existence::No);

  const ObstructionVerdict r4 = lorentzian_exists(ManifoldDescriptor::generic(false, true, 4));
  CHECK(r4.exists == Existence::Yes);
  CHECK(r4.rule == "noncompact");

  CHECK(lorentzian_exists(ManifoldDescriptor::generic(true, true, 5)).exists == Existence::Yes);
  CHECK(lorentzian_exists(ManifoldDescriptor::generic(true, true, 4, 0)).exists == Existence::Yes);
  CHECK(lorentzian_exists(ManifoldDescriptor::generic(true, true, 4, 2)).exists == Existence::No);
  const ObstructionVerdict open = lorentzian_exists(ManifoldDescriptor::generic(true, true, 4));
  CHECK(open.exists == Existence::Unknown);
  CHECK(open.rule.empty());
  CHECK(lorentzian_exists(ManifoldDescriptor::generic(true, false, 4, 0)).exists == Existence::Unknown);
}

TEST_CASE("descriptors") {
  CHECK(ManifoldDescriptor::surface("torus").euler == 0);
  CHECK(ManifoldDescriptor::surface("sphere").euler == 2);
  CHECK(ManifoldDescriptor::surface("klein_bottle").euler == 0);
  CHECK(ManifoldDescriptor::surface("genus_4").euler == -6);
  CHECK(ManifoldDescriptor::surface("nonorientable_genus_3").euler == -1);
  CHECK(ManifoldDescriptor::sphere(5).euler == 0);
  CHECK_THROWS_AS(ManifoldDescriptor::surface("mobius"), Error);
  CHECK_THROWS_AS(ManifoldDescriptor::surface("genus_x"), Error);
  CHECK_THROWS_AS(ManifoldDescriptor::generic(true, true, 3, 2), Error);
  CHECK_THROWS_AS(metric_exists(ManifoldDescriptor::sphere(3), 4), Error);
}

TEST_CASE("sphere tables") {
  CHECK(sphere_metric_exists(4, 2).exists == Existence::No);
  CHECK(sphere_metric_exists(3, 2).exists == Existence::Yes);
  CHECK(sphere_metric_exists(7, 5).exists == Existence::Yes);
  CHECK(sphere_metric_exists(15, 9).rule == "sphere_mod8");
  CHECK(sphere_metric_exists(5, 2).exists == Existence::No);
  CHECK(sphere_metric_exists(5, 2).rule == "sphere_two_power");
  CHECK(sphere_metric_exists(5, 4).exists == Existence::Yes);
  // S^9: 10 = 2 * 5 excludes 2..7; S^11: 12 = 4 * 3 excludes 4..7.
  CHECK(sphere_metric_exists(9, 7).exists == Existence::No);
  CHECK(sphere_metric_exists(11, 5).exists == Existence::No);
  CHECK(sphere_metric_exists(15, 8).exists == Existence::Yes);
  // S^31: the tables leave 8..23 open.
  CHECK(sphere_metric_exists(31, 12).exists == Existence::Unknown);
  CHECK(sphere_metric_exists(23, 8).exists == Existence::No);

  for (int m = 1; m <= 16; ++m) {
    for (int nu = 0; nu <= m; ++nu) {
      CAPTURE(m);
      CAPTURE(nu);
      CHECK_FALSE((sphere_table_yes(m, nu) && sphere_table_no(m, nu)));
      const ObstructionVerdict v = sphere_metric_exists(m, nu);
      const ObstructionVerdict w = sphere_metric_exists(m, m - nu);
      CHECK(v.exists == w.exists);
      CHECK(v.exists != Existence::Unknown);
      // Index 1 agrees with the chi rule for closed orientable manifolds.
      if (nu == 1) CHECK(v.exists == lorentzian_exists(ManifoldDescriptor::sphere(m)).exists);
    }
  }
}

TEST_CASE("duality") {
  const ObstructionVerdict s3 = sphere_metric_exists(3, 0);
  const ObstructionVerdict d3 = index_duality(s3);
  CHECK(d3.exists == Existence::Yes);
  CHECK(d3.index == 3);
  CHECK(sphere_metric_exists(3, 3).exists == Existence::Yes);

  const ObstructionVerdict s4 = sphere_metric_exists(4, 1);
  CHECK(s4.exists == Existence::No);
  const ObstructionVerdict d4 = index_duality(s4);
  CHECK(d4.exists == Existence::No);
  CHECK(d4.index == 3);

  const ObstructionVerdict u = sphere_metric_exists(31, 12);
  CHECK(index_duality(u).exists == Existence::Unknown);

  for (const ObstructionVerdict& v : {s3, s4, u, d3}) {
    const ObstructionVerdict back = index_duality(index_duality(v));
    CHECK(back.exists == v.exists);
    CHECK(back.index == v.index);
    CHECK(back.rule == v.rule);
    CHECK(back.explanation == v.explanation);
  }
}

TEST_CASE("general descriptors") {
  const ManifoldDescriptor all[] = {
      ManifoldDescriptor::sphere(2),           ManifoldDescriptor::sphere(6),
      ManifoldDescriptor::surface("torus"),    ManifoldDescriptor::surface("projective_plane"),
      ManifoldDescriptor::generic(true, true, 4), ManifoldDescriptor::generic(false, false, 5),
      ManifoldDescriptor::generic(true, false, 7, 0)};
  for (const auto& d : all) {
    CAPTURE(d.name());
    CHECK(metric_exists(d, 0).exists == Existence::Yes);
    CHECK(metric_exists(d, d.dim).exists == Existence::Yes);
    for (int nu = 0; nu <= d.dim; ++nu) {
      const ObstructionVerdict v = metric_exists(d, nu);
      CHECK(v.exists == metric_exists(d, d.dim - nu).exists);
      CHECK(v.rule.empty() == (v.exists == Existence::Unknown));
    }
  }
  // Closed orientable 3-manifolds carry every index.
  for (int nu = 0; nu <= 3; ++nu)
    CHECK(metric_exists(ManifoldDescriptor::generic(true, true, 3), nu).exists == Existence::Yes);
  CHECK(metric_exists(ManifoldDescriptor::generic(false, true, 5), 2).exists == Existence::Unknown);
  CHECK(metric_exists(ManifoldDescriptor::surface("torus"), 1).exists == Existence::Yes);
  CHECK(metric_exists(ManifoldDescriptor::surface("genus_2"), 1).exists == Existence::No);
}
