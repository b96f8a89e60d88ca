#include "geovar/cli.hpp"
#include "geovar/config.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace geovar;
namespace fs = std::filesystem;

namespace {

const std::string kData = GEOVAR_TEST_DATA;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("geovar_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "geovar");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Json load(const fs::path& p) { return Json::parse(slurp(p)); }

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    REQUIRE(!line.empty());
    REQUIRE(line.back() == '\r');
    line.pop_back();
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) row.push_back(f);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("number formatting and csv quoting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-0.0) == "-0");
  CHECK(format_double(NAN) == "null");
  CHECK(std::stod(format_double(M_PI)) == M_PI);
  CsvWriter w({"a", "b"});
  w.row(std::vector<std::string>{"x,y", "say \"hi\""});
  w.row(std::vector<double>{1.5, INFINITY});
  CHECK(w.text() == "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n1.5,\r\n");
  CHECK_THROWS(w.row(std::vector<double>{1.0}));
  Json j{{"v", 0.1}, {"n", Json::array({1, 2})}, {"bad", INFINITY}};
  CHECK(dump_json(j) == "{\n  \"v\": 0.10000000000000001,\n  \"n\": [1, 2],\n  \"bad\": null\n}\n");
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(parse_config_text("{\"command\": \"geodesic\"}"), Error);
  CHECK_THROWS_AS(parse_config_text("{\"schema_version\": 2}"), Error);
  CHECK_THROWS_AS(parse_config_text("[1]"), Error);
  CHECK_NOTHROW(parse_config_text("{\"schema_version\": 1}"));

  const Json bad_index = Json::parse(R"({"components": [["1","0"],["0","1"]], "index": 3,
                                         "domain": {"lower": [null, null], "upper": [null, null]}})");
  CHECK_THROWS_AS(parse_metric(ConfigReader(bad_index, "m")), Error);
  const Json bad_dim = Json::parse(R"({"components": [["1","0"],["0","1"]], "index": 0, "dim": 3,
                                       "domain": {"lower": [null, null], "upper": [null, null]}})");
  CHECK_THROWS_AS(parse_metric(ConfigReader(bad_dim, "m")), Error);
  const Json fd = Json::parse(R"({"builtin": "minkowski", "derivatives": "finite_difference"})");
  const MetricField g = parse_metric(ConfigReader(fd, "m"));
  CHECK(g.index() == 1);
  const Json gec = Json::parse(R"({"type": "fixed", "p": [0, 0, 0, 0], "q": [1, 0, 0], "extra": 1})");
  CHECK_THROWS_AS(parse_gec(ConfigReader(gec, "gec"), g), Error);
}

TEST_CASE("geodesic command") {
  const fs::path out = scratch("geodesic");
  Run r = run({"geodesic", "--config", kData + "/geodesic_euclidean.json", "--out", out.string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(out / "trajectory.csv");
  REQUIRE(rows.size() == 12);
  CHECK(rows[0] == std::vector<std::string>{"t", "x1", "x2", "v1", "v2", "speed"});
  for (size_t i = 1; i < rows.size(); ++i) {
    const double t = std::stod(rows[i][0]);
    CHECK(std::abs(std::stod(rows[i][1]) - t) <= 1e-12);
    CHECK(std::stod(rows[i][2]) == 0.0);
  }
  const Json j = load(out / "geodesic.json");
  CHECK(j["path"]["status"] == "completed");
  CHECK(j["periodicity"]["periodic"] == false);

  r = run({"geodesic", "--config", kData + "/geodesic_sphere_equator.json", "--out", out.string()});
  REQUIRE(r.code == 0);
  const Json s = load(out / "geodesic.json");
  CHECK(s["periodicity"]["periodic"] == true);
  CHECK(std::abs(s["periodicity"]["omega"].get<double>() - 2 * M_PI) < 1e-6);
  CHECK(std::abs(s["riemannian_length"].get<double>() - 2 * M_PI) < 1e-8);

  r = run({"geodesic", "--config", kData + "/geodesic_expression.json", "--out", out.string()});
  CHECK(r.code == 0);
}

TEST_CASE("exit codes") {
  const fs::path out = scratch("codes");
  CHECK(run({"geodesic", "--config", kData + "/malformed.json", "--out", out.string()}).code == 2);
  CHECK(run({"geodesic", "--config", kData + "/unknown_key.json", "--out", out.string()}).code == 2);
  CHECK(run({"geodesic", "--config", kData + "/missing.json", "--out", out.string()}).code == 2);
  CHECK(run({"geodesic", "--out", out.string()}).code == 2);
  // config written for a different command
  CHECK(run({"census", "--config", kData + "/geodesic_euclidean.json", "--out", out.string()}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"geodesic", "--threads", "0", "--config", kData + "/geodesic_euclidean.json"}).code == 2);
  CHECK(run({"--help"}).code == 0);

  // A path that does not meet its endpoint condition is a numerical failure.
  const fs::path cfg = out / "not_critical.json";
  Json c = load(kData + "/classify_sphere_antipodal.json");
  c["v0"] = Json::array({0.1, 3.0});
  fs::create_directories(out);
  std::ofstream(cfg) << c.dump();
  const Run r = run({"classify", "--config", cfg.string(), "--out", out.string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("NotCritical") != std::string::npos);

  const fs::path adm = scratch("admissible");
  CHECK(run({"bvp", "--require-admissible", "--config", kData + "/bvp_football_diagonal.json", "--out", adm.string()})
            .code == 4);
  const Json j = load(adm / "bvp.json");
  CHECK(j["admissibility"]["verdict"] == "not_admissible");
  CHECK(j["solutions"].empty());
}

TEST_CASE("conjugate command") {
  const fs::path out = scratch("conjugate");
  REQUIRE(run({"conjugate", "--config", kData + "/conjugate_sphere.json", "--out", out.string()}).code == 0);
  Json j = load(out / "conjugate.json");
  REQUIRE(j["conjugate_points"].size() == 1);
  CHECK(std::abs(j["conjugate_points"][0]["t"].get<double>() - M_PI) < 1e-6);
  CHECK(j["conjugate_points"][0]["multiplicity"] == 1);
  CHECK(j["index_form"]["morse_index"] == 1);

  REQUIRE(run({"conjugate", "--config", kData + "/conjugate_euclidean.json", "--out", out.string()}).code == 0);
  j = load(out / "conjugate.json");
  CHECK(j["conjugate_points"].empty());
  CHECK(j["index_form"]["morse_index"] == 0);
  CHECK(j["index_form"]["kernel_dim"] == 0);

  REQUIRE(run({"conjugate", "--config", kData + "/conjugate_schwarzschild.json", "--out", out.string()}).code == 0);
  j = load(out / "conjugate.json");
  CHECK(j["path"]["status"] == "completed");
  CHECK(j["path"]["speed"].get<double>() < 0.0);
  MESSAGE("schwarzschild conjugate points: " << j["conjugate_points"].size());
}

TEST_CASE("bvp and classify commands") {
  const fs::path out = scratch("bvp");
  REQUIRE(run({"bvp", "--config", kData + "/bvp_circle_point.json", "--out", out.string()}).code == 0);
  Json j = load(out / "bvp.json");
  CHECK(j["admissibility"]["verdict"] == "admissible");
  REQUIRE(j["solutions"].size() == 1);
  const Json& s = j["solutions"][0];
  CHECK(std::abs(s["path"]["x0"][0].get<double>() - 1.0) < 1e-8);
  CHECK(std::abs(s["path"]["x0"][1].get<double>()) < 1e-8);
  CHECK(std::abs(s["v0"][0].get<double>() - 2.0) < 1e-8);
  CHECK(s["degeneracy"]["kind"] == "nondegenerate");
  CHECK(csv_rows(out / "solutions.csv").size() == 22);

  REQUIRE(run({"bvp", "--config", kData + "/bvp_fixed_euclidean.json", "--out", out.string()}).code == 0);
  j = load(out / "bvp.json");
  REQUIRE(j["solutions"].size() == 1);
  CHECK(std::abs(j["solutions"][0]["v0"][1].get<double>() - 2.0) < 1e-8);

  // Without the flag the inadmissible diagonal still solves.
  REQUIRE(run({"bvp", "--config", kData + "/bvp_football_diagonal.json", "--out", out.string()}).code == 0);
  j = load(out / "bvp.json");
  CHECK(j["admissibility"]["verdict"] == "not_admissible");
  REQUIRE(j["solutions"].size() == 1);
  CHECK(std::abs(j["solutions"][0]["path"]["x0"][1].get<double>()) < 1e-8);
  CHECK(j["solutions"][0]["degeneracy"]["kind"] == "s1_nondegenerate");

  REQUIRE(run({"classify", "--config", kData + "/classify_sphere_antipodal.json", "--out", out.string()}).code == 0);
  j = load(out / "classify.json");
  CHECK(j["degeneracy"]["kind"] == "degenerate");
  CHECK(j["degeneracy"]["kernel_dim"] == 1);
  CHECK(j["degeneracy"]["index_kernel_dim"] == 1);
}

TEST_CASE("census command is deterministic") {
  const fs::path a = scratch("census1"), b = scratch("census2");
  REQUIRE(run({"census", "--threads", "1", "--config", kData + "/census_football.json", "--out", a.string()}).code == 0);
  REQUIRE(run({"census", "--threads", "3", "--config", kData + "/census_football.json", "--out", b.string()}).code == 0);
  CHECK(slurp(a / "census.json") == slurp(b / "census.json"));
  CHECK(slurp(a / "orbits.csv") == slurp(b / "orbits.csv"));
  const Json j = load(a / "census.json");
  CHECK(j["geometric_orbits"] == 1);
  REQUIRE(j["orbits"].size() == 2);
  CHECK(j["orbits"][0]["degeneracy"]["kind"] == "s1_nondegenerate");
  CHECK(j["orbits"][1]["k"] == 2);
  CHECK(j["orbits"][1]["degeneracy"]["kind"] == "strongly_degenerate");
  CHECK(j["member"] == false);
}

TEST_CASE("perturb command") {
  const fs::path a = scratch("perturb1"), b = scratch("perturb2");
  REQUIRE(run({"perturb", "--config", kData + "/perturb_sphere.json", "--out", a.string()}).code == 0);
  REQUIRE(run({"perturb", "--threads", "2", "--config", kData + "/perturb_sphere.json", "--out", b.string()}).code == 0);
  CHECK(slurp(a / "perturb.json") == slurp(b / "perturb.json"));
  CHECK(slurp(a / "bump.csv") == slurp(b / "bump.csv"));
  const Json j = load(a / "perturb.json");
  CHECK(j["identities"]["h_on_curve"].get<double>() <= 1e-8);
  CHECK(j["identities"]["covariant_derivative_deviation"].get<double>() <= 1e-4);
  CHECK(j["mixed_derivative"].get<double>() > 0.0);
  REQUIRE(j["recheck"].size() == 3);
  CHECK(j["recheck"][0]["outcome"] == "nondegenerate");
  CHECK(j["recheck"][0]["kernel_gap"].get<double>() > 0.0);
  CHECK(j["recheck"][2]["outcome"] == "degenerate");
  CHECK(j["montecarlo"]["seed"] == 7);
  CHECK(j["montecarlo"]["trials"].size() == 4);
  CHECK(csv_rows(a / "bump.csv").size() == 1 + 21 * 21 * 3);

  // --seed overrides the config
  const fs::path c = scratch("perturb3");
  REQUIRE(run({"perturb", "--seed", "8", "--config", kData + "/perturb_sphere.json", "--out", c.string()}).code == 0);
  CHECK(load(c / "perturb.json")["montecarlo"]["seed"] == 8);
}

TEST_CASE("obstruct command") {
  const fs::path out = scratch("obstruct");
  Run r = run({"obstruct", "--sphere", "2", "--index", "1", "--out", out.string()});
  REQUIRE(r.code == 0);
  Json j = load(out / "obstruct.json");
  CHECK(j["exists"] == "no");
  CHECK(r.out.find("\"exists\": \"no\"") != std::string::npos);

  CHECK(obstruct_report({std::nullopt, std::string("torus"), std::nullopt, 1})["exists"] == "yes");
  CHECK(obstruct_report({std::nullopt, std::string("klein_bottle"), std::nullopt, 1})["exists"] == "yes");
  CHECK(obstruct_report({std::nullopt, std::nullopt, std::string("compact=false,orientable=true,dim=4"), 1})["exists"] ==
        "yes");
  CHECK(obstruct_report({std::nullopt, std::nullopt, std::string("compact=true,orientable=true,dim=4,chi=2"), 1})
            ["exists"] == "no");
  CHECK(obstruct_report({std::nullopt, std::nullopt, std::string("compact=true,orientable=true,dim=4"), 2})
            ["exists"] == "unknown");
  for (int nu = 0; nu <= 7; ++nu) CHECK(obstruct_report({7, std::nullopt, std::nullopt, nu})["exists"] == "yes");

  CHECK(run({"obstruct", "--index", "1", "--out", out.string()}).code == 2);
  CHECK(run({"obstruct", "--sphere", "2", "--surface", "torus", "--index", "1", "--out", out.string()}).code == 2);
  CHECK(run({"obstruct", "--surface", "pretzel", "--index", "1", "--out", out.string()}).code == 2);
  CHECK(run({"obstruct", "--generic", "compact=maybe,orientable=true,dim=3", "--index", "1"}).code == 2);
  CHECK(run({"obstruct", "--sphere", "3", "--index", "5", "--out", out.string()}).code == 2);
}
