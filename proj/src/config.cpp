#include "geovar/config.hpp"

#include "geovar/builtins.hpp"
#include "geovar/expression.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace geovar {

Json parse_config_text(const std::string& text, const std::string& origin) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, origin + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, origin + ": top level must be an object");
  if (!j.contains("schema_version")) throw Error(ErrorCode::ConfigError, origin + ": schema_version is required");
  const Json& v = j["schema_version"];
  if (!v.is_number_integer() || v.get<long>() != kSchemaVersion)
    throw Error(ErrorCode::ConfigError, origin + ": unsupported schema_version " + v.dump() + " (expected " +
                                            std::to_string(kSchemaVersion) + ")");
  return j;
}

Json load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot open config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

ConfigReader::ConfigReader(const Json& node, std::string where) : node_(node), where_(std::move(where)) {
  if (!node_.is_object()) fail("expected an object");
}

void ConfigReader::fail(const std::string& what) const { throw Error(ErrorCode::ConfigError, where_ + ": " + what); }

const ConfigReader& ConfigReader::keys(std::initializer_list<const char*> required,
                                       std::initializer_list<const char*> optional) const {
  for (const char* k : required)
    if (!node_.contains(k)) fail(std::string("missing key '") + k + "'");
  for (auto it = node_.begin(); it != node_.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || it.key() == k;
    for (const char* k : optional) known = known || it.key() == k;
    if (!known) fail("unknown key '" + it.key() + "'");
  }
  return *this;
}

bool ConfigReader::has(const char* key) const { return node_.contains(key); }

const Json& ConfigReader::raw(const char* key) const {
  if (!node_.contains(key)) fail(std::string("missing key '") + key + "'");
  return node_[key];
}

ConfigReader ConfigReader::child(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_object()) fail(std::string("'") + key + "' must be an object");
  return ConfigReader(j, where_ + "." + key);
}

double ConfigReader::number(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_number()) fail(std::string("'") + key + "' must be a number");
  return j.get<double>();
}

double ConfigReader::number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

int ConfigReader::integer(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
  const long v = j.get<long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    fail(std::string("'") + key + "' is out of range");
  return static_cast<int>(v);
}

int ConfigReader::integer(const char* key, int fallback) const { return has(key) ? integer(key) : fallback; }

bool ConfigReader::boolean(const char* key, bool fallback) const {
  if (!has(key)) return fallback;
  const Json& j = raw(key);
  if (!j.is_boolean()) fail(std::string("'") + key + "' must be true or false");
  return j.get<bool>();
}

std::string ConfigReader::string(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_string()) fail(std::string("'") + key + "' must be a string");
  return j.get<std::string>();
}

std::string ConfigReader::string(const char* key, const std::string& fallback) const {
  return has(key) ? string(key) : fallback;
}

std::vector<double> ConfigReader::numbers(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_array()) fail(std::string("'") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) fail(std::string("'") + key + "' must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Vec ConfigReader::vec(const char* key, int expected) const {
  const std::vector<double> a = numbers(key);
  if (expected >= 0 && static_cast<int>(a.size()) != expected)
    fail(std::string("'") + key + "' must have " + std::to_string(expected) + " entries");
  return Eigen::Map<const Vec>(a.data(), static_cast<Eigen::Index>(a.size()));
}

std::vector<std::string> ConfigReader::strings(const char* key) const {
  const Json& j = raw(key);
  if (!j.is_array()) fail(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) fail(std::string("'") + key + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

ChartDomain parse_domain(const ConfigReader& r, int expected_dim) {
  r.keys({"lower", "upper"}, {"periods", "label"});
  const double inf = std::numeric_limits<double>::infinity();
  auto bounds = [&](const char* key, double missing) {
    const Json& j = r.raw(key);
    if (!j.is_array()) r.fail(std::string("'") + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : j) {
      if (e.is_null()) out.push_back(missing);
      else if (e.is_number()) out.push_back(e.get<double>());
      else r.fail(std::string("'") + key + "' entries must be numbers or null");
    }
    return out;
  };
  std::vector<double> lo = bounds("lower", -inf), hi = bounds("upper", inf);
  if (lo.size() != hi.size()) r.fail("lower and upper differ in length");
  if (expected_dim >= 0 && static_cast<int>(lo.size()) != expected_dim)
    r.fail("domain must have " + std::to_string(expected_dim) + " axes");
  std::vector<double> periods;
  if (r.has("periods")) {
    periods = r.numbers("periods");
    if (periods.size() != lo.size()) r.fail("periods must have one entry per axis (0 for none)");
  }
  try {
    return ChartDomain(std::move(lo), std::move(hi), r.string("label", ""), std::move(periods));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

MetricField parse_metric(const ConfigReader& r) {
  MetricField g;
  if (r.has("builtin")) {
    r.keys({"builtin"}, {"params", "derivatives"});
    BuiltinParams p;
    if (r.has("params")) {
      const ConfigReader q = r.child("params");
      q.keys({}, {"dim", "radius", "mass", "eps", "periods"});
      p.dim = q.integer("dim", p.dim);
      p.radius = q.number("radius", p.radius);
      p.mass = q.number("mass", p.mass);
      p.eps = q.number("eps", p.eps);
      if (q.has("periods")) p.periods = q.numbers("periods");
    }
    try {
      g = builtin_metric(r.string("builtin"), p);
    } catch (const Error& e) {
      r.fail(e.what());
    }
  } else if (r.has("components")) {
    r.keys({"components", "index", "domain"}, {"dim", "variables", "name", "derivatives"});
    const Json& c = r.raw("components");
    if (!c.is_array()) r.fail("'components' must be an array of arrays of strings");
    std::vector<std::vector<std::string>> comps;
    for (const auto& row : c) {
      if (!row.is_array()) r.fail("'components' must be an array of arrays of strings");
      std::vector<std::string> out;
      for (const auto& e : row) {
        if (e.is_string()) out.push_back(e.get<std::string>());
        else if (e.is_number()) out.push_back(format_double(e.get<double>()));
        else r.fail("component entries must be strings or numbers");
      }
      comps.push_back(std::move(out));
    }
    const int m = static_cast<int>(comps.size());
    if (r.has("dim") && r.integer("dim") != m) r.fail("'dim' does not match the number of component rows");
    const ChartDomain dom = parse_domain(r.child("domain"), m);
    std::vector<std::string> vars;
    if (r.has("variables")) {
      vars = r.strings("variables");
    } else {
      for (int i = 0; i < m; ++i) vars.push_back("x" + std::to_string(i));
    }
    const int index = r.integer("index");
    if (index < 0 || index > m) r.fail("index must lie in [0, dim]");
    g = expression_metric(comps, vars, dom, index, r.string("name", "expression"));
  } else {
    r.fail("metric needs 'builtin' or 'components'");
  }
  const std::string mode = r.string("derivatives", "default");
  if (mode == "finite_difference") return g.finite_difference();
  if (mode != "default" && mode != "analytic") r.fail("'derivatives' must be analytic or finite_difference");
  return g;
}

Immersion parse_immersion(const ConfigReader& r, int n) {
  if (r.has("point")) {
    r.keys({"point"}, {});
    return Immersion::point(r.vec("point", n));
  }
  if (r.has("circle")) {
    r.keys({"circle"}, {});
    const ConfigReader c = r.child("circle");
    c.keys({"center", "radius"}, {"axes"});
    int a0 = 0, a1 = 1;
    if (c.has("axes")) {
      const std::vector<double> ax = c.numbers("axes");
      if (ax.size() != 2) c.fail("'axes' must hold two coordinate indices");
      a0 = static_cast<int>(ax[0]);
      a1 = static_cast<int>(ax[1]);
    }
    try {
      return Immersion::circle(c.vec("center", n), c.number("radius"), a0, a1);
    } catch (const Error& e) {
      c.fail(e.what());
    }
  }
  if (r.has("expressions")) {
    r.keys({"expressions", "parameters", "box"}, {"derivatives", "fd_step", "fd_step2"});
    const std::vector<std::string> params = r.strings("parameters");
    const std::vector<std::string> exprs = r.strings("expressions");
    if (static_cast<int>(exprs.size()) != n) r.fail("'expressions' must have " + std::to_string(n) + " entries");
    const int d = static_cast<int>(params.size());
    if (d < 1) r.fail("at least one parameter is required");
    const ChartDomain box = parse_domain(r.child("box"), d);
    std::vector<Expression> e;
    for (const auto& s : exprs) e.push_back(Expression::parse(s, params));
    Immersion im(d, n, [e, n](const Vec& u) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = e[i](u);
      return x;
    }, box);
    if (r.string("derivatives", "finite_difference") != "finite_difference")
      r.fail("expression immersions support only finite_difference derivatives");
    im.fd_step = r.number("fd_step", im.fd_step);
    im.fd_step2 = r.number("fd_step2", im.fd_step2);
    return im;
  }
  r.fail("immersion needs 'point', 'circle' or 'expressions'");
}

Gec parse_gec(const ConfigReader& r, const MetricField& metric) {
  const std::string type = r.string("type");
  const int m = metric.dim();
  if (type == "fixed") {
    r.keys({"type", "p", "q"}, {});
    return Gec::fixed(r.vec("p", m), r.vec("q", m));
  }
  if (type == "product") {
    r.keys({"type", "P", "Q"}, {});
    return Gec::product(parse_immersion(r.child("P"), m), parse_immersion(r.child("Q"), m));
  }
  if (type == "diagonal") {
    r.keys({"type"}, {});
    return Gec::diagonal(metric.domain());
  }
  if (type == "parametrized") {
    r.keys({"type", "psi"}, {});
    return Gec::parametrized(parse_immersion(r.child("psi"), 2 * m));
  }
  r.fail("unknown gec type '" + type + "'");
}

}  // namespace geovar
