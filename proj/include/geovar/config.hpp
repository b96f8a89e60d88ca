#pragma once

#include "geovar/gec.hpp"
#include "geovar/io.hpp"
#include "geovar/metric.hpp"

#include <initializer_list>
#include <optional>
#include <string>

namespace geovar {

constexpr int kSchemaVersion = 1;

// Parses a config file. Throws ParseError for malformed JSON and ConfigError
// for a missing or unsupported schema_version.
Json load_config_file(const std::string& path);
Json parse_config_text(const std::string& text, const std::string& origin = "config");

// Field access with schema errors (ConfigError) that name the offending path.
class ConfigReader {
 public:
  ConfigReader(const Json& node, std::string where);

  // Rejects keys outside required + optional and reports missing required keys.
  const ConfigReader& keys(std::initializer_list<const char*> required,
                           std::initializer_list<const char*> optional) const;
  bool has(const char* key) const;
  ConfigReader child(const char* key) const;
  const Json& raw(const char* key) const;
  const Json& node() const { return node_; }
  const std::string& where() const { return where_; }

  double number(const char* key) const;
  double number(const char* key, double fallback) const;
  int integer(const char* key) const;
  int integer(const char* key, int fallback) const;
  bool boolean(const char* key, bool fallback) const;
  std::string string(const char* key) const;
  std::string string(const char* key, const std::string& fallback) const;
  Vec vec(const char* key, int expected = -1) const;
  std::vector<double> numbers(const char* key) const;
  std::vector<std::string> strings(const char* key) const;

  [[noreturn]] void fail(const std::string& what) const;

 private:
  const Json& node_;
  std::string where_;
};

// {"lower": [...], "upper": [...], "periods": [...]}; null bounds are infinite.
ChartDomain parse_domain(const ConfigReader& r, int expected_dim = -1);
// {"builtin": name, "params": {...}} or
// {"components": [[...]], "dim": m, "variables": [...], "index": nu, "domain": {...}}; optional "derivatives".
MetricField parse_metric(const ConfigReader& r);
// {"point": [...]} | {"circle": {...}} | {"expressions": [...], "parameters": [...], "box": {...}}
Immersion parse_immersion(const ConfigReader& r, int n);
// {"type": "fixed" | "product" | "diagonal" | "parametrized", ...}
Gec parse_gec(const ConfigReader& r, const MetricField& metric);

}  // namespace geovar
