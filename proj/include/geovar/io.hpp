#pragma once

#include "geovar/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace geovar {

using Json = nlohmann::ordered_json;

// %.17g, so every double round-trips. Non-finite values become null.
std::string format_double(double v);
// Pretty-printed JSON, two-space indent, keys in insertion order.
std::string dump_json(const Json& j);

Json to_json(const Vec& v);
Json to_json(const Mat& a);  // array of rows

// RFC 4180: CRLF line ends, fields quoted when they hold a comma, quote or line break.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& fields);
  void row(const std::vector<double>& values);
  const std::string& text() const { return text_; }

 private:
  static std::string quote(const std::string& field);
  size_t columns_;
  std::string text_;
};

// Writes to a temporary sibling and renames over the target.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace geovar
