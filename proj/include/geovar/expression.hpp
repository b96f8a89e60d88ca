#pragma once

#include "geovar/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace geovar {

// Scalar arithmetic expression over named variables.
// Grammar: + - * / ^, unary minus, parentheses, numbers,
// functions sin cos tan exp log sqrt abs sinh cosh tanh, constants pi and e.
class Expression {
 public:
  struct Node;
  Expression() = default;
  static Expression parse(const std::string& text, const std::vector<std::string>& variables);
  double operator()(const Vec& x) const;
  const std::string& text() const { return text_; }

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace geovar
