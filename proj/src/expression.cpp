#include "geovar/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

namespace geovar {

struct Expression::Node {
  enum Kind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call } kind = Number;
  double value = 0.0;
  int var = -1;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> a, b;

  double eval(const Vec& x) const {
    switch (kind) {
      case Number: return value;
      case Variable: return x[var];
      case Neg: return -a->eval(x);
      case Add: return a->eval(x) + b->eval(x);
      case Sub: return a->eval(x) - b->eval(x);
      case Mul: return a->eval(x) * b->eval(x);
      case Div: return a->eval(x) / b->eval(x);
      case Pow: {
        const double base = a->eval(x);
        if (b->kind == Number && b->value == std::round(b->value) && std::abs(b->value) <= 16) {
          int n = static_cast<int>(b->value);
          double r = 1.0, p = base;
          for (int k = std::abs(n); k; k >>= 1, p *= p)
            if (k & 1) r *= p;
          return n < 0 ? 1.0 / r : r;
        }
        return std::pow(base, b->eval(x));
      }
      case Call: return fn(a->eval(x));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

double fabs_(double v) { return std::fabs(v); }
double sin_(double v) { return std::sin(v); }
double cos_(double v) { return std::cos(v); }
double tan_(double v) { return std::tan(v); }
double exp_(double v) { return std::exp(v); }
double log_(double v) { return std::log(v); }
double sqrt_(double v) { return std::sqrt(v); }
double sinh_(double v) { return std::sinh(v); }
double cosh_(double v) { return std::cosh(v); }
double tanh_(double v) { return std::tanh(v); }

class Parser {
 public:
  Parser(const std::string& s, const std::vector<std::string>& vars) : s_(s), vars_(vars) {}

  NodePtr parse() {
    NodePtr n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return n;
  }

 private:
  const std::string& s_;
  const std::vector<std::string>& vars_;
  size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::ParseError, why + " at position " + std::to_string(pos_) + " in '" + s_ + "'");
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr make(Expression::Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
  static NodePtr number(double v) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = Expression::Node::Number;
    n->value = v;
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (eat('+')) lhs = make(Expression::Node::Add, lhs, term());
      else if (eat('-')) lhs = make(Expression::Node::Sub, lhs, term());
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (eat('*')) lhs = make(Expression::Node::Mul, lhs, unary());
      else if (eat('/')) lhs = make(Expression::Node::Div, lhs, unary());
      else return lhs;
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Expression::Node::Neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (eat('^')) return make(Expression::Node::Pow, base, unary());  // right associative
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = expr();
      if (!eat(')')) fail("missing ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<size_t>(end - begin);
      return number(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string name = s_.substr(start, pos_ - start);
      for (size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == name) {
          auto n = std::make_shared<Expression::Node>();
          n->kind = Expression::Node::Variable;
          n->var = static_cast<int>(i);
          return n;
        }
      if (name == "pi") return number(std::numbers::pi);
      if (name == "e") return number(std::numbers::e);
      double (*fn)(double) = nullptr;
      if (name == "sin") fn = sin_;
      else if (name == "cos") fn = cos_;
      else if (name == "tan") fn = tan_;
      else if (name == "exp") fn = exp_;
      else if (name == "log") fn = log_;
      else if (name == "sqrt") fn = sqrt_;
      else if (name == "abs") fn = fabs_;
      else if (name == "sinh") fn = sinh_;
      else if (name == "cosh") fn = cosh_;
      else if (name == "tanh") fn = tanh_;
      if (!fn) fail("unknown identifier '" + name + "'");
      if (!eat('(')) fail("expected '(' after " + name);
      auto n = std::make_shared<Expression::Node>();
      n->kind = Expression::Node::Call;
      n->fn = fn;
      n->a = expr();
      if (!eat(')')) fail("missing ')'");
      return n;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

Expression Expression::parse(const std::string& text, const std::vector<std::string>& variables) {
  Expression e;
  e.root_ = Parser(text, variables).parse();
  e.text_ = text;
  return e;
}

double Expression::operator()(const Vec& x) const {
  if (!root_) return 0.0;
  return root_->eval(x);
}

}  // namespace geovar
