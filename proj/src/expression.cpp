#include "fbp/expression.hpp"

#include <cctype>
#include <cmath>

namespace fbp {

namespace {

using Fn = std::function<double(double, double)>;

struct Parser {
  const std::string& text;
  std::size_t pos = 0;
  bool uses_time = false;
  bool uses_space = false;

  explicit Parser(const std::string& t) : text(t) {}

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool consume(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  [[noreturn]] void fail(const std::string& what) {
    throw ConfigError("expression '" + text + "': " + what + " at position " + std::to_string(pos));
  }

  Fn parse_expr() {
    Fn lhs = parse_term();
    while (true) {
      if (consume('+')) {
        Fn rhs = parse_term();
        lhs = [lhs, rhs](double x, double t) { return lhs(x, t) + rhs(x, t); };
      } else if (consume('-')) {
        Fn rhs = parse_term();
        lhs = [lhs, rhs](double x, double t) { return lhs(x, t) - rhs(x, t); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_term() {
    Fn lhs = parse_unary();
    while (true) {
      if (consume('*')) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](double x, double t) { return lhs(x, t) * rhs(x, t); };
      } else if (consume('/')) {
        Fn rhs = parse_unary();
        lhs = [lhs, rhs](double x, double t) { return lhs(x, t) / rhs(x, t); };
      } else {
        return lhs;
      }
    }
  }

  Fn parse_unary() {
    if (consume('-')) {
      Fn inner = parse_unary();
      return [inner](double x, double t) { return -inner(x, t); };
    }
    if (consume('+')) return parse_unary();
    return parse_power();
  }

  Fn parse_power() {
    Fn base = parse_primary();
    if (consume('^')) {
      Fn exponent = parse_unary();  // right-associative
      return [base, exponent](double x, double t) { return std::pow(base(x, t), exponent(x, t)); };
    }
    return base;
  }

  Fn parse_primary() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end");
    const char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) return parse_name();
    if (consume('(')) {
      Fn inner = parse_expr();
      if (!consume(')')) fail("missing ')'");
      return inner;
    }
    fail("unexpected character");
  }

  Fn parse_number() {
    skip_ws();
    std::size_t end = pos;
    while (end < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.' ||
            text[end] == 'e' || text[end] == 'E' ||
            ((text[end] == '+' || text[end] == '-') && end > pos &&
             (text[end - 1] == 'e' || text[end - 1] == 'E')))) {
      ++end;
    }
    const std::string token = text.substr(pos, end - pos);
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      fail("bad number '" + token + "'");
    }
    if (used != token.size()) fail("bad number '" + token + "'");
    pos = end;
    return [value](double, double) { return value; };
  }

  Fn parse_name() {
    std::size_t end = pos;
    while (end < text.size() && std::isalpha(static_cast<unsigned char>(text[end]))) ++end;
    const std::string name = text.substr(pos, end - pos);
    pos = end;
    if (name == "x") {
      uses_space = true;
      return [](double x, double) { return x; };
    }
    if (name == "t") {
      uses_time = true;
      return [](double, double t) { return t; };
    }
    if (name == "pi") return [](double, double) { return M_PI; };
    if (name == "sin" || name == "cos" || name == "exp") {
      if (!consume('(')) fail("'" + name + "' needs parentheses");
      Fn inner = parse_expr();
      if (!consume(')')) fail("missing ')'");
      if (name == "sin") return [inner](double x, double t) { return std::sin(inner(x, t)); };
      if (name == "cos") return [inner](double x, double t) { return std::cos(inner(x, t)); };
      return [inner](double x, double t) { return std::exp(inner(x, t)); };
    }
    fail("unknown name '" + name + "'");
  }
};

}  // namespace

Expression Expression::parse(const std::string& text) {
  Parser parser(text);
  Expression expr;
  expr.fn_ = parser.parse_expr();
  parser.skip_ws();
  if (parser.pos != text.size()) parser.fail("trailing input");
  expr.uses_time_ = parser.uses_time;
  expr.uses_space_ = parser.uses_space;
  expr.text_ = text;
  return expr;
}

bool Expression::is_literal_zero() const {
  return !uses_time_ && !uses_space_ && fn_(0.0, 0.0) == 0.0;
}

std::vector<Expression> parse_expressions(const std::vector<std::string>& texts) {
  std::vector<Expression> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) out.push_back(Expression::parse(t));
  return out;
}

}  // namespace fbp
