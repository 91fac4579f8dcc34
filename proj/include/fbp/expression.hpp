#ifndef FBP_EXPRESSION_HPP
#define FBP_EXPRESSION_HPP

#include <functional>
#include <string>
#include <vector>

#include "fbp/errors.hpp"

namespace fbp {

/// Closed-form scalar expression in the variables x and t: numbers, pi,
/// + - * / ^, parentheses, and sin/cos/exp. Parsed once, evaluated many times.
class Expression {
 public:
  static Expression parse(const std::string& text);

  double operator()(double x, double t) const { return fn_(x, t); }
  bool uses_time() const { return uses_time_; }
  bool uses_space() const { return uses_space_; }
  bool is_literal_zero() const;
  const std::string& text() const { return text_; }

 private:
  std::function<double(double, double)> fn_;
  bool uses_time_ = false;
  bool uses_space_ = false;
  std::string text_;
};

std::vector<Expression> parse_expressions(const std::vector<std::string>& texts);

}  // namespace fbp

#endif
