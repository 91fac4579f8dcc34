#ifndef FBP_QUADRATURE_HPP
#define FBP_QUADRATURE_HPP

#include <array>
#include <cstddef>

#include "fbp/errors.hpp"

namespace fbp {

/// Gauss-Legendre rule on the reference interval [0,1].
/// A rule with n points integrates polynomials of degree 2n-1 exactly.
struct GaussRule {
  int n = 0;
  std::array<double, 5> points{};
  std::array<double, 5> weights{};
};

inline GaussRule gauss_rule(int n) {
  if (n < 1 || n > 5) throw ConfigError("gauss_rule: supported point counts are 1..5");
  GaussRule r;
  r.n = n;
  // Abscissae/weights on [-1,1], mapped to [0,1] below.
  static const double x2 = 0.5773502691896257645091488;
  static const double x3 = 0.7745966692414833770358531;
  static const double x4a = 0.3399810435848562648026658, x4b = 0.8611363115940525752239465;
  static const double w4a = 0.6521451548625461426269361, w4b = 0.3478548451374538573730639;
  static const double x5a = 0.5384693101056830910363144, x5b = 0.9061798459386639927976269;
  static const double w5a = 0.4786286704993664680412915, w5b = 0.2369268850561890875142640;
  double xs[5], ws[5];
  switch (n) {
    case 1: xs[0] = 0.0; ws[0] = 2.0; break;
    case 2: xs[0] = -x2; xs[1] = x2; ws[0] = ws[1] = 1.0; break;
    case 3:
      xs[0] = -x3; xs[1] = 0.0; xs[2] = x3;
      ws[0] = ws[2] = 5.0 / 9.0; ws[1] = 8.0 / 9.0;
      break;
    case 4:
      xs[0] = -x4b; xs[1] = -x4a; xs[2] = x4a; xs[3] = x4b;
      ws[0] = ws[3] = w4b; ws[1] = ws[2] = w4a;
      break;
    default:
      xs[0] = -x5b; xs[1] = -x5a; xs[2] = 0.0; xs[3] = x5a; xs[4] = x5b;
      ws[0] = ws[4] = w5b; ws[1] = ws[3] = w5a; ws[2] = 128.0 / 225.0;
  }
  for (int i = 0; i < n; ++i) {
    r.points[static_cast<std::size_t>(i)] = 0.5 * (xs[i] + 1.0);
    r.weights[static_cast<std::size_t>(i)] = 0.5 * ws[i];
  }
  return r;
}

}  // namespace fbp

#endif
