#ifndef FBP_NONLINEARITY_HPP
#define FBP_NONLINEARITY_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbp/errors.hpp"

namespace fbp {

/// Structural exponents and constants of a diffusion scalar factor:
///   c0 * sum_i (mu_i^2 + |A_i|^2)^((p_i-2)/2) <= K(A) <= c1 * sum_i (...)
/// where A_i is the i-th row of the m x n gradient matrix.
struct GrowthParams {
  int m = 1;
  int n = 1;
  Eigen::VectorXd p;   // one exponent per component
  Eigen::VectorXd mu;  // one offset per component
  double c0 = 1.0;
  double c1 = 1.0;

  double p_min() const { return p.minCoeff(); }
  double q_max() const { return p.maxCoeff(); }
  double q_hat() const { return std::max(q_max(), 2.0); }

  /// Throws ConfigError on any structural violation; with collect != nullptr
  /// the violations are appended there instead and no exception is raised.
  void validate(std::vector<std::string>* collect = nullptr) const;

  /// The comparison sum: sum_i (mu_i^2 + |A_i|^2)^((p_i-2)/2).
  double comparison_sum(const Eigen::Ref<const Eigen::MatrixXd>& A) const;
};

/// Diffusion nonlinearity a(A) = K(A) A with scalar factor K. The `covered`
/// predicate marks gradient regions the structural theory does not reach;
/// the solver still runs there but stamps its outputs with a warning.
struct Nonlinearity {
  std::string name;
  int m = 1;
  int n = 1;
  std::function<double(const Eigen::Ref<const Eigen::MatrixXd>&)> kappa;
  std::function<bool(const Eigen::Ref<const Eigen::MatrixXd>&)> covered;  // may be empty (always true)
  std::optional<GrowthParams> growth;  // claimed structural parameters, if any
  bool fully_covered = true;

  double kappa_at(const Eigen::Ref<const Eigen::MatrixXd>& A) const { return kappa(A); }
  bool covered_at(const Eigen::Ref<const Eigen::MatrixXd>& A) const { return !covered || covered(A); }

  /// a(A) = K(A) * A. Throws NumericalError when K(A) is not finite.
  Eigen::MatrixXd a(const Eigen::Ref<const Eigen::MatrixXd>& A) const;
};

/// Canonical representative saturating the growth sandwich with c0 = c1 = 1:
/// K(A) = sum_i (mu_i^2 + |A_i|^2)^((p_i-2)/2).
Nonlinearity power_law(const GrowthParams& params);

/// Stability function of the atmospheric boundary-layer model (m=3, n=1):
/// two branches split on the sign of the third gradient component. The
/// branch with dx u3 > 0 is outside the covered theory (no coercivity).
double becu_stability(const Eigen::Ref<const Eigen::MatrixXd>& A);
Nonlinearity becu();

/// K(A) = sqrt(A1^2 + A2^2 + |A3|) (m=3, n=1); fully covered with exponents
/// (3, 3, 5/2), zero offsets and constants c0 = 1/sqrt(3), c1 = 1.
double example2_k(const Eigen::Ref<const Eigen::MatrixXd>& A);
Nonlinearity example2();
GrowthParams example2_growth_params();

inline Eigen::MatrixXd a_eval(const Nonlinearity& nl, const Eigen::Ref<const Eigen::MatrixXd>& A) {
  return nl.a(A);
}

/// Frobenius pairing (a(xi) - a(eta)) : (xi - eta); negative values witness
/// non-monotonicity.
double monotonicity_indicator(const Nonlinearity& nl, const Eigen::Ref<const Eigen::MatrixXd>& xi,
                              const Eigen::Ref<const Eigen::MatrixXd>& eta);

/// Sampling plan for the structural diagnostics: points drawn uniformly on
/// spheres of the listed radii.
struct SamplerSpec {
  std::vector<double> radii{1.0, 10.0, 100.0, 1000.0};
  int samples_per_radius = 2500;
  std::uint64_t seed = 0;
};

struct GrowthReport {
  long samples = 0;
  long violations = 0;
  double min_ratio = 0.0;  // min over samples of K / comparison_sum
  double max_ratio = 0.0;
  bool pass() const { return violations == 0; }
};

/// Tests the sandwich c0*sum <= K <= c1*sum on sampled gradients. Report-only.
GrowthReport check_growth(const Nonlinearity& nl, const GrowthParams& params, const SamplerSpec& sampler);

/// Monte-Carlo lower bound for sup_A |g(A)| / (1 + |A|^r); the origin is
/// always included in the sample set.
double estimate_er_norm(const std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& g,
                        int m, int n, double r, const SamplerSpec& sampler);

/// Largest finite-difference quotient |a(xi)-a(eta)| / |xi-eta| over random
/// pairs inside the ball of the given radius.
double estimate_local_lipschitz(const Nonlinearity& nl, double radius, int pairs, std::uint64_t seed);

/// Registry keyed by name: "power_law", "becu", "example2".
Nonlinearity make_nonlinearity(const std::string& name, const std::optional<GrowthParams>& params);
std::vector<std::string> nonlinearity_names();

}  // namespace fbp

#endif
