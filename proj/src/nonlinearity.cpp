#include "fbp/nonlinearity.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fbp/rng.hpp"

namespace fbp {

namespace {

void report(std::vector<std::string>* collect, const std::string& msg) {
  if (collect) {
    collect->push_back(msg);
  } else {
    throw ConfigError(msg);
  }
}

Eigen::MatrixXd random_direction(Rng& rng, int m, int n) {
  Eigen::MatrixXd d(m, n);
  double norm2 = 0.0;
  do {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) d(i, j) = rng.normal();
    norm2 = d.squaredNorm();
  } while (norm2 == 0.0);
  return d / std::sqrt(norm2);
}

std::string matrix_to_string(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < A.rows(); ++i) {
    for (int j = 0; j < A.cols(); ++j) os << (i + j ? ", " : "") << A(i, j);
  }
  os << "]";
  return os.str();
}

}  // namespace

void GrowthParams::validate(std::vector<std::string>* collect) const {
  if (m < 1 || n < 1) {
    report(collect, "GrowthParams: component count and dimension must be positive");
    return;
  }
  if (p.size() != m || mu.size() != m) {
    report(collect, "GrowthParams: p and mu must have one entry per component");
    return;
  }
  const double p_floor = std::max(1.0, 2.0 * n / (n + 2.0));
  for (int i = 0; i < m; ++i) {
    if (!(p[i] > p_floor)) {
      std::ostringstream os;
      os << "GrowthParams: p[" << i << "] = " << p[i] << " must exceed max{1, 2n/(n+2)} = " << p_floor;
      report(collect, os.str());
    }
    if (p[i] > 1.0 && p[i] < 2.0 && mu[i] == 0.0) {
      std::ostringstream os;
      os << "GrowthParams: mu[" << i << "] must be nonzero for 1 < p[" << i << "] < 2";
      report(collect, os.str());
    }
  }
  if (!(q_max() - p_min() < 1.0)) {
    std::ostringstream os;
    os << "GrowthParams: q - p = " << q_max() - p_min() << " must be < 1";
    report(collect, os.str());
  }
  if (!(c0 > 0.0) || !(c1 > 0.0) || !(c0 <= c1)) {
    report(collect, "GrowthParams: constants must satisfy 0 < c0 <= c1");
  }
}

double GrowthParams::comparison_sum(const Eigen::Ref<const Eigen::MatrixXd>& A) const {
  double s = 0.0;
  for (int i = 0; i < m; ++i) {
    const double row2 = A.row(i).squaredNorm();
    s += std::pow(mu[i] * mu[i] + row2, 0.5 * (p[i] - 2.0));
  }
  return s;
}

Eigen::MatrixXd Nonlinearity::a(const Eigen::Ref<const Eigen::MatrixXd>& A) const {
  if (A.rows() != m || A.cols() != n) throw ConfigError("Nonlinearity: gradient has wrong shape");
  const double k = kappa(A);
  if (!std::isfinite(k)) {
    throw NumericalError("Nonlinearity '" + name + "': non-finite K at A = " + matrix_to_string(A));
  }
  return k * A;
}

Nonlinearity power_law(const GrowthParams& params) {
  params.validate();
  Nonlinearity nl;
  nl.name = "power_law";
  nl.m = params.m;
  nl.n = params.n;
  nl.growth = params;
  nl.kappa = [gp = params](const Eigen::Ref<const Eigen::MatrixXd>& A) { return gp.comparison_sum(A); };
  return nl;
}

double becu_stability(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  if (A.rows() != 3 || A.cols() != 1) throw ConfigError("becu_stability: expects a 3x1 gradient");
  const double s2 = A(0, 0) * A(0, 0) + A(1, 0) * A(1, 0);
  const double a3 = A(2, 0);
  if (a3 > 0.0) {
    if (s2 == 0.0) return 0.0;  // limit of s^3 / (s^2 + a3) as s -> 0
    return std::pow(s2, 1.5) / (s2 + a3);
  }
  return std::sqrt(s2 - a3);
}

Nonlinearity becu() {
  Nonlinearity nl;
  nl.name = "becu";
  nl.m = 3;
  nl.n = 1;
  nl.fully_covered = false;
  nl.kappa = [](const Eigen::Ref<const Eigen::MatrixXd>& A) { return becu_stability(A); };
  nl.covered = [](const Eigen::Ref<const Eigen::MatrixXd>& A) { return !(A(2, 0) > 0.0); };
  return nl;
}

double example2_k(const Eigen::Ref<const Eigen::MatrixXd>& A) {
  if (A.rows() != 3 || A.cols() != 1) throw ConfigError("example2_k: expects a 3x1 gradient");
  return std::sqrt(A(0, 0) * A(0, 0) + A(1, 0) * A(1, 0) + std::abs(A(2, 0)));
}

GrowthParams example2_growth_params() {
  GrowthParams gp;
  gp.m = 3;
  gp.n = 1;
  gp.p = Eigen::Vector3d(3.0, 3.0, 2.5);
  gp.mu = Eigen::Vector3d::Zero();
  // With these exponents the comparison sum is |A1| + |A2| + sqrt(|A3|), and
  // norm equivalence on R^3 gives the sandwich constants below. The small
  // slack keeps rounding at the equality case from registering as violations.
  gp.c0 = (1.0 - 1e-12) / std::sqrt(3.0);
  gp.c1 = 1.0 + 1e-12;
  return gp;
}

Nonlinearity example2() {
  Nonlinearity nl;
  nl.name = "example2";
  nl.m = 3;
  nl.n = 1;
  nl.growth = example2_growth_params();
  nl.kappa = [](const Eigen::Ref<const Eigen::MatrixXd>& A) { return example2_k(A); };
  return nl;
}

double monotonicity_indicator(const Nonlinearity& nl, const Eigen::Ref<const Eigen::MatrixXd>& xi,
                              const Eigen::Ref<const Eigen::MatrixXd>& eta) {
  return ((nl.a(xi) - nl.a(eta)).array() * (xi - eta).array()).sum();
}

GrowthReport check_growth(const Nonlinearity& nl, const GrowthParams& params, const SamplerSpec& sampler) {
  GrowthReport rep;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  rep.max_ratio = -std::numeric_limits<double>::infinity();
  Rng rng(sampler.seed);
  auto visit = [&](const Eigen::MatrixXd& A) {
    const double k = nl.kappa(A);
    const double sum = params.comparison_sum(A);
    const double slack = 1e-12 * (1.0 + std::abs(k) + std::abs(sum));
    ++rep.samples;
    if (k < params.c0 * sum - slack || k > params.c1 * sum + slack) ++rep.violations;
    if (sum > 0.0) {
      const double ratio = k / sum;
      rep.min_ratio = std::min(rep.min_ratio, ratio);
      rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
  };
  visit(Eigen::MatrixXd::Zero(nl.m, nl.n));
  for (double radius : sampler.radii) {
    for (int s = 0; s < sampler.samples_per_radius; ++s) {
      visit(radius * random_direction(rng, nl.m, nl.n));
    }
  }
  return rep;
}

double estimate_er_norm(const std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>&)>& g,
                        int m, int n, double r, const SamplerSpec& sampler) {
  if (!(r > 0.0)) throw ConfigError("estimate_er_norm: r must be positive");
  Rng rng(sampler.seed);
  auto ratio = [&](const Eigen::MatrixXd& A) {
    return g(A).norm() / (1.0 + std::pow(A.norm(), r));
  };
  double best = ratio(Eigen::MatrixXd::Zero(m, n));
  for (double radius : sampler.radii) {
    for (int s = 0; s < sampler.samples_per_radius; ++s) {
      best = std::max(best, ratio(radius * random_direction(rng, m, n)));
    }
  }
  return best;
}

double estimate_local_lipschitz(const Nonlinearity& nl, double radius, int pairs, std::uint64_t seed) {
  Rng rng(seed);
  double best = 0.0;
  for (int s = 0; s < pairs; ++s) {
    const Eigen::MatrixXd xi = rng.uniform(0.0, radius) * random_direction(rng, nl.m, nl.n);
    const Eigen::MatrixXd eta = rng.uniform(0.0, radius) * random_direction(rng, nl.m, nl.n);
    const double dist = (xi - eta).norm();
    if (dist == 0.0) continue;
    best = std::max(best, (nl.a(xi) - nl.a(eta)).norm() / dist);
  }
  return best;
}

Nonlinearity make_nonlinearity(const std::string& name, const std::optional<GrowthParams>& params) {
  if (name == "power_law") {
    if (!params) throw ConfigError("power_law requires growth parameters");
    return power_law(*params);
  }
  if (name == "becu") {
    Nonlinearity nl = becu();
    if (params) {
      params->validate();
      nl.growth = *params;
    }
    return nl;
  }
  if (name == "example2") {
    Nonlinearity nl = example2();
    if (params) {
      params->validate();
      nl.growth = *params;
    }
    return nl;
  }
  throw ConfigError("unknown nonlinearity '" + name + "'; known: power_law, becu, example2");
}

std::vector<std::string> nonlinearity_names() { return {"power_law", "becu", "example2"}; }

}  // namespace fbp
