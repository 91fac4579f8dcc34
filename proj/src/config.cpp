#include "fbp/config.hpp"

#include <cmath>
#include <fstream>

#include "fbp/expression.hpp"

namespace fbp {

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& what) { throw ConfigError("config: " + what); }

const json& require(const json& j, const char* key, const char* where) {
  const auto it = j.find(key);
  if (it == j.end()) config_fail(std::string(where) + " is missing '" + key + "'");
  return *it;
}

std::vector<std::string> string_list(const json& j, const char* where) {
  if (!j.is_array()) config_fail(std::string(where) + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) config_fail(std::string(where) + " must be a list of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Eigen::VectorXd number_list(const json& j, const char* where) {
  if (!j.is_array()) config_fail(std::string(where) + " must be a list of numbers");
  Eigen::VectorXd out(j.size());
  int i = 0;
  for (const auto& item : j) {
    if (!item.is_number()) config_fail(std::string(where) + " must be a list of numbers");
    out[i++] = item.get<double>();
  }
  return out;
}

/// Vector-valued (t, x) function from per-component expressions.
Forcing forcing_from_expressions(const std::vector<std::string>& texts) {
  const auto exprs = parse_expressions(texts);
  Forcing f;
  f.m = static_cast<int>(exprs.size());
  bool uses_time = false;
  bool all_zero = true;
  for (const auto& e : exprs) {
    uses_time = uses_time || e.uses_time();
    all_zero = all_zero && e.is_literal_zero();
  }
  f.time_independent = !uses_time;
  f.is_zero = all_zero;
  f.eval = [exprs](double t, double x) {
    Eigen::VectorXd v(static_cast<int>(exprs.size()));
    for (std::size_t c = 0; c < exprs.size(); ++c) v[static_cast<int>(c)] = exprs[c](x, t);
    return v;
  };
  return f;
}

SpatialFunction spatial_from_expressions(const std::vector<std::string>& texts) {
  const auto exprs = parse_expressions(texts);
  for (const auto& e : exprs) {
    if (e.uses_time()) config_fail("initial datum may not depend on t (expression '" + e.text() + "')");
  }
  SpatialFunction f;
  f.m = static_cast<int>(exprs.size());
  f.eval = [exprs](double x) {
    Eigen::VectorXd v(static_cast<int>(exprs.size()));
    for (std::size_t c = 0; c < exprs.size(); ++c) v[static_cast<int>(c)] = exprs[c](x, 0.0);
    return v;
  };
  return f;
}

std::optional<GrowthParams> growth_from_json(const json& nlj, int n_dim) {
  if (!nlj.contains("p")) return std::nullopt;
  GrowthParams gp;
  gp.p = number_list(nlj.at("p"), "problem.nonlinearity.p");
  gp.m = static_cast<int>(gp.p.size());
  gp.n = n_dim;
  gp.mu = nlj.contains("mu") ? number_list(nlj.at("mu"), "problem.nonlinearity.mu")
                             : Eigen::VectorXd::Zero(gp.m).eval();
  if (gp.mu.size() != gp.p.size()) config_fail("nonlinearity p and mu lengths differ");
  gp.c0 = nlj.value("c0", 1.0);
  gp.c1 = nlj.value("c1", 1.0);
  return gp;
}

}  // namespace

RunConfig parse_config(const json& j, bool allow_uncovered_flag) {
  RunConfig cfg;
  cfg.raw = j;

  const json& problem = require(j, "problem", "config");
  cfg.allow_uncovered = allow_uncovered_flag || problem.value("allow_uncovered", false);

  auto structural = [&cfg](const std::string& msg) {
    if (cfg.allow_uncovered) {
      cfg.warnings.push_back(msg);
    } else {
      config_fail(msg + " (pass allow_uncovered to run anyway)");
    }
  };

  // Nonlinearity + structural validation of its growth parameters.
  const json& nlj = require(problem, "nonlinearity", "problem");
  const std::string nl_name = require(nlj, "name", "problem.nonlinearity").get<std::string>();
  std::optional<GrowthParams> growth = growth_from_json(nlj, 1);
  if (growth) {
    std::vector<std::string> violations;
    growth->validate(&violations);
    for (const std::string& v : violations) structural(v);
    if (!violations.empty() && nl_name == "power_law")
      config_fail("power_law cannot run with invalid growth parameters");
  }
  cfg.setup.nl = [&] {
    if (nl_name == "power_law") {
      if (!growth) config_fail("power_law requires growth parameters p, mu, c0, c1");
      return power_law(*growth);
    }
    Nonlinearity nl = make_nonlinearity(nl_name, std::nullopt);
    if (growth) nl.growth = *growth;
    return nl;
  }();
  if (!cfg.setup.nl.fully_covered) {
    structural("nonlinearity '" + nl_name + "' has regimes outside the covered theory");
  }
  const int m = cfg.setup.nl.m;

  // Coupling matrix, with a sampled positivity check of B v . v >= 0.
  if (problem.contains("coupling")) {
    const json& bj = problem.at("coupling");
    if (!bj.is_array() || static_cast<int>(bj.size()) != m)
      config_fail("problem.coupling must be an m x m matrix");
    Eigen::MatrixXd b(m, m);
    for (int i = 0; i < m; ++i) {
      const Eigen::VectorXd row = number_list(bj.at(static_cast<std::size_t>(i)), "problem.coupling");
      if (row.size() != m) config_fail("problem.coupling must be an m x m matrix");
      b.row(i) = row.transpose();
    }
    cfg.setup.coupling = CouplingMatrix{b};
  } else {
    cfg.setup.coupling = CouplingMatrix::zero(m);
  }
  if (cfg.setup.coupling.positivity_min(1000, 0) < -1e-12) {
    structural("coupling matrix violates B v . v >= 0 on sampled directions");
  }

  // Forcing: expressions or the constant geostrophic preset.
  if (problem.contains("forcing")) {
    const json& fj = problem.at("forcing");
    if (fj.contains("preset")) {
      const std::string preset = fj.at("preset").get<std::string>();
      if (preset != "example1") config_fail("unknown forcing preset '" + preset + "'");
      if (m != 3) config_fail("forcing preset 'example1' needs a 3-component model");
      Eigen::VectorXd f(3);
      f << -fj.value("V", 1.0), fj.value("U", 1.0), 0.0;
      cfg.setup.forcing = Forcing::constant(f);
    } else {
      cfg.setup.forcing = forcing_from_expressions(
          string_list(require(fj, "expressions", "problem.forcing"), "problem.forcing.expressions"));
    }
  } else {
    cfg.setup.forcing = Forcing::zero(m);
  }
  if (cfg.setup.forcing.m != m) config_fail("forcing component count differs from the model");

  // Initial datum.
  const json& ij = require(problem, "initial", "problem");
  cfg.setup.initial = spatial_from_expressions(
      string_list(require(ij, "expressions", "problem.initial"), "problem.initial.expressions"));
  if (cfg.setup.initial.m != m) config_fail("initial datum component count differs from the model");

  if (problem.contains("domain")) {
    const Eigen::VectorXd dom = number_list(problem.at("domain"), "problem.domain");
    if (dom.size() != 2 || !(dom[0] < dom[1])) config_fail("problem.domain must be [a, b] with a < b");
    cfg.setup.domain_left = dom[0];
    cfg.setup.domain_right = dom[1];
  }

  const double final_time = require(problem, "T", "problem").get<double>();
  if (!(final_time > 0.0)) config_fail("problem.T must be positive");

  if (problem.contains("exact_solution")) {
    cfg.exact_solution = forcing_from_expressions(
        string_list(require(problem.at("exact_solution"), "expressions", "problem.exact_solution"),
                    "problem.exact_solution.expressions"));
    if (cfg.exact_solution->m != m) config_fail("exact solution component count differs from the model");
  }

  // Discretization.
  const json& disc = require(j, "discretization", "config");
  cfg.setup.elements = require(disc, "elements", "discretization").get<int>();
  if (cfg.setup.elements < 2) config_fail("discretization.elements must be at least 2");
  SchemeConfig& scheme = cfg.setup.scheme;
  if (disc.contains("steps")) {
    scheme.steps = disc.at("steps").get<int>();
    if (scheme.steps < 1) config_fail("discretization.steps must be positive");
    scheme.dt = final_time / scheme.steps;
  } else {
    const double dt = require(disc, "dt", "discretization").get<double>();
    if (!(dt > 0.0)) config_fail("discretization.dt must be positive");
    const double ratio = final_time / dt;
    const int steps = static_cast<int>(std::llround(ratio));
    if (steps < 1 || std::abs(ratio - steps) > 1e-6 * std::max(1.0, ratio))
      config_fail("discretization.dt must divide T into whole steps");
    scheme.steps = steps;
    scheme.dt = final_time / steps;  // pinned so dt * steps == T
  }
  scheme.newton_tol = disc.value("newton_tol", 1e-10);
  scheme.max_newton_iters = disc.value("max_newton_iters", 50);
  scheme.damping = disc.value("damping", 0.5);
  scheme.newton_enabled = disc.value("newton", true);
  scheme.fallback_fixed_point = disc.value("fixed_point_fallback", true);
  scheme.max_fixed_point_iters = disc.value("max_fixed_point_iters", 5000);
  scheme.validate();

  // Ensemble block (optional; cmd_run ignores it).
  if (j.contains("ensemble")) {
    const json& ens = j.at("ensemble");
    cfg.ensemble.members = ens.value("members", 1);
    cfg.ensemble.epsilon = ens.value("epsilon", 0.1);
    cfg.ensemble.seed = ens.value("seed", static_cast<std::uint64_t>(0));
    cfg.ensemble.law = perturbation_law_from_string(ens.value("law", std::string("uniform-nodal")));
    cfg.ensemble.threads = ens.value("threads", 1);
    if (ens.contains("record")) {
      const json& rec = ens.at("record");
      if (rec.is_string()) {
        const std::string mode = rec.get<std::string>();
        if (mode == "all") {
          cfg.ensemble.record_all = true;
        } else if (mode != "default") {
          config_fail("ensemble.record must be 'all', 'default' or a list of steps");
        }
      } else if (rec.is_array()) {
        for (const auto& r : rec) cfg.ensemble.record_steps.push_back(r.get<int>());
      } else {
        config_fail("ensemble.record must be 'all', 'default' or a list of steps");
      }
    }
    cfg.ensemble.validate();
    cfg.ensemble.resolved_records(scheme.steps);  // range check now
  }

  // Output block.
  if (j.contains("output")) {
    const json& out = j.at("output");
    cfg.output.directory = out.value("directory", std::string("out"));
    if (out.contains("formats")) {
      cfg.output.csv = false;
      cfg.output.json = false;
      for (const std::string& f : string_list(out.at("formats"), "output.formats")) {
        if (f == "csv") {
          cfg.output.csv = true;
        } else if (f == "json") {
          cfg.output.json = true;
        } else {
          config_fail("unknown output format '" + f + "'");
        }
      }
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path, bool allow_uncovered_flag) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j, allow_uncovered_flag);
}

}  // namespace fbp
