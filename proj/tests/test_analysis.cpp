#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fbp/analysis.hpp"
#include "fbp/rng.hpp"

using namespace fbp;

namespace {

GrowthParams scalar_params(double p) {
  GrowthParams gp;
  gp.m = 1;
  gp.n = 1;
  gp.p = Eigen::VectorXd::Constant(1, p);
  gp.mu = Eigen::VectorXd::Constant(1, 0.0);
  return gp;
}

ProblemSetup heat_setup(int elements = 16, double dt = 1e-3, int steps = 20) {
  ProblemSetup setup;
  setup.nl = power_law(scalar_params(2.0));
  setup.coupling = CouplingMatrix::zero(1);
  setup.initial = {1, [](double x) { return Eigen::VectorXd::Constant(1, std::sin(M_PI * x)); }};
  setup.forcing = Forcing::zero(1);
  setup.elements = elements;
  setup.scheme.dt = dt;
  setup.scheme.steps = steps;
  return setup;
}

ProblemSetup becu_setup(int elements = 16, double dt = 1e-3, int steps = 20) {
  ProblemSetup setup;
  setup.nl = becu();
  setup.coupling = CouplingMatrix::boundary_layer_skew();
  setup.initial = {3, [](double x) {
                     Eigen::VectorXd v(3);
                     v << std::sin(M_PI * x), 4.0 * x * (1.0 - x), 0.1 * std::sin(2.0 * M_PI * x);
                     return v;
                   }};
  Eigen::VectorXd f(3);
  f << -1.0, 1.0, 0.0;
  setup.forcing = Forcing::constant(f);
  setup.elements = elements;
  setup.scheme.dt = dt;
  setup.scheme.steps = steps;
  return setup;
}

// Dense P1 stiffness over interior nodes, for the heat dissipation oracle.
Eigen::MatrixXd dense_stiffness(const Mesh1D& mesh) {
  const int n = mesh.num_interior();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double w = 1.0 / mesh.length(e);
    const int l = e - 1, r = e;
    if (l >= 0) s(l, l) += w;
    if (r < n) s(r, r) += w;
    if (l >= 0 && r < n) {
      s(l, r) -= w;
      s(r, l) -= w;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("energy ledger: zero data gives an all-zero passing ledger") {
  const ProblemSetup setup = heat_setup();
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = run_trajectory(mesh, setup.nl, setup.coupling, FeField(mesh, 1),
                                         Forcing::zero(1), setup.scheme);
  const EnergyLedger ledger = energy_ledger(traj, setup.nl, Forcing::zero(1));
  CHECK(ledger.pass);
  for (const auto& e : ledger.entries) {
    CHECK(e.kinetic == 0.0);
    CHECK(e.increment == 0.0);
    CHECK(e.dissipation == 0.0);
    CHECK(e.work == 0.0);
  }
}

TEST_CASE("energy ledger: linear heat decays and dissipation matches the stiffness form") {
  const ProblemSetup setup = heat_setup(32, 5e-4, 40);
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = setup.run(mesh);
  const EnergyLedger ledger = energy_ledger(traj, setup.nl, setup.forcing);
  CHECK(ledger.pass);
  CHECK(ledger.max_violation <= ledger.epsilon_solver);
  CHECK(ledger.min_dissipation >= 0.0);

  // For K = 1 the dissipation is  2 dt ||Du_i||^2 = 2 dt u^T S u.
  const Eigen::MatrixXd s = dense_stiffness(*mesh);
  for (int i = 1; i <= traj.steps(); i += 7) {
    const Eigen::VectorXd u = traj.snapshots[static_cast<std::size_t>(i)].col(0);
    const double expected = 2.0 * setup.scheme.dt * u.dot(s * u);
    CHECK(ledger.entries[static_cast<std::size_t>(i - 1)].dissipation ==
          doctest::Approx(expected).epsilon(1e-11));
  }
}

TEST_CASE("energy ledger: skew coupling stays within the inequality with forcing") {
  const ProblemSetup setup = becu_setup(32, 1e-3, 50);
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = setup.run(mesh);
  const EnergyLedger ledger = energy_ledger(traj, setup.nl, setup.forcing);
  CHECK(ledger.pass);
  // The stability factor is nonnegative, so a(xi):xi >= 0 on every element.
  CHECK(ledger.min_dissipation >= 0.0);
  // Skew coupling contributes nothing: with exact solves the inequality is
  // an equality, so both sides agree to solver-tolerance scale.
  double scale = 0.0;
  for (const auto& e : ledger.entries) {
    scale = std::max({scale, std::abs(e.lhs), std::abs(e.rhs)});
    CHECK(std::abs(e.lhs - e.rhs) <= 1e-9 * std::max(1.0, scale));
  }
}

TEST_CASE("weak residual of a trajectory is solver-tolerance small") {
  const ProblemSetup setup = becu_setup(16, 1e-3, 12);
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = setup.run(mesh);

  const auto tests = default_test_family(*mesh, traj.steps(), 3, 4);
  REQUIRE(tests.size() > 0);
  const auto values = weak_residual(traj, setup.nl, setup.coupling, setup.forcing, tests);
  // |value| <= sum of slab weights (dt) * newton_tol.
  const double bound = traj.scheme.dt * traj.scheme.newton_tol * 2.0;
  for (double v : values) CHECK(std::abs(v) <= bound);
}

TEST_CASE("weak residual of the zero trajectory vanishes identically") {
  const ProblemSetup setup = heat_setup(8, 1e-3, 8);
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = run_trajectory(mesh, setup.nl, setup.coupling, FeField(mesh, 1),
                                         Forcing::zero(1), setup.scheme);
  for (double v : weak_residual(traj, setup.nl, setup.coupling, Forcing::zero(1),
                                default_test_family(*mesh, traj.steps(), 1, 2))) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("ensemble weak residual with one member equals the trajectory value") {
  const ProblemSetup setup = becu_setup(12, 2e-3, 8);
  const MeshPtr mesh = setup.make_mesh();
  EnsembleConfig ens;
  ens.members = 1;
  ens.epsilon = 0.2;
  ens.seed = 4;
  ens.record_all = true;
  const EnsembleResult result = run_ensemble(mesh, setup.nl, setup.coupling,
                                             setup.project_initial(mesh), setup.forcing,
                                             setup.scheme, ens);

  const auto draws = draw_perturbations(mesh, 1, 4, ens.law, 3);
  const Trajectory traj =
      run_trajectory(mesh, setup.nl, setup.coupling,
                     perturb_initial(setup.project_initial(mesh), draws[0], ens.epsilon),
                     setup.forcing, setup.scheme);

  const auto tests = default_test_family(*mesh, setup.scheme.steps, 3, 3);
  const auto via_measure = weak_residual(result, setup.nl, setup.coupling, setup.forcing, tests);
  const auto via_traj = weak_residual(traj, setup.nl, setup.coupling, setup.forcing, tests);
  REQUIRE(via_measure.size() == via_traj.size());
  for (std::size_t i = 0; i < via_measure.size(); ++i) {
    CHECK(via_measure[i] == via_traj[i]);  // Dirac moment: identical arithmetic
  }
}

TEST_CASE("ensemble weak residual demands recorded steps") {
  const ProblemSetup setup = heat_setup(8, 1e-3, 8);
  const MeshPtr mesh = setup.make_mesh();
  EnsembleConfig ens;
  ens.members = 2;
  ens.epsilon = 0.1;
  ens.record_steps = {0, 8};  // interior steps missing
  const EnsembleResult result = run_ensemble(mesh, setup.nl, setup.coupling,
                                             setup.project_initial(mesh), setup.forcing,
                                             setup.scheme, ens);
  const std::vector<TestFieldSpec> tests{{0, 2, 3}};
  CHECK_THROWS_AS(weak_residual(result, setup.nl, setup.coupling, setup.forcing, tests), ConfigError);
}

TEST_CASE("interpolant gap identity holds to near machine precision") {
  const ProblemSetup setup = becu_setup(16, 2e-3, 25);
  const MeshPtr mesh = setup.make_mesh();
  const Trajectory traj = setup.run(mesh);
  const InterpolantGap gap = interpolant_gap(traj);
  CHECK(gap.sum_value > 0.0);
  CHECK(gap.relative_gap() <= 1e-12);
}

TEST_CASE("continuous dependence: the discrete heat flow is a contraction") {
  const ProblemSetup setup = heat_setup(16, 1e-3, 30);
  const MeshPtr mesh = setup.make_mesh();
  const FeField u0 = setup.project_initial(mesh);
  FeField v0 = u0;
  v0.coeffs() *= 1.01;
  v0.coeffs()(2, 0) += 0.05;
  const ContinuousDependenceReport rep =
      continuous_dependence(mesh, setup.nl, setup.coupling, setup.forcing, setup.scheme, u0, v0);
  CHECK(rep.ratio <= 1.0 + 1e-12);
  CHECK(rep.exp_bound >= 1.0);
  CHECK_THROWS_AS(
      continuous_dependence(mesh, setup.nl, setup.coupling, setup.forcing, setup.scheme, u0, u0),
      ConfigError);
}

TEST_CASE("continuous dependence is stable under time-step halving (nonlinear)") {
  ProblemSetup setup = becu_setup(16, 1e-3, 20);
  const MeshPtr mesh = setup.make_mesh();
  const FeField u0 = setup.project_initial(mesh);
  FeField v0 = u0;
  v0.coeffs().col(0) *= 1.001;

  const ContinuousDependenceReport coarse =
      continuous_dependence(mesh, setup.nl, setup.coupling, setup.forcing, setup.scheme, u0, v0);
  setup.scheme.dt /= 2.0;
  setup.scheme.steps *= 2;
  const ContinuousDependenceReport fine =
      continuous_dependence(mesh, setup.nl, setup.coupling, setup.forcing, setup.scheme, u0, v0);
  CHECK(std::isfinite(coarse.ratio));
  CHECK(fine.ratio == doctest::Approx(coarse.ratio).epsilon(0.2));
}

TEST_CASE("variance study: deterministic setups have exactly zero variance") {
  const ProblemSetup setup = heat_setup(8, 2e-3, 10);
  VarianceStudyConfig cfg;
  cfg.member_counts = {2, 4};
  cfg.replicas = 8;
  cfg.epsilon = 0.0;
  const MomentFn identity = [](const Eigen::Ref<const Eigen::MatrixXd>& a) {
    return Eigen::MatrixXd(a);
  };
  const StudyReport rep = mc_variance_study(setup, identity, cfg);
  for (double v : rep.values) CHECK(v == 0.0);
  CHECK_FALSE(rep.pass);  // degenerate: no slope to fit

  // Constant moment: variance is exactly zero regardless of epsilon.
  VarianceStudyConfig cfg2 = cfg;
  cfg2.epsilon = 0.3;
  const MomentFn one = [](const Eigen::Ref<const Eigen::MatrixXd>&) {
    return Eigen::MatrixXd::Ones(1, 1).eval();
  };
  const StudyReport rep2 = mc_variance_study(setup, one, cfg2);
  for (double v : rep2.values) CHECK(v == 0.0);
}

TEST_CASE("variance study: Monte-Carlo rate on a small heat ensemble") {
  const ProblemSetup setup = heat_setup(8, 2e-3, 10);
  VarianceStudyConfig cfg;
  cfg.member_counts = {4, 16, 64};
  cfg.replicas = 12;
  cfg.epsilon = 0.2;
  cfg.seed = 3;
  const MomentFn identity = [](const Eigen::Ref<const Eigen::MatrixXd>& a) {
    return Eigen::MatrixXd(a);
  };
  const StudyReport rep = mc_variance_study(setup, identity, cfg);
  for (double v : rep.values) CHECK(v > 0.0);
  CHECK(rep.slope == doctest::Approx(-1.0).epsilon(0.45));

  VarianceStudyConfig bad = cfg;
  bad.member_counts = {4};
  CHECK_THROWS_AS(mc_variance_study(setup, identity, bad), ConfigError);
  bad.member_counts = {4, 16};
  bad.replicas = 4;
  CHECK_THROWS_AS(mc_variance_study(setup, identity, bad), ConfigError);
}

TEST_CASE("refinement study: dt axis differences halve for the heat scenario") {
  const ProblemSetup setup = heat_setup(16, 2e-3, 8);
  RefinementConfig cfg;
  cfg.axis = StudyAxis::Dt;
  cfg.levels = 4;
  cfg.ensemble.members = 2;
  cfg.ensemble.epsilon = 0.1;
  cfg.ensemble.seed = 6;
  const StudyReport rep = refinement_study(setup, cfg);
  REQUIRE(rep.cauchy_diffs.size() == 3);
  CHECK(rep.pass);
  // First-order time stepping: differences shrink by about a factor two.
  CHECK(rep.cauchy_diffs[0] / rep.cauchy_diffs[1] == doctest::Approx(2.0).epsilon(0.3));
  CHECK(rep.cauchy_diffs[1] / rep.cauchy_diffs[2] == doctest::Approx(2.0).epsilon(0.3));
}

TEST_CASE("refinement study: epsilon axis shrinks the atom spread proportionally") {
  const ProblemSetup setup = heat_setup(16, 2e-3, 8);
  RefinementConfig cfg;
  cfg.axis = StudyAxis::Epsilon;
  cfg.levels = 3;
  cfg.ensemble.members = 4;
  cfg.ensemble.epsilon = 0.2;
  cfg.ensemble.seed = 9;
  const StudyReport rep = refinement_study(setup, cfg);
  CHECK(rep.pass);
  REQUIRE(rep.values.size() == 3);  // atom spread per level
  CHECK(rep.values[1] == doctest::Approx(0.5 * rep.values[0]).epsilon(1e-6));
  CHECK(rep.values[2] == doctest::Approx(0.25 * rep.values[0]).epsilon(1e-6));
}

TEST_CASE("refinement study rejects single-level requests") {
  const ProblemSetup setup = heat_setup(8, 1e-3, 4);
  RefinementConfig cfg;
  cfg.levels = 1;
  CHECK_THROWS_AS(refinement_study(setup, cfg), ConfigError);
}
