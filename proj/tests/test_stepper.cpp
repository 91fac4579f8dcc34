#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "fbp/fe_field.hpp"
#include "fbp/nonlinearity.hpp"
#include "fbp/quadrature.hpp"
#include "fbp/rng.hpp"
#include "fbp/stepper.hpp"

using namespace fbp;

namespace {

GrowthParams scalar_params(double p, double mu = 0.0) {
  GrowthParams gp;
  gp.m = 1;
  gp.n = 1;
  gp.p = Eigen::VectorXd::Constant(1, p);
  gp.mu = Eigen::VectorXd::Constant(1, mu);
  return gp;
}

// Dense P1 stiffness matrix over interior nodes (independent oracle assembly).
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

FeField project_sin(const MeshPtr& mesh) {
  return l2_project(mesh, {1, [](double x) {
                             return Eigen::VectorXd::Constant(1, std::sin(M_PI * x));
                           }},
                    5);
}

SpatialFunction exact_heat(double t) {
  return {1, [t](double x) {
            return Eigen::VectorXd::Constant(1, std::exp(-M_PI * M_PI * t) * std::sin(M_PI * x));
          }};
}

double l2_error_against(const FeField& u, const SpatialFunction& ref) {
  const Mesh1D& mesh = *u.mesh();
  const GaussRule rule = gauss_rule(5);
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double xl = mesh.node(e), h = mesh.length(e);
    for (int q = 0; q < rule.n; ++q) {
      const double x = xl + rule.points[q] * h;
      acc += rule.weights[q] * h * (u.value(x) - ref.eval(x)).squaredNorm();
    }
  }
  return std::sqrt(acc);
}

Forcing example1_forcing(double v_geo = 1.0, double u_geo = 1.0) {
  Eigen::VectorXd f(3);
  f << -v_geo, u_geo, 0.0;
  return Forcing::constant(f);
}

FeField becu_initial(const MeshPtr& mesh) {
  return l2_project(mesh, {3, [](double x) {
                             Eigen::VectorXd v(3);
                             v << std::sin(M_PI * x), 4.0 * x * (1.0 - x), 0.1 * std::sin(2.0 * M_PI * x);
                             return v;
                           }},
                    5);
}

}  // namespace

TEST_CASE("scheme config validation") {
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 10;
  CHECK_NOTHROW(cfg.validate());
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dt = 1e-3;
  cfg.damping = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("coupling matrix positivity sampling") {
  const CouplingMatrix skew = CouplingMatrix::boundary_layer_skew();
  CHECK(std::abs(skew.positivity_min(500, 3)) <= 1e-14);  // skew: exactly zero
  CouplingMatrix indefinite{-Eigen::MatrixXd::Identity(2, 2)};
  CHECK(indefinite.positivity_min(500, 3) < 0.0);
}

TEST_CASE("average forcing") {
  const double dt = 0.02;

  // Constant forcing averages to itself at every step.
  const Forcing constant = example1_forcing();
  for (int i : {1, 3, 7}) {
    const SpatialFunction avg = average_forcing(constant, i, dt);
    const Eigen::VectorXd v = avg.eval(0.37);
    CHECK(v[0] == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(v[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v[2] == 0.0);
  }

  // F = t * g(x): the first-slab average is (dt/2) g(x).
  const Forcing linear{1, [](double t, double x) {
                         return Eigen::VectorXd::Constant(1, t * (1.0 + x));
                       }};
  const SpatialFunction first = average_forcing(linear, 1, dt);
  CHECK(first.eval(0.5)[0] == doctest::Approx(0.5 * dt * 1.5).epsilon(1e-13));

  const SpatialFunction zero = average_forcing(Forcing::zero(2), 1, dt);
  CHECK(zero.eval(0.1).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(average_forcing(constant, 0, dt), ConfigError);
}

TEST_CASE("one linear-heat step equals the direct banded solve") {
  const MeshPtr mesh = build_uniform_mesh(16, 0.0, 1.0);
  const Nonlinearity heat = power_law(scalar_params(2.0));
  const CouplingMatrix zero_b = CouplingMatrix::zero(1);
  const FeField u0 = project_sin(mesh);

  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 1;

  const Eigen::MatrixXd load = Eigen::MatrixXd::Zero(mesh->num_interior(), 1);
  StepStats stats;
  const FeField u1 = implicit_euler_step(mesh, heat, zero_b, u0, load, cfg, &stats);

  // Oracle: (M + dt S) u1 = M u0 with independently assembled matrices.
  const Eigen::MatrixXd m = assemble_mass_matrix(*mesh).dense();
  const Eigen::MatrixXd s = dense_stiffness(*mesh);
  const Eigen::VectorXd ref = (m + cfg.dt * s).partialPivLu().solve(m * u0.coeffs().col(0));
  CHECK((u1.coeffs().col(0) - ref).cwiseAbs().maxCoeff() <= 1e-11);
  CHECK(stats.residual <= cfg.newton_tol);
}

TEST_CASE("zero data with a(0)=0 stays exactly zero") {
  const MeshPtr mesh = build_uniform_mesh(8, 0.0, 1.0);
  const Nonlinearity nl = becu();
  CouplingMatrix coupling{Eigen::MatrixXd::Random(3, 3)};
  const FeField zero(mesh, 3);
  SchemeConfig cfg;
  cfg.dt = 1e-2;
  cfg.steps = 3;
  const Trajectory traj = run_trajectory(mesh, nl, coupling, zero, Forcing::zero(3), cfg);
  for (const auto& snap : traj.snapshots) CHECK(snap.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("boundary-layer step converges and satisfies the residual contract") {
  const MeshPtr mesh = build_uniform_mesh(32, 0.0, 1.0);
  const Nonlinearity nl = becu();
  const CouplingMatrix skew = CouplingMatrix::boundary_layer_skew();
  const FeField u0 = becu_initial(mesh);
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 10;
  const Forcing forcing = example1_forcing();

  const Trajectory traj = run_trajectory(mesh, nl, skew, u0, forcing, cfg);
  REQUIRE(traj.steps() == 10);

  // Re-evaluate the residual of every accepted step independently of the
  // solver bookkeeping.
  const SpatialFunction avg = average_forcing(forcing, 1, cfg.dt);
  const Eigen::MatrixXd load = assemble_load(*mesh, avg, 2);
  for (int i = 1; i <= traj.steps(); ++i) {
    const Eigen::MatrixXd r = residual_vector(*mesh, nl, skew, traj.snapshots[i - 1],
                                              traj.snapshots[i], load, cfg.dt);
    CHECK(r.cwiseAbs().maxCoeff() <= cfg.newton_tol);
  }
  // The initial data makes dx u3 > 0 somewhere: the uncovered branch is hit.
  CHECK(traj.total_uncovered() > 0);
}

TEST_CASE("single-step trajectory applies exactly one step") {
  const MeshPtr mesh = build_uniform_mesh(8, 0.0, 1.0);
  const Nonlinearity heat = power_law(scalar_params(2.0));
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 1;
  const Trajectory traj =
      run_trajectory(mesh, heat, CouplingMatrix::zero(1), project_sin(mesh), Forcing::zero(1), cfg);
  CHECK(traj.steps() == 1);
  CHECK(traj.snapshots.size() == 2);
  CHECK(traj.stats.size() == 1);
}

TEST_CASE("linear heat trajectory tracks the separated exact solution") {
  const MeshPtr mesh = build_uniform_mesh(32, 0.0, 1.0);
  const Nonlinearity heat = power_law(scalar_params(2.0));
  SchemeConfig cfg;
  cfg.dt = 5e-4;
  cfg.steps = 40;  // T = 0.02
  const Trajectory traj =
      run_trajectory(mesh, heat, CouplingMatrix::zero(1), project_sin(mesh), Forcing::zero(1), cfg);
  const double err = l2_error_against(traj.field(traj.steps()), exact_heat(cfg.final_time()));
  // First order in dt plus second order in h; comfortably below 2e-3 here.
  CHECK(err <= 2e-3);
}

TEST_CASE("time interpolants") {
  const MeshPtr mesh = build_uniform_mesh(8, 0.0, 1.0);
  const Nonlinearity heat = power_law(scalar_params(2.0));
  SchemeConfig cfg;
  cfg.dt = 0.25;
  cfg.steps = 4;
  const Trajectory traj =
      run_trajectory(mesh, heat, CouplingMatrix::zero(1), project_sin(mesh), Forcing::zero(1), cfg);

  for (int i = 0; i <= traj.steps(); ++i) {
    const double t = traj.time(i);
    CHECK((interpolant_linear(traj, t).coeffs() - traj.snapshots[i]).cwiseAbs().maxCoeff() <= 1e-15);
    if (i > 0) {
      CHECK((interpolant_constant(traj, t).coeffs() - traj.snapshots[i]).cwiseAbs().maxCoeff() == 0.0);
    }
  }

  // Midpoint of the first slab: the affine average.
  const Eigen::MatrixXd mid = interpolant_linear(traj, 0.125).coeffs();
  CHECK((mid - 0.5 * (traj.snapshots[0] + traj.snapshots[1])).cwiseAbs().maxCoeff() <= 1e-15);

  // Constant interpolant extends to [-dt, 0] with the initial snapshot.
  CHECK((interpolant_constant(traj, -0.1).coeffs() - traj.snapshots[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((interpolant_constant(traj, 0.0).coeffs() - traj.snapshots[0]).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(interpolant_linear(traj, -0.2), DomainError);
  CHECK_THROWS_AS(interpolant_linear(traj, 1.2), DomainError);
  CHECK_THROWS_AS(interpolant_constant(traj, -0.3), DomainError);
}

TEST_CASE("interpolant gap identity") {
  const MeshPtr mesh = build_uniform_mesh(16, 0.0, 1.0);
  const Nonlinearity nl = becu();
  SchemeConfig cfg;
  cfg.dt = 2e-3;
  cfg.steps = 25;
  const Trajectory traj = run_trajectory(mesh, nl, CouplingMatrix::boundary_layer_skew(),
                                         becu_initial(mesh), example1_forcing(), cfg);

  // Left side via 2-point Gauss in time per slab (integrand quadratic in t),
  // evaluating the two interpolants as black boxes.
  const GaussRule rule = gauss_rule(2);
  const Tridiagonal mass = assemble_mass_matrix(*mesh);
  double lhs = 0.0;
  for (int i = 1; i <= traj.steps(); ++i) {
    for (int q = 0; q < rule.n; ++q) {
      const double t = traj.time(i - 1) + rule.points[q] * cfg.dt;
      const Eigen::MatrixXd diff =
          interpolant_linear(traj, t).coeffs() - interpolant_constant(traj, t).coeffs();
      lhs += rule.weights[q] * cfg.dt * l2_inner_coeffs(mass, diff, diff);
    }
  }
  double rhs = 0.0;
  for (int i = 1; i <= traj.steps(); ++i) {
    const Eigen::MatrixXd inc = traj.snapshots[i] - traj.snapshots[i - 1];
    rhs += l2_inner_coeffs(mass, inc, inc);
  }
  rhs *= cfg.dt / 3.0;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("time step advisory") {
  CHECK(std::isinf(max_stable_dt_advisory(0.1, 0.0)));
  const double base = max_stable_dt_advisory(1.0 / 32.0, 2.0);
  CHECK(base > 0.0);
  CHECK(max_stable_dt_advisory(1.0 / 32.0, 4.0) == doctest::Approx(0.5 * base).epsilon(1e-14));

  // Contraction factor at the advisory stays inside (0, 1).
  const double h = 1.0 / 32.0;
  const double lip = 1.0;  // linear heat
  const double dt = max_stable_dt_advisory(h, lip);
  const double c = lip * 12.0 / (h * h);
  const int n = 64;
  const double factor = std::pow(1.0 - c * dt, n);
  CHECK(factor > 0.0);
  CHECK(factor < 1.0);
  CHECK_THROWS_AS(max_stable_dt_advisory(0.0, 1.0), ConfigError);
}

TEST_CASE("trajectories are bit-reproducible") {
  const MeshPtr mesh = build_uniform_mesh(16, 0.0, 1.0);
  const Nonlinearity nl = becu();
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 5;
  const FeField u0 = becu_initial(mesh);
  const Trajectory a = run_trajectory(mesh, nl, CouplingMatrix::boundary_layer_skew(), u0,
                                      example1_forcing(), cfg);
  const Trajectory b = run_trajectory(mesh, nl, CouplingMatrix::boundary_layer_skew(), u0,
                                      example1_forcing(), cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
    CHECK((a.snapshots[i] - b.snapshots[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fixed-point iteration alone solves inside its contraction regime") {
  const MeshPtr mesh = build_uniform_mesh(16, 0.0, 1.0);
  const Nonlinearity nl = example2();
  SchemeConfig cfg;
  cfg.dt = 1e-6;  // inside the contraction regime of the plain iteration
  cfg.steps = 1;
  cfg.newton_enabled = false;
  const FeField u0 = becu_initial(mesh);
  StepStats stats;
  const Eigen::MatrixXd load = Eigen::MatrixXd::Zero(mesh->num_interior(), 3);
  const FeField u1 =
      implicit_euler_step(mesh, nl, CouplingMatrix::boundary_layer_skew(), u0, load, cfg, &stats);
  CHECK(stats.used_fallback);
  CHECK(stats.fixed_point_iters >= 1);
  const Eigen::MatrixXd r = residual_vector(*mesh, nl, CouplingMatrix::boundary_layer_skew(),
                                            u0.coeffs(), u1.coeffs(), load, cfg.dt);
  CHECK(r.cwiseAbs().maxCoeff() <= cfg.newton_tol);
}

TEST_CASE("time-slabbed nodal forcing") {
  const MeshPtr mesh = build_uniform_mesh(4, 0.0, 1.0);
  const double dt = 0.1;
  // Slab 1 holds the nodal values of x, slab 2 those of 2x.
  std::vector<Eigen::MatrixXd> slabs(2, Eigen::MatrixXd(mesh->num_nodes(), 1));
  for (int j = 0; j < mesh->num_nodes(); ++j) {
    slabs[0](j, 0) = mesh->node(j);
    slabs[1](j, 0) = 2.0 * mesh->node(j);
  }
  const Forcing f = Forcing::from_slab_table(mesh, dt, slabs);
  CHECK(f.eval(0.05, 0.3)[0] == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(f.eval(0.1, 0.3)[0] == doctest::Approx(0.3).epsilon(1e-14));   // right-continuous slabs
  CHECK(f.eval(0.15, 0.3)[0] == doctest::Approx(0.6).epsilon(1e-14));
  // Slab averages reproduce the slab values exactly.
  const SpatialFunction avg = average_forcing(f, 2, dt);
  CHECK(avg.eval(0.25)[0] == doctest::Approx(0.5).epsilon(1e-13));

  Eigen::MatrixXd bad(2, 1);
  CHECK_THROWS_AS(Forcing::from_slab_table(mesh, dt, {bad}), ConfigError);
}

TEST_CASE("non-convergence carries the failing step") {
  const MeshPtr mesh = build_uniform_mesh(8, 0.0, 1.0);
  const Nonlinearity nl = becu();
  SchemeConfig cfg;
  cfg.dt = 1e-3;
  cfg.steps = 3;
  cfg.max_newton_iters = 1;
  cfg.fallback_fixed_point = false;
  cfg.newton_tol = 1e-300;  // unreachable
  try {
    run_trajectory(mesh, nl, CouplingMatrix::boundary_layer_skew(), becu_initial(mesh),
                   example1_forcing(), cfg);
    FAIL("expected NonConvergence");
  } catch (const NonConvergence& e) {
    CHECK(e.step_index >= 1);
  }
}
