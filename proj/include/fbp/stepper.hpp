#ifndef FBP_STEPPER_HPP
#define FBP_STEPPER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "fbp/fe_field.hpp"
#include "fbp/nonlinearity.hpp"

namespace fbp {

/// Time-stepping parameters. dt * steps = final time T.
struct SchemeConfig {
  double dt = 1e-3;
  int steps = 1;
  double newton_tol = 1e-10;  // absolute sup-norm of the assembled residual
  int max_newton_iters = 50;
  double damping = 0.5;  // line-search backoff factor in (0,1)
  bool newton_enabled = true;  // false: use the fixed-point iteration alone
  bool fallback_fixed_point = true;
  int max_fixed_point_iters = 5000;

  double final_time() const { return dt * steps; }
  void validate() const;
};

/// Constant m x m zeroth-order coupling matrix. The scheme only relies on
/// B v . v >= 0, which can be spot-checked on random vectors.
struct CouplingMatrix {
  Eigen::MatrixXd B;

  static CouplingMatrix zero(int m) { return {Eigen::MatrixXd::Zero(m, m)}; }
  /// Skew-symmetric coupling of the boundary-layer model (m = 3).
  static CouplingMatrix boundary_layer_skew();

  /// Minimum of B v . v over `samples` random unit vectors (negative values
  /// flag a violation of the positivity assumption).
  double positivity_min(int samples, std::uint64_t seed) const;
};

/// m-component forcing F(t, x). The flags let the stepper skip or cache the
/// per-step load assembly; they are never required for correctness.
struct Forcing {
  int m = 1;
  std::function<Eigen::VectorXd(double, double)> eval;
  bool time_independent = false;
  bool is_zero = false;

  static Forcing zero(int m) {
    Forcing f{m, [m](double, double) { return Eigen::VectorXd::Zero(m).eval(); }};
    f.time_independent = true;
    f.is_zero = true;
    return f;
  }
  static Forcing constant(Eigen::VectorXd v) {
    const int m = static_cast<int>(v.size());
    const bool zero = v.isZero(0.0);
    Forcing f{m, [v = std::move(v)](double, double) { return v; }};
    f.time_independent = true;
    f.is_zero = zero;
    return f;
  }
  /// Time-slabbed nodal data: slab i (one per step, constant on
  /// (t_{i-1}, t_i]) holds nodal values (num_nodes x m) interpolated
  /// piecewise-linearly in space.
  static Forcing from_slab_table(MeshPtr mesh, double dt, std::vector<Eigen::MatrixXd> slabs);
};

struct StepStats {
  int newton_iters = 0;
  int fixed_point_iters = 0;
  double residual = 0.0;  // sup-norm after acceptance, re-assembled
  bool used_fallback = false;
  int uncovered_elements = 0;  // elements whose gradient left the covered theory
};

/// Fully discrete solution: snapshots u_0 ... u_N plus solver statistics.
struct Trajectory {
  MeshPtr mesh;
  int m = 1;
  SchemeConfig scheme;
  std::vector<Eigen::MatrixXd> snapshots;  // steps+1 coefficient blocks (interior x m)
  std::vector<StepStats> stats;            // one per step

  int steps() const { return static_cast<int>(snapshots.size()) - 1; }
  double time(int i) const { return scheme.dt * i; }
  FeField field(int i) const { return FeField(mesh, snapshots[static_cast<std::size_t>(i)]); }
  long total_uncovered() const;
};

/// Slab average (1/dt) * integral of F over (t_{i-1}, t_i], as a spatial
/// function; composite Gauss in time, exact for F polynomial in t up to
/// degree 2*time_quad_points - 1.
SpatialFunction average_forcing(const Forcing& f, int step_index, double dt, int time_quad_points = 4);

/// Assembled weak residual of the implicit Euler step equation, as a
/// coefficient block (interior x m):
///   R = M (u - u_prev)/dt + flux(u) + M_B u - load.
Eigen::MatrixXd residual_vector(const Mesh1D& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                                const Eigen::Ref<const Eigen::MatrixXd>& prev,
                                const Eigen::Ref<const Eigen::MatrixXd>& current,
                                const Eigen::Ref<const Eigen::MatrixXd>& load, double dt);

/// One implicit Euler step: solves the nonlinear system for u_{i+1} so that
/// the assembled residual sup-norm is below cfg.newton_tol.
/// Throws NonConvergence when Newton and the fixed-point fallback both fail.
FeField implicit_euler_step(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                            const FeField& u_prev, const Eigen::Ref<const Eigen::MatrixXd>& load,
                            const SchemeConfig& cfg, StepStats* stats = nullptr);

Trajectory run_trajectory(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                          const FeField& u0h, const Forcing& forcing, const SchemeConfig& cfg);

/// Continuous piecewise-linear-in-time interpolant; t must lie in [0, T].
FeField interpolant_linear(const Trajectory& traj, double t);
/// Piecewise-constant-in-time interpolant u_i on (t_{i-1}, t_i]; defined on
/// [-dt, 0] as u_0. t must lie in [-dt, T].
FeField interpolant_constant(const Trajectory& traj, double t);

/// Advisory time-step bound: largest dt with C dt <= 1/2 for the estimate
/// C = lipschitz * c_inv^2 / h^2 (1D inverse inequality, c_inv^2 = 12).
/// Returns +infinity when the Lipschitz estimate is zero. Not enforced.
double max_stable_dt_advisory(double h, double lipschitz_estimate);

}  // namespace fbp

#endif
