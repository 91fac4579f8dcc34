#include "fbp/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "fbp/quadrature.hpp"
#include "fbp/rng.hpp"

namespace fbp {

namespace {

constexpr double kSqrtEps = 1.4901161193847656e-08;  // sqrt(machine epsilon)

/// Tridiagonal multiply into a preallocated block, column by column.
void mass_multiply(const Tridiagonal& mass, const Eigen::MatrixXd& x, Eigen::MatrixXd& out) {
  const int n = mass.size();
  for (int c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < n; ++i) {
      double v = mass.diag(i) * x(i, c);
      if (i > 0) v += mass.off(i - 1) * x(i - 1, c);
      if (i + 1 < n) v += mass.off(i) * x(i + 1, c);
      out(i, c) = v;
    }
  }
}

/// Shared state for the nonlinear solves of one trajectory.
class StepSolver {
 public:
  StepSolver(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
             const SchemeConfig& cfg)
      : mesh_(mesh),
        nl_(nl),
        b_matrix_(coupling.B),
        cfg_(cfg),
        mass_(assemble_mass_matrix(*mesh)),
        n_interior_(mesh->num_interior()),
        m_(nl.m),
        dim_(n_interior_ * m_),
        band_(2 * m_ - 1),
        grad_buf_(m_, 1),
        mass_prev_(n_interior_, m_),
        mass_cur_(n_interior_, m_),
        jac_(dim_, band_, band_) {
    if (b_matrix_.rows() != m_ || b_matrix_.cols() != m_)
      throw ConfigError("CouplingMatrix: shape does not match component count");
    // With every exponent equal to two the power-law factor is constant, the
    // step equation is linear and the Newton matrix can be factored once.
    if (nl.name == "power_law" && nl.growth) {
      constant_factor_ = (nl.growth->p.array() == 2.0).all();
    }
  }

  /// Solves for the next snapshot; `prev` and `load` are interior x m blocks.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& load, StepStats* stats);

  /// R = M (u - prev)/dt + flux(u) + (M u) B^T - load, with M prev cached.
  void residual(const Eigen::MatrixXd& current, const Eigen::MatrixXd& load, Eigen::MatrixXd& out);

  const Tridiagonal& mass() const { return mass_; }

 private:
  void add_flux(const Eigen::MatrixXd& current, Eigen::MatrixXd& out);
  void build_jacobian(const Eigen::MatrixXd& current, const Eigen::MatrixXd& load,
                      const Eigen::MatrixXd& base_residual);
  Eigen::MatrixXd fixed_point(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& load,
                              Eigen::MatrixXd start, StepStats* stats, double* out_res);
  int count_uncovered(const Eigen::MatrixXd& current);

  MeshPtr mesh_;
  const Nonlinearity& nl_;
  Eigen::MatrixXd b_matrix_;
  SchemeConfig cfg_;
  Tridiagonal mass_;
  int n_interior_, m_, dim_, band_;

  Eigen::MatrixXd grad_buf_;
  Eigen::MatrixXd mass_prev_, mass_cur_;
  BandedMatrix jac_;
  std::unique_ptr<BandedLU> fixed_point_matrix_;  // factored M + dt * (M x B), built on demand
  bool constant_factor_ = false;
  std::unique_ptr<BandedLU> cached_newton_lu_;
};

void StepSolver::add_flux(const Eigen::MatrixXd& current, Eigen::MatrixXd& out) {
  const Mesh1D& mesh = *mesh_;
  const int n_elem = mesh.num_elements();
  for (int e = 0; e < n_elem; ++e) {
    const double inv_h = 1.0 / mesh.length(e);
    const int left = e - 1, right = e;  // interior indices of the element end nodes
    for (int c = 0; c < m_; ++c) {
      const double ul = left >= 0 ? current(left, c) : 0.0;
      const double ur = right < n_interior_ ? current(right, c) : 0.0;
      grad_buf_(c, 0) = (ur - ul) * inv_h;
    }
    const double k = nl_.kappa(grad_buf_);
    if (!std::isfinite(k)) {
      std::ostringstream os;
      os << "flux evaluation: non-finite K on element " << e << " at gradient ("
         << grad_buf_.transpose() << ")";
      throw NumericalError(os.str());
    }
    for (int c = 0; c < m_; ++c) {
      const double flux_c = k * grad_buf_(c, 0);
      if (left >= 0) out(left, c) -= flux_c;
      if (right < n_interior_) out(right, c) += flux_c;
    }
  }
}

void StepSolver::residual(const Eigen::MatrixXd& current, const Eigen::MatrixXd& load,
                          Eigen::MatrixXd& out) {
  mass_multiply(mass_, current, mass_cur_);
  out = (mass_cur_ - mass_prev_) / cfg_.dt;
  out.noalias() += mass_cur_ * b_matrix_.transpose();
  out -= load;
  add_flux(current, out);
}

void StepSolver::build_jacobian(const Eigen::MatrixXd& current, const Eigen::MatrixXd& load,
                                const Eigen::MatrixXd& base_residual) {
  // Finite-difference Jacobian by structural coloring: perturbing every third
  // interior node touches disjoint row neighbourhoods, so one residual
  // evaluation yields the columns of a whole node class at once.
  jac_.set_zero();
  Eigen::MatrixXd pert = current;
  Eigen::MatrixXd r_pert(n_interior_, m_);
  for (int shift = 0; shift < 3; ++shift) {
    for (int c = 0; c < m_; ++c) {
      pert = current;
      bool any = false;
      for (int j = shift; j < n_interior_; j += 3) {
        pert(j, c) += kSqrtEps * (1.0 + std::abs(current(j, c)));
        any = true;
      }
      if (!any) continue;
      residual(pert, load, r_pert);
      for (int j = shift; j < n_interior_; j += 3) {
        const double delta = kSqrtEps * (1.0 + std::abs(current(j, c)));
        const int col = j * m_ + c;
        for (int i = std::max(0, j - 1); i <= std::min(n_interior_ - 1, j + 1); ++i) {
          for (int cc = 0; cc < m_; ++cc) {
            const int row = i * m_ + cc;
            if (std::abs(row - col) <= band_)
              jac_.at(row, col) = (r_pert(i, cc) - base_residual(i, cc)) / delta;
          }
        }
      }
    }
  }
}

int StepSolver::count_uncovered(const Eigen::MatrixXd& current) {
  if (!nl_.covered) return 0;
  const Mesh1D& mesh = *mesh_;
  int count = 0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double inv_h = 1.0 / mesh.length(e);
    const int left = e - 1, right = e;
    for (int c = 0; c < m_; ++c) {
      const double ul = left >= 0 ? current(left, c) : 0.0;
      const double ur = right < n_interior_ ? current(right, c) : 0.0;
      grad_buf_(c, 0) = (ur - ul) * inv_h;
    }
    if (!nl_.covered(grad_buf_)) ++count;
  }
  return count;
}

Eigen::MatrixXd StepSolver::fixed_point(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& load,
                                        Eigen::MatrixXd u, StepStats* stats, double* out_res) {
  // u <- (M + dt * M_B)^{-1} (M prev + dt (load - flux(u))), with M_B the
  // mass-coupling block M x B. The iteration matrix is constant, so it is
  // factored once and cached.
  (void)prev;  // enters through the cached M * prev
  if (!fixed_point_matrix_) {
    BandedMatrix g(dim_, band_, band_);
    for (int j = 0; j < n_interior_; ++j) {
      for (int jj = std::max(0, j - 1); jj <= std::min(n_interior_ - 1, j + 1); ++jj) {
        const double mval = (jj == j) ? mass_.diag(j) : mass_.off(std::min(j, jj));
        for (int c = 0; c < m_; ++c) {
          for (int cc = 0; cc < m_; ++cc) {
            const double v = mval * ((c == cc ? 1.0 : 0.0) + cfg_.dt * b_matrix_(c, cc));
            if (v != 0.0) g.at(j * m_ + c, jj * m_ + cc) = v;
          }
        }
      }
    }
    fixed_point_matrix_ = std::make_unique<BandedLU>(g);
    if (fixed_point_matrix_->singular())
      throw NumericalError("fixed-point fallback: singular iteration matrix");
  }
  Eigen::MatrixXd r(n_interior_, m_), flux(n_interior_, m_), rhs(n_interior_, m_);
  Eigen::VectorXd flat(dim_);
  double res = std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg_.max_fixed_point_iters; ++it) {
    try {
      residual(u, load, r);
    } catch (const NumericalError&) {
      res = std::numeric_limits<double>::infinity();
      break;
    }
    res = r.cwiseAbs().maxCoeff();
    if (res <= cfg_.newton_tol) break;
    // The plain iteration contracts only for dt small enough; stop early
    // once it is clearly diverging instead of overflowing.
    if (!std::isfinite(res) || res > 1e6 * (1.0 + best)) break;
    best = std::min(best, res);
    flux.setZero();
    add_flux(u, flux);
    rhs = mass_prev_ + cfg_.dt * (load - flux);
    for (int j = 0; j < n_interior_; ++j)
      for (int c = 0; c < m_; ++c) flat[j * m_ + c] = rhs(j, c);
    const Eigen::VectorXd sol = fixed_point_matrix_->solve(flat);
    for (int j = 0; j < n_interior_; ++j)
      for (int c = 0; c < m_; ++c) u(j, c) = sol[j * m_ + c];
  }
  if (stats) stats->fixed_point_iters = it;
  *out_res = res;
  return u;
}

Eigen::MatrixXd StepSolver::solve(const Eigen::MatrixXd& prev, const Eigen::MatrixXd& load,
                                  StepStats* stats) {
  mass_multiply(mass_, prev, mass_prev_);
  Eigen::MatrixXd u = prev;
  Eigen::MatrixXd r(n_interior_, m_), r_try(n_interior_, m_);
  residual(u, load, r);
  double res = r.cwiseAbs().maxCoeff();
  bool newton_failed = false;
  int iter = 0;
  const int newton_budget = cfg_.newton_enabled ? cfg_.max_newton_iters : 0;
  for (; iter < newton_budget && res > cfg_.newton_tol; ++iter) {
    std::unique_ptr<BandedLU> local_lu;
    const BandedLU* lu = nullptr;
    if (constant_factor_) {
      if (!cached_newton_lu_) {
        build_jacobian(u, load, r);
        cached_newton_lu_ = std::make_unique<BandedLU>(jac_);
      }
      lu = cached_newton_lu_.get();
    } else {
      build_jacobian(u, load, r);
      local_lu = std::make_unique<BandedLU>(jac_);
      lu = local_lu.get();
    }
    if (lu->singular()) {
      newton_failed = true;
      break;
    }
    Eigen::VectorXd rhs(dim_);
    for (int j = 0; j < n_interior_; ++j)
      for (int c = 0; c < m_; ++c) rhs[j * m_ + c] = -r(j, c);
    const Eigen::VectorXd step = lu->solve(rhs);
    // Armijo-style damping on the residual sup-norm.
    double lambda = 1.0;
    bool accepted = false;
    Eigen::MatrixXd u_try;
    while (lambda >= 1e-8) {
      u_try = u;
      for (int j = 0; j < n_interior_; ++j)
        for (int c = 0; c < m_; ++c) u_try(j, c) += lambda * step[j * m_ + c];
      residual(u_try, load, r_try);
      const double res_try = r_try.cwiseAbs().maxCoeff();
      if (res_try <= cfg_.newton_tol || res_try <= (1.0 - 1e-4 * lambda) * res) {
        u = u_try;
        r = r_try;
        res = res_try;
        accepted = true;
        break;
      }
      lambda *= cfg_.damping;
    }
    if (!accepted) {
      newton_failed = true;
      break;
    }
  }
  if (stats) stats->newton_iters = iter;
  bool used_fallback = false;
  if (res > cfg_.newton_tol || newton_failed) {
    if (!cfg_.fallback_fixed_point) {
      throw NonConvergence("implicit Euler step: Newton failed and fallback disabled", res, iter);
    }
    used_fallback = true;
    u = fixed_point(prev, load, prev, stats, &res);
    if (res > cfg_.newton_tol) {
      throw NonConvergence("implicit Euler step: Newton and fixed-point both failed", res,
                           iter + (stats ? stats->fixed_point_iters : 0));
    }
  }
  if (stats) {
    stats->used_fallback = used_fallback;
    stats->residual = res;
    stats->uncovered_elements = count_uncovered(u);
  }
  return u;
}

}  // namespace

void SchemeConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("SchemeConfig: dt must be positive");
  if (steps < 1) throw ConfigError("SchemeConfig: need at least one step");
  if (!(newton_tol > 0.0)) throw ConfigError("SchemeConfig: newton_tol must be positive");
  if (!(damping > 0.0 && damping < 1.0)) throw ConfigError("SchemeConfig: damping must lie in (0,1)");
  if (max_newton_iters < 1 || max_fixed_point_iters < 1)
    throw ConfigError("SchemeConfig: iteration limits must be positive");
}

Forcing Forcing::from_slab_table(MeshPtr mesh, double dt, std::vector<Eigen::MatrixXd> slabs) {
  if (slabs.empty()) throw ConfigError("Forcing::from_slab_table: need at least one slab");
  const int m = static_cast<int>(slabs.front().cols());
  for (const Eigen::MatrixXd& s : slabs) {
    if (s.rows() != mesh->num_nodes() || s.cols() != m)
      throw ConfigError("Forcing::from_slab_table: slab shape must be num_nodes x m");
  }
  const int n_slabs = static_cast<int>(slabs.size());
  Forcing f;
  f.m = m;
  f.eval = [mesh = std::move(mesh), dt, slabs = std::move(slabs), n_slabs](double t, double x) {
    int i = static_cast<int>(std::ceil(t / dt - 1e-9));
    i = std::clamp(i, 1, n_slabs) - 1;
    const int e = mesh->locate(x);
    const double xl = mesh->node(e), xr = mesh->node(e + 1);
    const double s = (x - xl) / (xr - xl);
    const Eigen::MatrixXd& slab = slabs[static_cast<std::size_t>(i)];
    return ((1.0 - s) * slab.row(e) + s * slab.row(e + 1)).transpose().eval();
  };
  return f;
}

CouplingMatrix CouplingMatrix::boundary_layer_skew() {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 3);
  b(0, 1) = 1.0;
  b(1, 0) = -1.0;
  return {b};
}

double CouplingMatrix::positivity_min(int samples, std::uint64_t seed) const {
  Rng rng(seed);
  const int m = static_cast<int>(B.rows());
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = rng.normal();
    const double norm = v.norm();
    if (norm == 0.0) continue;
    v /= norm;
    worst = std::min(worst, v.dot(B * v));
  }
  return worst;
}

SpatialFunction average_forcing(const Forcing& f, int step_index, double dt, int time_quad_points) {
  if (step_index < 1) throw ConfigError("average_forcing: step index starts at 1");
  if (!(dt > 0.0)) throw ConfigError("average_forcing: dt must be positive");
  const GaussRule rule = gauss_rule(time_quad_points);
  const double t0 = (step_index - 1) * dt;
  auto eval = f.eval;
  const int m = f.m;
  return {m, [eval, rule, t0, dt, m](double x) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
            for (int q = 0; q < rule.n; ++q) {
              acc += rule.weights[static_cast<std::size_t>(q)] *
                     eval(t0 + rule.points[static_cast<std::size_t>(q)] * dt, x);
            }
            return acc;
          }};
}

Eigen::MatrixXd residual_vector(const Mesh1D& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                                const Eigen::Ref<const Eigen::MatrixXd>& prev,
                                const Eigen::Ref<const Eigen::MatrixXd>& current,
                                const Eigen::Ref<const Eigen::MatrixXd>& load, double dt) {
  const Tridiagonal mass = assemble_mass_matrix(mesh);
  const int n = mesh.num_interior(), m = nl.m;
  Eigen::MatrixXd mass_prev(n, m), mass_cur(n, m);
  mass_multiply(mass, prev, mass_prev);
  mass_multiply(mass, current, mass_cur);
  Eigen::MatrixXd out = (mass_cur - mass_prev) / dt;
  out.noalias() += mass_cur * coupling.B.transpose();
  out -= load;
  Eigen::MatrixXd grad(m, 1);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double inv_h = 1.0 / mesh.length(e);
    const int left = e - 1, right = e;
    for (int c = 0; c < m; ++c) {
      const double ul = left >= 0 ? current(left, c) : 0.0;
      const double ur = right < n ? current(right, c) : 0.0;
      grad(c, 0) = (ur - ul) * inv_h;
    }
    const Eigen::MatrixXd a = nl.a(grad);
    for (int c = 0; c < m; ++c) {
      if (left >= 0) out(left, c) -= a(c, 0);
      if (right < n) out(right, c) += a(c, 0);
    }
  }
  return out;
}

FeField implicit_euler_step(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                            const FeField& u_prev, const Eigen::Ref<const Eigen::MatrixXd>& load,
                            const SchemeConfig& cfg, StepStats* stats) {
  cfg.validate();
  if (u_prev.components() != nl.m) throw ConfigError("implicit_euler_step: component mismatch");
  StepSolver solver(mesh, nl, coupling, cfg);
  StepStats local;
  Eigen::MatrixXd next = solver.solve(u_prev.coeffs(), load, &local);
  if (stats) *stats = local;
  return FeField(mesh, std::move(next));
}

Trajectory run_trajectory(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                          const FeField& u0h, const Forcing& forcing, const SchemeConfig& cfg) {
  cfg.validate();
  if (u0h.components() != nl.m || forcing.m != nl.m)
    throw ConfigError("run_trajectory: component mismatch between field, forcing difference and nonlinearity");
  Trajectory traj;
  traj.mesh = mesh;
  traj.m = nl.m;
  traj.scheme = cfg;
  traj.snapshots.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  traj.stats.reserve(static_cast<std::size_t>(cfg.steps));
  traj.snapshots.push_back(u0h.coeffs());

  StepSolver solver(mesh, nl, coupling, cfg);
  const Eigen::MatrixXd zero_load = Eigen::MatrixXd::Zero(mesh->num_interior(), nl.m);
  Eigen::MatrixXd cached_load;
  if (forcing.time_independent && !forcing.is_zero) {
    cached_load = assemble_load(*mesh, average_forcing(forcing, 1, cfg.dt), 2);
  }
  for (int i = 1; i <= cfg.steps; ++i) {
    const Eigen::MatrixXd* load = &zero_load;
    Eigen::MatrixXd step_load;
    if (!forcing.is_zero) {
      if (forcing.time_independent) {
        load = &cached_load;
      } else {
        step_load = assemble_load(*mesh, average_forcing(forcing, i, cfg.dt), 2);
        load = &step_load;
      }
    }
    StepStats stats;
    try {
      traj.snapshots.push_back(solver.solve(traj.snapshots.back(), *load, &stats));
    } catch (const NonConvergence& e) {
      throw NonConvergence(std::string(e.what()) + " (step " + std::to_string(i) + ")", e.residual,
                           e.iterations, i);
    }
    traj.stats.push_back(stats);
  }
  return traj;
}

long Trajectory::total_uncovered() const {
  long total = 0;
  for (const StepStats& s : stats) total += s.uncovered_elements;
  return total;
}

FeField interpolant_linear(const Trajectory& traj, double t) {
  const double T = traj.scheme.final_time();
  const double slack = 1e-9 * std::max(1.0, T);
  if (t < -slack || t > T + slack) throw DomainError("interpolant_linear: t outside [0, T]");
  const double dt = traj.scheme.dt;
  int i = static_cast<int>(std::floor(t / dt));
  i = std::clamp(i, 0, traj.steps() - 1);
  double theta = (t - i * dt) / dt;
  theta = std::clamp(theta, 0.0, 1.0);
  Eigen::MatrixXd coeffs = (1.0 - theta) * traj.snapshots[static_cast<std::size_t>(i)] +
                           theta * traj.snapshots[static_cast<std::size_t>(i + 1)];
  return FeField(traj.mesh, std::move(coeffs));
}

FeField interpolant_constant(const Trajectory& traj, double t) {
  const double T = traj.scheme.final_time();
  const double dt = traj.scheme.dt;
  const double slack = 1e-9 * std::max(1.0, T);
  if (t < -dt - slack || t > T + slack) throw DomainError("interpolant_constant: t outside [-dt, T]");
  if (t <= 0.0) return traj.field(0);
  int i = static_cast<int>(std::ceil(t / dt - 1e-9));
  i = std::clamp(i, 1, traj.steps());
  return traj.field(i);
}

double max_stable_dt_advisory(double h, double lipschitz_estimate) {
  if (!(h > 0.0)) throw ConfigError("max_stable_dt_advisory: h must be positive");
  if (lipschitz_estimate < 0.0) throw ConfigError("max_stable_dt_advisory: negative Lipschitz estimate");
  if (lipschitz_estimate == 0.0) return std::numeric_limits<double>::infinity();
  const double inverse_inequality_sq = 12.0;  // 1D P1: ||v'|| <= sqrt(12)/h ||v||
  const double c = lipschitz_estimate * inverse_inequality_sq / (h * h);
  return 0.5 / c;
}

}  // namespace fbp
