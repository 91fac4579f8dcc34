#include "fbp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "fbp/quadrature.hpp"
#include "fbp/rng.hpp"

namespace fbp {

namespace {

Eigen::MatrixXd load_for_step(const Mesh1D& mesh, const Forcing& forcing, int step, double dt, int m) {
  if (forcing.is_zero) return Eigen::MatrixXd::Zero(mesh.num_interior(), m);
  return assemble_load(mesh, average_forcing(forcing, step, dt), 2);
}

/// 2 dt * integral a(Du) : Du over the domain (elementwise exact).
double dissipation_pairing(const Mesh1D& mesh, const Nonlinearity& nl, const FeField& u, double dt) {
  const ElementGradient g = gradient(u);
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Eigen::MatrixXd grad = g.per_element.row(e).transpose();
    acc += mesh.length(e) * nl.kappa(grad) * grad.squaredNorm();
  }
  return 2.0 * dt * acc;
}

double coeff_l1(const Eigen::MatrixXd& coeffs) { return coeffs.cwiseAbs().sum(); }

double sample_variance(const std::vector<double>& ys) {
  // Shifted two-pass form: exactly zero when all samples are bit-identical.
  const double ref = ys.front();
  double sum_d = 0.0, sum_d2 = 0.0;
  for (double y : ys) {
    const double d = y - ref;
    sum_d += d;
    sum_d2 += d * d;
  }
  const double n = static_cast<double>(ys.size());
  return std::max(0.0, (sum_d2 - sum_d * sum_d / n) / (n - 1.0));
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Time-hat integral over slab i for the hat centred at time node l: dt/2 on
/// the two adjacent slabs, zero elsewhere.
double time_hat_weight(int l, int slab, double dt) {
  return (slab == l || slab == l + 1) ? 0.5 * dt : 0.0;
}

PerturbationField transfer_to_mesh(const PerturbationField& base, const MeshPtr& mesh) {
  const int m = base.field.components();
  Eigen::MatrixXd coeffs(mesh->num_interior(), m);
  for (int j = 1; j < mesh->num_nodes() - 1; ++j) {
    coeffs.row(j - 1) = base.field.value(mesh->node(j)).transpose();
  }
  FeField field(mesh, std::move(coeffs));
  const double norm = l2_norm(field);
  if (norm > 1.0) field.coeffs() /= norm;
  return {std::move(field), base.member};
}

}  // namespace

EnergyLedger energy_ledger(const Trajectory& traj, const Nonlinearity& nl, const Forcing& forcing) {
  const Mesh1D& mesh = *traj.mesh;
  const Tridiagonal mass = assemble_mass_matrix(mesh);
  const double dt = traj.scheme.dt;
  const int n = traj.steps();

  EnergyLedger ledger;
  ledger.entries.reserve(static_cast<std::size_t>(n));
  auto norm2 = [&](const Eigen::MatrixXd& coeffs) {
    double q = 0.0;
    for (int c = 0; c < coeffs.cols(); ++c) q += mass.quadratic_form(coeffs.col(c));
    return q;
  };

  const double initial_kinetic = norm2(traj.snapshots.front());
  double running_lhs_tail = 0.0;  // increments + dissipation so far
  double running_rhs = initial_kinetic;
  double max_l1 = coeff_l1(traj.snapshots.front());
  ledger.min_dissipation = 0.0;
  ledger.max_violation = -std::numeric_limits<double>::infinity();

  for (int i = 1; i <= n; ++i) {
    const Eigen::MatrixXd& cur = traj.snapshots[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd& prev = traj.snapshots[static_cast<std::size_t>(i - 1)];
    EnergyLedger::Entry entry;
    entry.kinetic = norm2(cur);
    entry.increment = norm2(cur - prev);
    entry.dissipation = dissipation_pairing(mesh, nl, traj.field(i), dt);
    const Eigen::MatrixXd load = load_for_step(mesh, forcing, i, dt, traj.m);
    entry.work = 2.0 * dt * (load.array() * cur.array()).sum();

    running_lhs_tail += entry.increment + entry.dissipation;
    running_rhs += entry.work;
    entry.lhs = entry.kinetic + running_lhs_tail;
    entry.rhs = running_rhs;

    ledger.min_dissipation = std::min(ledger.min_dissipation, entry.dissipation);
    ledger.max_violation = std::max(ledger.max_violation, entry.lhs - entry.rhs);
    max_l1 = std::max(max_l1, coeff_l1(cur));
    ledger.entries.push_back(entry);
  }

  ledger.epsilon_solver = 2.0 * dt * (n + 1) * traj.scheme.newton_tol * max_l1;
  ledger.slack_formula = "eps_solver = 2*dt*(N+1)*newton_tol*max_i(sum|coeffs(u_i)|)";
  ledger.pass = ledger.max_violation <= ledger.epsilon_solver;
  return ledger;
}

std::vector<TestFieldSpec> default_test_family(const Mesh1D& mesh, int steps, int components,
                                               int stride) {
  std::vector<TestFieldSpec> tests;
  const int last_node = mesh.num_nodes() - 2;
  for (int c = 0; c < components; ++c) {
    for (int j = std::min(stride, last_node); j <= last_node; j += stride) {
      for (int l = 0; l <= steps - 1; l += stride) {
        tests.push_back({c, j, l});
      }
    }
  }
  return tests;
}

namespace {

void validate_test(const TestFieldSpec& t, const Mesh1D& mesh, int steps, int components) {
  if (t.component < 0 || t.component >= components)
    throw ConfigError("weak_residual: test component out of range");
  if (t.space_node < 1 || t.space_node > mesh.num_nodes() - 2)
    throw ConfigError("weak_residual: test space node must be interior");
  if (t.time_node < 0 || t.time_node > steps - 1)
    throw ConfigError("weak_residual: test time node must lie in [0, steps-1]");
}

}  // namespace

std::vector<double> weak_residual(const Trajectory& traj, const Nonlinearity& nl,
                                  const CouplingMatrix& coupling, const Forcing& forcing,
                                  const std::vector<TestFieldSpec>& tests) {
  const Mesh1D& mesh = *traj.mesh;
  const double dt = traj.scheme.dt;
  const int steps = traj.steps();
  for (const TestFieldSpec& t : tests) validate_test(t, mesh, steps, traj.m);

  // Assemble per-step residual vectors once, independently of the solver.
  std::map<int, Eigen::MatrixXd> residuals;
  auto residual_at = [&](int i) -> const Eigen::MatrixXd& {
    auto it = residuals.find(i);
    if (it == residuals.end()) {
      const Eigen::MatrixXd load = load_for_step(mesh, forcing, i, dt, traj.m);
      it = residuals
               .emplace(i, residual_vector(mesh, nl, coupling, traj.snapshots[static_cast<std::size_t>(i - 1)],
                                           traj.snapshots[static_cast<std::size_t>(i)], load, dt))
               .first;
    }
    return it->second;
  };

  std::vector<double> values;
  values.reserve(tests.size());
  for (const TestFieldSpec& t : tests) {
    double acc = 0.0;
    for (int slab = std::max(1, t.time_node); slab <= std::min(steps, t.time_node + 1); ++slab) {
      const double w = time_hat_weight(t.time_node, slab, dt);
      if (w != 0.0) acc += w * residual_at(slab)(t.space_node - 1, t.component);
    }
    values.push_back(acc);
  }
  return values;
}

namespace {

/// Mean-field residual of an ensemble at one step, with the flux replaced by
/// the measure moment of a.
Eigen::MatrixXd ensemble_step_residual(const EnsembleResult& result, const Nonlinearity& nl,
                                       const CouplingMatrix& coupling, const Forcing& forcing, int step) {
  const Mesh1D& mesh = *result.mesh;
  const double dt = result.scheme.dt;
  const int m = result.m;
  if (!result.measures.has_step(step))
    throw ConfigError("weak_residual: ensemble measure not recorded at step " + std::to_string(step));
  const Eigen::MatrixXd cur = result.mean_field_at(step).coeffs();
  Eigen::MatrixXd prev;
  try {
    prev = result.mean_field_at(step - 1).coeffs();
  } catch (const DomainError&) {
    throw ConfigError("weak_residual: ensemble mean not recorded at step " + std::to_string(step - 1));
  }

  const Tridiagonal mass = assemble_mass_matrix(mesh);
  const int n = mesh.num_interior();
  Eigen::MatrixXd mass_cur(n, m), mass_prev(n, m);
  for (int c = 0; c < m; ++c) {
    mass_cur.col(c) = mass.multiply(cur.col(c));
    mass_prev.col(c) = mass.multiply(prev.col(c));
  }
  Eigen::MatrixXd out = (mass_cur - mass_prev) / dt;
  out.noalias() += mass_cur * coupling.B.transpose();
  out -= load_for_step(mesh, forcing, step, dt, m);

  const MeasureSlice& slice = result.measures.slice_at_step(step);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const Eigen::MatrixXd& atoms = slice.gradient_atoms[static_cast<std::size_t>(e)];
    Eigen::MatrixXd moment = Eigen::MatrixXd::Zero(m, 1);
    for (int k = 0; k < atoms.rows(); ++k) moment += nl.a(atoms.row(k).transpose());
    moment /= static_cast<double>(atoms.rows());
    const int left = e - 1, right = e;
    for (int c = 0; c < m; ++c) {
      if (left >= 0) out(left, c) -= moment(c, 0);
      if (right < n) out(right, c) += moment(c, 0);
    }
  }
  return out;
}

}  // namespace

std::vector<double> weak_residual(const EnsembleResult& result, const Nonlinearity& nl,
                                  const CouplingMatrix& coupling, const Forcing& forcing,
                                  const std::vector<TestFieldSpec>& tests) {
  const Mesh1D& mesh = *result.mesh;
  const int steps = result.scheme.steps;
  for (const TestFieldSpec& t : tests) validate_test(t, mesh, steps, result.m);

  std::map<int, Eigen::MatrixXd> residuals;
  auto residual_at = [&](int i) -> const Eigen::MatrixXd& {
    auto it = residuals.find(i);
    if (it == residuals.end()) {
      it = residuals.emplace(i, ensemble_step_residual(result, nl, coupling, forcing, i)).first;
    }
    return it->second;
  };

  std::vector<double> values;
  values.reserve(tests.size());
  for (const TestFieldSpec& t : tests) {
    double acc = 0.0;
    for (int slab = std::max(1, t.time_node); slab <= std::min(steps, t.time_node + 1); ++slab) {
      const double w = time_hat_weight(t.time_node, slab, result.scheme.dt);
      if (w != 0.0) acc += w * residual_at(slab)(t.space_node - 1, t.component);
    }
    values.push_back(acc);
  }
  return values;
}

double InterpolantGap::relative_gap() const {
  const double scale = std::max({std::abs(quadrature_value), std::abs(sum_value), 1e-300});
  return std::abs(quadrature_value - sum_value) / scale;
}

InterpolantGap interpolant_gap(const Trajectory& traj) {
  const Tridiagonal mass = assemble_mass_matrix(*traj.mesh);
  const GaussRule rule = gauss_rule(2);
  const double dt = traj.scheme.dt;
  InterpolantGap gap;
  for (int i = 1; i <= traj.steps(); ++i) {
    for (int q = 0; q < rule.n; ++q) {
      const double t = traj.time(i - 1) + rule.points[static_cast<std::size_t>(q)] * dt;
      const Eigen::MatrixXd diff =
          interpolant_linear(traj, t).coeffs() - interpolant_constant(traj, t).coeffs();
      double quad = 0.0;
      for (int c = 0; c < diff.cols(); ++c) quad += mass.quadratic_form(diff.col(c));
      gap.quadrature_value += rule.weights[static_cast<std::size_t>(q)] * dt * quad;
    }
    const Eigen::MatrixXd inc =
        traj.snapshots[static_cast<std::size_t>(i)] - traj.snapshots[static_cast<std::size_t>(i - 1)];
    double quad = 0.0;
    for (int c = 0; c < inc.cols(); ++c) quad += mass.quadratic_form(inc.col(c));
    gap.sum_value += quad;
  }
  gap.sum_value *= dt / 3.0;
  return gap;
}

ContinuousDependenceReport continuous_dependence(const MeshPtr& mesh, const Nonlinearity& nl,
                                                 const CouplingMatrix& coupling, const Forcing& forcing,
                                                 const SchemeConfig& scheme, const FeField& u0,
                                                 const FeField& v0) {
  const Tridiagonal mass = assemble_mass_matrix(*mesh);
  auto norm = [&](const Eigen::MatrixXd& coeffs) {
    double q = 0.0;
    for (int c = 0; c < coeffs.cols(); ++c) q += mass.quadratic_form(coeffs.col(c));
    return std::sqrt(std::max(0.0, q));
  };
  ContinuousDependenceReport report;
  report.initial_distance = norm(u0.coeffs() - v0.coeffs());
  if (report.initial_distance == 0.0)
    throw ConfigError("continuous_dependence: initial fields coincide");

  const Trajectory u = run_trajectory(mesh, nl, coupling, u0, forcing, scheme);
  const Trajectory v = run_trajectory(mesh, nl, coupling, v0, forcing, scheme);
  double sup = 0.0;
  double grad_radius = 0.0;
  for (int i = 0; i <= scheme.steps; ++i) {
    sup = std::max(sup, norm(u.snapshots[static_cast<std::size_t>(i)] - v.snapshots[static_cast<std::size_t>(i)]));
    for (const Trajectory* traj : {&u, &v}) {
      const ElementGradient g = gradient(traj->field(i));
      for (int e = 0; e < g.num_elements(); ++e) {
        grad_radius = std::max(grad_radius, g.per_element.row(e).norm());
      }
    }
  }
  report.ratio = sup / report.initial_distance;
  report.lipschitz_estimate = estimate_local_lipschitz(nl, grad_radius + 1e-12, 4000, 0);
  double h_min = std::numeric_limits<double>::infinity();
  for (int e = 0; e < mesh->num_elements(); ++e) h_min = std::min(h_min, mesh->length(e));
  report.c_estimate = report.lipschitz_estimate * 12.0 / (h_min * h_min);
  report.exp_bound = std::exp(0.5 * scheme.final_time() * report.c_estimate);
  return report;
}

StudyReport mc_variance_study(const ProblemSetup& setup, const MomentFn& g,
                              const VarianceStudyConfig& cfg) {
  if (cfg.member_counts.size() < 2) throw ConfigError("mc_variance_study: need at least two member counts");
  for (std::size_t i = 1; i < cfg.member_counts.size(); ++i) {
    if (cfg.member_counts[i] <= cfg.member_counts[i - 1])
      throw ConfigError("mc_variance_study: member counts must be strictly increasing");
  }
  if (cfg.replicas < 8) throw ConfigError("mc_variance_study: need at least 8 replicas");

  const MeshPtr mesh = setup.make_mesh();
  const FeField u0 = setup.project_initial(mesh);
  const Mesh1D& m = *mesh;
  const double dt = setup.scheme.dt;

  // Member observable G_k = int int x . sum_c g(D u~)_c dx dt, accumulated
  // over the piecewise-constant interpolant (elementwise exact in space).
  auto member_observable = [&](const Trajectory& traj) {
    double acc = 0.0;
    for (int i = 1; i <= traj.steps(); ++i) {
      const ElementGradient grad = gradient(traj.field(i));
      double slab = 0.0;
      for (int e = 0; e < m.num_elements(); ++e) {
        const double mid = 0.5 * (m.node(e) + m.node(e + 1));
        slab += m.length(e) * mid * g(grad.per_element.row(e).transpose()).sum();
      }
      acc += dt * slab;
    }
    return acc;
  };

  StudyReport report;
  report.axis = "mc-variance";
  for (int members : cfg.member_counts) {
    std::vector<double> replica_means;
    replica_means.reserve(static_cast<std::size_t>(cfg.replicas));
    for (int r = 0; r < cfg.replicas; ++r) {
      const std::uint64_t seed_r = replica_seed(cfg.seed, static_cast<std::uint64_t>(r));
      const auto draws = draw_perturbations(mesh, members, seed_r, cfg.law, setup.components());
      double mean = 0.0;
      for (int k = 0; k < members; ++k) {
        const FeField u0k = perturb_initial(u0, draws[static_cast<std::size_t>(k)], cfg.epsilon);
        const Trajectory traj = run_trajectory(mesh, setup.nl, setup.coupling, u0k, setup.forcing, setup.scheme);
        mean += member_observable(traj);
      }
      replica_means.push_back(mean / members);
    }
    report.points.push_back(static_cast<double>(members));
    report.values.push_back(sample_variance(replica_means));
  }

  bool degenerate = false;
  for (double v : report.values) degenerate = degenerate || v <= 0.0;
  if (degenerate) {
    report.slope = 0.0;
    report.notes = "zero variance at some member count (deterministic setup)";
    report.pass = false;
  } else {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < report.points.size(); ++i) {
      lx.push_back(std::log(report.points[i]));
      ly.push_back(std::log(report.values[i]));
    }
    report.slope = fit_slope(lx, ly);
    report.pass = report.slope >= cfg.slope_lo && report.slope <= cfg.slope_hi;
    std::ostringstream os;
    os << "log-log slope " << report.slope << " target [" << cfg.slope_lo << ", " << cfg.slope_hi << "]";
    report.notes = os.str();
  }
  return report;
}

const char* to_string(StudyAxis axis) {
  switch (axis) {
    case StudyAxis::Dt: return "dt";
    case StudyAxis::MeshWidth: return "h";
    case StudyAxis::Members: return "M";
    case StudyAxis::Epsilon: return "eps";
  }
  return "?";
}

StudyReport refinement_study(const ProblemSetup& setup, const RefinementConfig& cfg) {
  if (cfg.levels < 2) throw ConfigError("refinement_study: need at least two levels");
  cfg.ensemble.validate();

  StudyReport report;
  report.axis = to_string(cfg.axis);

  // Base draws are reused across mesh levels by nodal transfer so that every
  // level sees the same random data.
  const MeshPtr base_mesh = setup.make_mesh();
  std::vector<PerturbationField> base_draws;
  if (cfg.axis == StudyAxis::MeshWidth && cfg.ensemble.epsilon > 0.0) {
    base_draws = draw_perturbations(base_mesh, cfg.ensemble.members, cfg.ensemble.seed,
                                    cfg.ensemble.law, setup.components());
  }

  std::vector<Eigen::VectorXd> level_observables;
  for (int level = 0; level < cfg.levels; ++level) {
    SchemeConfig scheme = setup.scheme;
    EnsembleConfig ens = cfg.ensemble;
    int elements = setup.elements;
    switch (cfg.axis) {
      case StudyAxis::Dt:
        scheme.dt = setup.scheme.dt / std::pow(2.0, level);
        scheme.steps = setup.scheme.steps << level;
        report.points.push_back(scheme.dt);
        break;
      case StudyAxis::MeshWidth:
        elements = setup.elements << level;
        report.points.push_back((setup.domain_right - setup.domain_left) / elements);
        break;
      case StudyAxis::Members:
        ens.members = cfg.ensemble.members << level;
        report.points.push_back(static_cast<double>(ens.members));
        break;
      case StudyAxis::Epsilon:
        ens.epsilon = cfg.ensemble.epsilon / std::pow(2.0, level);
        report.points.push_back(ens.epsilon);
        break;
    }
    const MeshPtr mesh = setup.make_mesh(elements);

    std::vector<int> records;
    for (double fr : cfg.record_fractions) {
      const double exact = fr * scheme.steps;
      const int r = static_cast<int>(std::llround(exact));
      if (std::abs(exact - r) > 1e-9)
        throw ConfigError("refinement_study: record fraction does not land on a step at every level");
      records.push_back(std::clamp(r, 0, scheme.steps));
    }
    ens.record_steps = records;
    ens.record_all = false;

    std::vector<PerturbationField> draws;
    if (cfg.axis == StudyAxis::MeshWidth && !base_draws.empty()) {
      draws.reserve(base_draws.size());
      for (const PerturbationField& d : base_draws) draws.push_back(transfer_to_mesh(d, mesh));
    } else {
      draws = draw_perturbations(mesh, ens.members, ens.seed, ens.law, setup.components());
    }

    const FeField u0 = setup.project_initial(mesh);
    const EnsembleResult result =
        run_ensemble_with(mesh, setup.nl, setup.coupling, u0, setup.forcing, scheme, ens, draws);

    std::vector<double> obs;
    std::vector<std::string> names;
    const MomentFn a_moment = [&](const Eigen::Ref<const Eigen::MatrixXd>& a) { return setup.nl.a(a); };
    for (std::size_t f = 0; f < cfg.record_fractions.size(); ++f) {
      const int r = records[f];
      const FeField mean = result.mean_field_at(r);
      for (double p : cfg.probes) {
        const Eigen::VectorXd v = mean.value(setup.domain_left + p * (setup.domain_right - setup.domain_left));
        for (int c = 0; c < setup.components(); ++c) {
          obs.push_back(v[c]);
          if (level == 0) {
            std::ostringstream os;
            os << "U(t=" << cfg.record_fractions[f] << "T, x=" << p << ")[" << c << "]";
            names.push_back(os.str());
          }
        }
      }
      // Moment of a integrated against the gradient of the fixed test field
      // w(x) = sin(pi x) in every component.
      double theta = 0.0;
      for (int e = 0; e < mesh->num_elements(); ++e) {
        const double mid = 0.5 * (mesh->node(e) + mesh->node(e + 1));
        const Eigen::MatrixXd moment = measure_moment(result.measures, a_moment, r, e);
        theta += mesh->length(e) * M_PI * std::cos(M_PI * mid) * moment.sum();
      }
      obs.push_back(theta);
      if (level == 0) {
        std::ostringstream os;
        os << "<nu,a>:Dw(t=" << cfg.record_fractions[f] << "T)";
        names.push_back(os.str());
      }
    }
    obs.push_back(max_atom_spread(result.measures));
    if (level == 0) names.push_back("atom-spread");
    if (level == 0) report.observable_names = names;

    level_observables.push_back(Eigen::Map<Eigen::VectorXd>(obs.data(), static_cast<long>(obs.size())));
    report.values.push_back(max_atom_spread(result.measures));
  }

  report.observables.resize(static_cast<long>(level_observables.size()), level_observables.front().size());
  for (std::size_t l = 0; l < level_observables.size(); ++l)
    report.observables.row(static_cast<long>(l)) = level_observables[l].transpose();

  for (std::size_t l = 0; l + 1 < level_observables.size(); ++l) {
    report.cauchy_diffs.push_back(
        (level_observables[l + 1] - level_observables[l]).cwiseAbs().maxCoeff());
  }
  report.pass = true;
  for (std::size_t k = 0; k + 1 < report.cauchy_diffs.size(); ++k) {
    if (!(report.cauchy_diffs[k + 1] <= cfg.decrease_tolerance * report.cauchy_diffs[k]))
      report.pass = false;
  }
  std::ostringstream os;
  os << "Cauchy differences:";
  for (double d : report.cauchy_diffs) os << " " << d;
  report.notes = os.str();
  return report;
}

std::vector<StudyReport> refinement_suite(const ProblemSetup& setup, const RefinementConfig& base) {
  std::vector<StudyReport> reports;
  for (StudyAxis axis : {StudyAxis::Dt, StudyAxis::Members, StudyAxis::MeshWidth, StudyAxis::Epsilon}) {
    RefinementConfig cfg = base;
    cfg.axis = axis;
    reports.push_back(refinement_study(setup, cfg));
  }
  return reports;
}

}  // namespace fbp
