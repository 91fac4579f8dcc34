#include "fbp/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "fbp/rng.hpp"

namespace fbp {

const char* to_string(PerturbationLaw law) {
  return law == PerturbationLaw::UniformNodal ? "uniform-nodal" : "gaussian-nodal";
}

PerturbationLaw perturbation_law_from_string(const std::string& name) {
  if (name == "uniform-nodal") return PerturbationLaw::UniformNodal;
  if (name == "gaussian-nodal") return PerturbationLaw::GaussianNodal;
  throw ConfigError("unknown perturbation law '" + name + "'");
}

void EnsembleConfig::validate() const {
  if (members < 1) throw ConfigError("EnsembleConfig: need at least one member");
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ConfigError("EnsembleConfig: epsilon must lie in [0, 1]");
  if (threads < 1) throw ConfigError("EnsembleConfig: thread count must be positive");
}

std::vector<int> EnsembleConfig::resolved_records(int total_steps) const {
  std::vector<int> records;
  if (record_all) {
    records.resize(static_cast<std::size_t>(total_steps) + 1);
    for (int i = 0; i <= total_steps; ++i) records[static_cast<std::size_t>(i)] = i;
    return records;
  }
  if (record_steps.empty()) {
    records = {0, total_steps / 4, total_steps / 2, 3 * total_steps / 4, total_steps};
  } else {
    records = record_steps;
  }
  std::sort(records.begin(), records.end());
  records.erase(std::unique(records.begin(), records.end()), records.end());
  for (int r : records) {
    if (r < 0 || r > total_steps) throw ConfigError("EnsembleConfig: record step outside trajectory");
  }
  return records;
}

const MeasureSlice& EmpiricalYoungMeasure::slice_at_step(int step) const {
  for (const MeasureSlice& s : slices) {
    if (s.step == step) return s;
  }
  throw DomainError("EmpiricalYoungMeasure: step " + std::to_string(step) + " was not recorded");
}

bool EmpiricalYoungMeasure::has_step(int step) const {
  for (const MeasureSlice& s : slices)
    if (s.step == step) return true;
  return false;
}

FeField EnsembleResult::mean_field_at(int step) const {
  for (std::size_t i = 0; i < recorded_steps.size(); ++i) {
    if (recorded_steps[i] == step) return FeField(mesh, mean_coeffs[i]);
  }
  throw DomainError("EnsembleResult: step " + std::to_string(step) + " was not recorded");
}

long EnsembleResult::total_uncovered() const {
  long total = 0;
  for (const MemberSummary& s : member_stats) total += s.uncovered_elements;
  return total;
}

std::vector<PerturbationField> draw_perturbations(const MeshPtr& mesh, int members, std::uint64_t seed,
                                                  PerturbationLaw law, int components) {
  if (members < 1) throw ConfigError("draw_perturbations: need at least one member");
  const Tridiagonal mass = assemble_mass_matrix(*mesh);
  std::vector<PerturbationField> fields;
  fields.reserve(static_cast<std::size_t>(members));
  for (int k = 0; k < members; ++k) {
    Rng rng = member_stream(seed, static_cast<std::uint64_t>(k));
    Eigen::MatrixXd coeffs(mesh->num_interior(), components);
    for (int j = 0; j < coeffs.rows(); ++j) {
      for (int c = 0; c < components; ++c) {
        coeffs(j, c) = law == PerturbationLaw::UniformNodal ? rng.uniform(-1.0, 1.0) : rng.normal();
      }
    }
    double norm2 = 0.0;
    for (int c = 0; c < components; ++c) norm2 += mass.quadratic_form(coeffs.col(c));
    const double norm = std::sqrt(std::max(0.0, norm2));
    if (norm > 1.0) coeffs /= norm;
    fields.push_back({FeField(mesh, std::move(coeffs)), k});
  }
  return fields;
}

FeField perturb_initial(const FeField& u0h, const PerturbationField& pert, double eps) {
  if (!same_mesh(*u0h.mesh(), *pert.field.mesh()))
    throw ConfigError("perturb_initial: perturbation lives on a different mesh");
  if (u0h.components() != pert.field.components())
    throw ConfigError("perturb_initial: component mismatch");
  return FeField(u0h.mesh(), u0h.coeffs() + eps * pert.field.coeffs());
}

namespace {

struct MemberRecord {
  std::vector<Eigen::MatrixXd> snapshots;  // at recorded steps
  MemberSummary summary;
};

MemberRecord run_member(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                        const FeField& u0k, const Forcing& forcing, const SchemeConfig& scheme,
                        const std::vector<int>& records, int member) {
  Trajectory traj;
  try {
    traj = run_trajectory(mesh, nl, coupling, u0k, forcing, scheme);
  } catch (const NonConvergence& e) {
    throw NonConvergence("ensemble member " + std::to_string(member) + ": " + e.what(), e.residual,
                         e.iterations, e.step_index);
  }
  MemberRecord rec;
  rec.snapshots.reserve(records.size());
  for (int r : records) rec.snapshots.push_back(traj.snapshots[static_cast<std::size_t>(r)]);
  rec.summary.member = member;
  for (const StepStats& s : traj.stats) {
    rec.summary.newton_iters += s.newton_iters;
    rec.summary.fixed_point_iters += s.fixed_point_iters;
    rec.summary.max_residual = std::max(rec.summary.max_residual, s.residual);
    rec.summary.fallback_steps += s.used_fallback ? 1 : 0;
    rec.summary.uncovered_elements += s.uncovered_elements;
  }
  return rec;
}

}  // namespace

EnsembleResult run_ensemble_with(const MeshPtr& mesh, const Nonlinearity& nl,
                                 const CouplingMatrix& coupling, const FeField& u0h,
                                 const Forcing& forcing, const SchemeConfig& scheme,
                                 const EnsembleConfig& ens,
                                 const std::vector<PerturbationField>& perturbations) {
  scheme.validate();
  ens.validate();
  if (static_cast<int>(perturbations.size()) != ens.members)
    throw ConfigError("run_ensemble_with: perturbation count differs from member count");
  const std::vector<int> records = ens.resolved_records(scheme.steps);

  const int m = nl.m;
  const int n_members = ens.members;
  std::vector<MemberRecord> recs(static_cast<std::size_t>(n_members));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_members));

  auto work = [&](int k) {
    try {
      const FeField u0k = perturb_initial(u0h, perturbations[static_cast<std::size_t>(k)], ens.epsilon);
      recs[static_cast<std::size_t>(k)] =
          run_member(mesh, nl, coupling, u0k, forcing, scheme, records, k);
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  };

  const int threads = std::min(ens.threads, n_members);
  if (threads <= 1) {
    for (int k = 0; k < n_members; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t]() {
        for (int k = t; k < n_members; k += threads) work(k);
      });
    }
    for (std::thread& th : pool) th.join();
  }
  for (int k = 0; k < n_members; ++k) {
    if (errors[static_cast<std::size_t>(k)]) std::rethrow_exception(errors[static_cast<std::size_t>(k)]);
  }

  // Fixed member-order reduction: results do not depend on scheduling.
  EnsembleResult result;
  result.mesh = mesh;
  result.m = m;
  result.scheme = scheme;
  result.config = ens;
  result.recorded_steps = records;
  result.measures.members = n_members;

  const int n_elem = mesh->num_elements();
  const int n_nodes = mesh->num_nodes();
  const int n_interior = mesh->num_interior();
  for (std::size_t r = 0; r < records.size(); ++r) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(n_interior, m);
    for (int k = 0; k < n_members; ++k) mean += recs[static_cast<std::size_t>(k)].snapshots[r];
    mean /= static_cast<double>(n_members);
    result.mean_coeffs.push_back(std::move(mean));

    MeasureSlice slice;
    slice.step = records[r];
    slice.time = scheme.dt * records[r];
    slice.gradient_atoms.assign(static_cast<std::size_t>(n_elem), Eigen::MatrixXd(n_members, m));
    slice.state_atoms.assign(static_cast<std::size_t>(n_nodes), Eigen::MatrixXd(n_members, m));
    for (int k = 0; k < n_members; ++k) {
      const FeField uk(mesh, recs[static_cast<std::size_t>(k)].snapshots[r]);
      const ElementGradient g = gradient(uk);
      for (int e = 0; e < n_elem; ++e) slice.gradient_atoms[static_cast<std::size_t>(e)].row(k) = g.per_element.row(e);
      for (int j = 0; j < n_nodes; ++j) {
        for (int c = 0; c < m; ++c) slice.state_atoms[static_cast<std::size_t>(j)](k, c) = uk.node_value(j, c);
      }
    }
    result.measures.slices.push_back(std::move(slice));
  }
  result.member_stats.reserve(static_cast<std::size_t>(n_members));
  for (int k = 0; k < n_members; ++k) result.member_stats.push_back(recs[static_cast<std::size_t>(k)].summary);
  return result;
}

EnsembleResult run_ensemble(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                            const FeField& u0h, const Forcing& forcing, const SchemeConfig& scheme,
                            const EnsembleConfig& ens) {
  ens.validate();
  const std::vector<PerturbationField> draws =
      draw_perturbations(mesh, ens.members, ens.seed, ens.law, nl.m);
  return run_ensemble_with(mesh, nl, coupling, u0h, forcing, scheme, ens, draws);
}

Eigen::MatrixXd measure_moment(const EmpiricalYoungMeasure& measure, const MomentFn& g, int step,
                               int element) {
  const MeasureSlice& slice = measure.slice_at_step(step);
  if (element < 0 || element >= static_cast<int>(slice.gradient_atoms.size()))
    throw DomainError("measure_moment: element index out of range");
  const Eigen::MatrixXd& atoms = slice.gradient_atoms[static_cast<std::size_t>(element)];
  Eigen::MatrixXd acc;
  for (int k = 0; k < atoms.rows(); ++k) {
    const Eigen::MatrixXd value = g(atoms.row(k).transpose());
    if (k == 0) {
      acc = value;
    } else {
      acc += value;
    }
  }
  return acc / static_cast<double>(atoms.rows());
}

Eigen::MatrixXd state_moment(const EmpiricalYoungMeasure& measure, const MomentFn& g, int step, int node) {
  const MeasureSlice& slice = measure.slice_at_step(step);
  if (node < 0 || node >= static_cast<int>(slice.state_atoms.size()))
    throw DomainError("state_moment: node index out of range");
  const Eigen::MatrixXd& atoms = slice.state_atoms[static_cast<std::size_t>(node)];
  Eigen::MatrixXd acc;
  for (int k = 0; k < atoms.rows(); ++k) {
    const Eigen::MatrixXd value = g(atoms.row(k).transpose());
    if (k == 0) {
      acc = value;
    } else {
      acc += value;
    }
  }
  return acc / static_cast<double>(atoms.rows());
}

double gradient_consistency(const EnsembleResult& result) {
  double worst = 0.0;
  for (std::size_t r = 0; r < result.recorded_steps.size(); ++r) {
    const FeField mean(result.mesh, result.mean_coeffs[r]);
    const ElementGradient mean_grad = gradient(mean);
    const MeasureSlice& slice = result.measures.slices[r];
    for (int e = 0; e < mean_grad.num_elements(); ++e) {
      const Eigen::MatrixXd& atoms = slice.gradient_atoms[static_cast<std::size_t>(e)];
      Eigen::RowVectorXd atom_mean = Eigen::RowVectorXd::Zero(result.m);
      for (int k = 0; k < atoms.rows(); ++k) atom_mean += atoms.row(k);
      atom_mean /= static_cast<double>(atoms.rows());
      worst = std::max(worst, (atom_mean - mean_grad.per_element.row(e)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double max_atom_magnitude(const EmpiricalYoungMeasure& measure) {
  double worst = 0.0;
  for (const MeasureSlice& slice : measure.slices) {
    for (const Eigen::MatrixXd& atoms : slice.gradient_atoms) {
      worst = std::max(worst, atoms.cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

double max_atom_spread(const EmpiricalYoungMeasure& measure) {
  double worst = 0.0;
  for (const MeasureSlice& slice : measure.slices) {
    for (const Eigen::MatrixXd& atoms : slice.gradient_atoms) {
      const Eigen::RowVectorXd mean = atoms.colwise().mean();
      for (int k = 0; k < atoms.rows(); ++k) {
        worst = std::max(worst, (atoms.row(k) - mean).norm());
      }
    }
  }
  return worst;
}

ScalarCdf ScalarCdf::from_atoms(std::vector<std::pair<double, double>> atoms) {
  if (atoms.empty()) throw ConfigError("ScalarCdf: empty atom table");
  std::sort(atoms.begin(), atoms.end());
  double total = 0.0;
  for (const auto& [v, p] : atoms) {
    if (p < 0.0) throw ConfigError("ScalarCdf: negative atom weight");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("ScalarCdf: atom weights must sum to one");
  ScalarCdf law;
  law.atoms = std::move(atoms);
  law.cdf = [table = law.atoms](double v) {
    double acc = 0.0;
    for (const auto& [value, prob] : table) {
      if (value <= v) acc += prob;
    }
    return acc;
  };
  return law;
}

ScalarCdf ScalarCdf::from_function(std::function<double(double)> f, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("ScalarCdf: invalid bracket");
  ScalarCdf law;
  law.cdf = std::move(f);
  law.bracket_lo = lo;
  law.bracket_hi = hi;
  return law;
}

double inverse_cdf_sample(const ScalarCdf& law, double omega) {
  if (!(omega >= 0.0 && omega < 1.0)) throw DomainError("inverse_cdf_sample: omega outside [0,1)");
  if (!law.atoms.empty()) {
    // First atom (ascending) whose cumulative weight reaches omega; zero-weight
    // atoms never form the support.
    double acc = 0.0;
    for (const auto& [value, prob] : law.atoms) {
      acc += prob;
      if (acc > 0.0 && acc >= omega) return value;
    }
    return law.atoms.back().first;
  }
  if (omega == 0.0) omega = std::numeric_limits<double>::min();
  double lo = law.bracket_lo, hi = law.bracket_hi;
  double width = hi - lo;
  while (law.cdf(lo) >= omega && std::isfinite(lo)) {
    lo -= width;
    width *= 2.0;
  }
  width = hi - lo;
  while (law.cdf(hi) < omega && std::isfinite(hi)) {
    hi += width;
    width *= 2.0;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (law.cdf(mid) >= omega) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace fbp
