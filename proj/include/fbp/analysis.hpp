#ifndef FBP_ANALYSIS_HPP
#define FBP_ANALYSIS_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fbp/ensemble.hpp"
#include "fbp/problem.hpp"
#include "fbp/stepper.hpp"

namespace fbp {

/// Per-step terms of the discrete energy inequality
///   ||u_i||^2 + sum ||u_l - u_{l-1}||^2 + 2 dt sum (a(Du_l), Du_l)
///     <= ||u_0||^2 + 2 sum (int_slab F, u_l) + eps_solver,
/// checked at every prefix. The solver slack makes the check falsifiable
/// despite inexact nonlinear solves; the formula used is recorded.
struct EnergyLedger {
  struct Entry {
    double kinetic = 0.0;      // ||u_i||^2
    double increment = 0.0;    // ||u_i - u_{i-1}||^2
    double dissipation = 0.0;  // 2 dt int a(Du_i) : Du_i
    double work = 0.0;         // 2 int (int_slab F) . u_i
    double lhs = 0.0;          // running left side through step i
    double rhs = 0.0;          // running right side through step i
  };
  std::vector<Entry> entries;
  double epsilon_solver = 0.0;
  std::string slack_formula;
  double min_dissipation = 0.0;  // most negative dissipation entry
  double max_violation = 0.0;    // max over prefixes of lhs - rhs
  bool pass = false;
};

EnergyLedger energy_ledger(const Trajectory& traj, const Nonlinearity& nl, const Forcing& forcing);

/// Space-time P1 test field: hat at an interior mesh node times hat at a time
/// grid node (vanishing at t = T), acting on one solution component.
struct TestFieldSpec {
  int component = 0;
  int space_node = 1;  // global node index, interior
  int time_node = 0;   // in [0, steps-1]
};

std::vector<TestFieldSpec> default_test_family(const Mesh1D& mesh, int steps, int components,
                                               int stride = 4);

/// Integral of the scheme's space-time form against each test field. For an
/// ensemble the flux is replaced by the measure moment <nu, a> and the state
/// by the mean field; this requires the involved steps to be recorded.
std::vector<double> weak_residual(const Trajectory& traj, const Nonlinearity& nl,
                                  const CouplingMatrix& coupling, const Forcing& forcing,
                                  const std::vector<TestFieldSpec>& tests);
std::vector<double> weak_residual(const EnsembleResult& result, const Nonlinearity& nl,
                                  const CouplingMatrix& coupling, const Forcing& forcing,
                                  const std::vector<TestFieldSpec>& tests);

/// Both sides of the time-interpolant gap identity
///   ||u_dt - u~_dt||^2_{L2(Q_T)} = (dt/3) sum_i ||u_i - u_{i-1}||^2,
/// the left side evaluated by quadrature on the two interpolants.
struct InterpolantGap {
  double quadrature_value = 0.0;
  double sum_value = 0.0;
  double relative_gap() const;
};
InterpolantGap interpolant_gap(const Trajectory& traj);

struct ContinuousDependenceReport {
  double initial_distance = 0.0;
  double ratio = 0.0;  // sup_t ||u(t) - v(t)|| / ||u0 - v0||
  double lipschitz_estimate = 0.0;
  double c_estimate = 0.0;  // lipschitz * 12 / h^2
  double exp_bound = 0.0;   // e^{T C / 2}
};

/// Runs the same scheme from two initial fields and reports the growth ratio;
/// identical initial data is rejected.
ContinuousDependenceReport continuous_dependence(const MeshPtr& mesh, const Nonlinearity& nl,
                                                 const CouplingMatrix& coupling, const Forcing& forcing,
                                                 const SchemeConfig& scheme, const FeField& u0,
                                                 const FeField& v0);

struct StudyReport {
  std::string axis;
  std::vector<double> points;            // axis values per level
  std::vector<double> values;            // scalar per level (variance, spread, ...)
  Eigen::MatrixXd observables;           // level x observable table (refinement)
  std::vector<std::string> observable_names;
  std::vector<double> cauchy_diffs;      // sup-norm differences between consecutive levels
  double slope = 0.0;                    // fitted log-log slope where applicable
  bool pass = false;
  std::string notes;
};

struct VarianceStudyConfig {
  std::vector<int> member_counts{16, 64, 256};
  int replicas = 16;
  double epsilon = 0.1;
  PerturbationLaw law = PerturbationLaw::UniformNodal;
  std::uint64_t seed = 1;
  double slope_lo = -1.3;
  double slope_hi = -0.7;
};

/// Sample variance across independent replicas of the weighted space-time
/// moment Y = int int x . sum_c g(D u~)_c dx dt, for each member count; the
/// weight keeps the first moment nondegenerate under homogeneous Dirichlet
/// data (the unweighted gradient integral telescopes to zero).
StudyReport mc_variance_study(const ProblemSetup& setup, const MomentFn& g,
                              const VarianceStudyConfig& cfg);

enum class StudyAxis { Dt, MeshWidth, Members, Epsilon };
const char* to_string(StudyAxis axis);

struct RefinementConfig {
  StudyAxis axis = StudyAxis::Dt;
  int levels = 3;  // at least 2
  EnsembleConfig ensemble;
  std::vector<double> probes{0.25, 0.5, 0.75};
  std::vector<double> record_fractions{0.25, 0.5, 0.75, 1.0};
  double decrease_tolerance = 1.0;  // d_{k+1} <= tol * d_k
};

/// Halves dt, doubles the mesh, doubles M, or halves epsilon per level with
/// everything else fixed, and reports Cauchy differences of probe and moment
/// observables between consecutive levels. Mesh refinements reuse the base
/// draws by nodal transfer so levels share the same random data.
StudyReport refinement_study(const ProblemSetup& setup, const RefinementConfig& cfg);

/// All four axes in the canonical limit order dt -> M -> h -> eps.
std::vector<StudyReport> refinement_suite(const ProblemSetup& setup, const RefinementConfig& base);

}  // namespace fbp

#endif
