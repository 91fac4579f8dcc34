#ifndef FBP_ENSEMBLE_HPP
#define FBP_ENSEMBLE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fbp/stepper.hpp"

namespace fbp {

enum class PerturbationLaw { UniformNodal, GaussianNodal };

const char* to_string(PerturbationLaw law);
PerturbationLaw perturbation_law_from_string(const std::string& name);

/// Ensemble parameters. Member k draws its perturbation from the independent
/// stream (seed, k); identical configuration reproduces identical ensembles.
struct EnsembleConfig {
  int members = 1;
  double epsilon = 0.1;  // 0 is allowed and collapses the ensemble onto one trajectory
  std::uint64_t seed = 0;
  PerturbationLaw law = PerturbationLaw::UniformNodal;
  std::vector<int> record_steps;  // empty: the default {0, N/4, N/2, 3N/4, N}
  bool record_all = false;
  int threads = 1;

  void validate() const;
  std::vector<int> resolved_records(int total_steps) const;
};

/// A unit-ball perturbation direction: ||field||_{L2} <= 1.
struct PerturbationField {
  FeField field;
  int member = 0;
};

/// Equal-weight atom collections: for each recorded time level, M gradient
/// atoms per element and M state atoms per node.
struct MeasureSlice {
  int step = 0;
  double time = 0.0;
  std::vector<Eigen::MatrixXd> gradient_atoms;  // per element: members x m
  std::vector<Eigen::MatrixXd> state_atoms;     // per node: members x m
};

struct EmpiricalYoungMeasure {
  int members = 0;
  std::vector<MeasureSlice> slices;

  double weight() const { return 1.0 / members; }
  const MeasureSlice& slice_at_step(int step) const;  // throws DomainError on unknown sites
  bool has_step(int step) const;
};

struct MemberSummary {
  int member = 0;
  long newton_iters = 0;
  long fixed_point_iters = 0;
  double max_residual = 0.0;
  long fallback_steps = 0;
  long uncovered_elements = 0;
};

struct EnsembleResult {
  MeshPtr mesh;
  int m = 1;
  SchemeConfig scheme;
  EnsembleConfig config;
  std::vector<int> recorded_steps;
  std::vector<Eigen::MatrixXd> mean_coeffs;  // parallel to recorded_steps, fixed-order reduction
  EmpiricalYoungMeasure measures;
  std::vector<MemberSummary> member_stats;

  FeField mean_field_at(int step) const;
  long total_uncovered() const;
};

/// M independent unit-ball perturbations; draws exceeding the unit L2 ball
/// are rescaled onto it.
std::vector<PerturbationField> draw_perturbations(const MeshPtr& mesh, int members, std::uint64_t seed,
                                                  PerturbationLaw law, int components);

/// u0 + eps * perturbation (same mesh required).
FeField perturb_initial(const FeField& u0h, const PerturbationField& pert, double eps);

EnsembleResult run_ensemble(const MeshPtr& mesh, const Nonlinearity& nl, const CouplingMatrix& coupling,
                            const FeField& u0h, const Forcing& forcing, const SchemeConfig& scheme,
                            const EnsembleConfig& ens);

/// Same, with caller-supplied perturbations (permutation/coherence studies).
EnsembleResult run_ensemble_with(const MeshPtr& mesh, const Nonlinearity& nl,
                                 const CouplingMatrix& coupling, const FeField& u0h,
                                 const Forcing& forcing, const SchemeConfig& scheme,
                                 const EnsembleConfig& ens,
                                 const std::vector<PerturbationField>& perturbations);

using MomentFn = std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>&)>;

/// (1/M) sum_k g(atom_k) over the gradient atoms at (step, element).
Eigen::MatrixXd measure_moment(const EmpiricalYoungMeasure& measure, const MomentFn& g, int step,
                               int element);
/// Same over the state atoms at (step, node).
Eigen::MatrixXd state_moment(const EmpiricalYoungMeasure& measure, const MomentFn& g, int step, int node);

/// Max over recorded sites of |D(mean field) - mean(gradient atoms)|.
double gradient_consistency(const EnsembleResult& result);

double max_atom_magnitude(const EmpiricalYoungMeasure& measure);
/// Max over sites of the largest distance of an atom from the site mean.
double max_atom_spread(const EmpiricalYoungMeasure& measure);

/// Scalar law for inverse-transform sampling: either an exact atom table or
/// a right-continuous nondecreasing CDF callable with a search bracket.
struct ScalarCdf {
  std::function<double(double)> cdf;
  double bracket_lo = -1.0;
  double bracket_hi = 1.0;
  std::vector<std::pair<double, double>> atoms;  // (value, probability), exact path

  static ScalarCdf from_atoms(std::vector<std::pair<double, double>> atoms);
  static ScalarCdf from_function(std::function<double(double)> f, double lo, double hi);
};

/// Generalized inverse F^{-1}(omega) = inf{ v : F(v) >= omega }, exact for
/// atom tables, bisection to ~1e-12 otherwise. omega must lie in [0,1).
double inverse_cdf_sample(const ScalarCdf& law, double omega);

}  // namespace fbp

#endif
