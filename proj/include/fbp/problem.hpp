#ifndef FBP_PROBLEM_HPP
#define FBP_PROBLEM_HPP

#include "fbp/ensemble.hpp"
#include "fbp/stepper.hpp"

namespace fbp {

/// A complete scenario: model data plus base discretization. Meshes and
/// projected initial data are derived on demand so studies can rebuild them
/// at other resolutions.
struct ProblemSetup {
  Nonlinearity nl;
  CouplingMatrix coupling;
  SpatialFunction initial;
  Forcing forcing;
  double domain_left = 0.0;
  double domain_right = 1.0;
  int elements = 32;
  SchemeConfig scheme;

  int components() const { return nl.m; }
  MeshPtr make_mesh() const { return build_uniform_mesh(elements, domain_left, domain_right); }
  MeshPtr make_mesh(int k) const { return build_uniform_mesh(k, domain_left, domain_right); }
  FeField project_initial(const MeshPtr& mesh) const { return l2_project(mesh, initial, 2); }

  Trajectory run(const MeshPtr& mesh) const {
    return run_trajectory(mesh, nl, coupling, project_initial(mesh), forcing, scheme);
  }
};

}  // namespace fbp

#endif
