#ifndef FBP_MESH_HPP
#define FBP_MESH_HPP

#include <Eigen/Dense>
#include <memory>

#include "fbp/errors.hpp"

namespace fbp {

/// 1D mesh of the interval (nodes[0], nodes[K]): strictly increasing nodes,
/// consecutive node pairs as elements, Dirichlet flags on both end nodes.
/// Immutable after construction.
class Mesh1D {
 public:
  explicit Mesh1D(Eigen::VectorXd nodes);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_elements() const { return num_nodes() - 1; }
  int num_interior() const { return num_nodes() - 2; }

  double node(int j) const { return nodes_[j]; }
  const Eigen::VectorXd& nodes() const { return nodes_; }
  double length(int e) const { return nodes_[e + 1] - nodes_[e]; }
  double left() const { return nodes_[0]; }
  double right() const { return nodes_[num_nodes() - 1]; }
  double domain_length() const { return right() - left(); }
  bool is_boundary(int j) const { return j == 0 || j == num_nodes() - 1; }

  /// Element containing x (clamped to the domain).
  int locate(double x) const;

 private:
  Eigen::VectorXd nodes_;
};

using MeshPtr = std::shared_ptr<const Mesh1D>;

inline bool same_mesh(const Mesh1D& a, const Mesh1D& b) {
  return &a == &b || (a.num_nodes() == b.num_nodes() && a.nodes() == b.nodes());
}

/// Uniform mesh with `num_elements` elements over (a, b).
MeshPtr build_uniform_mesh(int num_elements, double a, double b);

/// Mesh from an explicit node list (validated).
MeshPtr mesh_from_nodes(Eigen::VectorXd nodes);

}  // namespace fbp

#endif
