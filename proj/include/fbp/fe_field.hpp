#ifndef FBP_FE_FIELD_HPP
#define FBP_FE_FIELD_HPP

#include <Eigen/Dense>
#include <functional>
#include <utility>

#include "fbp/banded.hpp"
#include "fbp/mesh.hpp"

namespace fbp {

/// m-component function of x alone (initial data, time-averaged forcing, ...).
struct SpatialFunction {
  int m = 1;
  std::function<Eigen::VectorXd(double)> eval;

  static SpatialFunction zero(int m) {
    return {m, [m](double) { return Eigen::VectorXd::Zero(m).eval(); }};
  }
  static SpatialFunction constant(Eigen::VectorXd v) {
    const int m = static_cast<int>(v.size());
    return {m, [v = std::move(v)](double) { return v; }};
  }
};

/// m-component continuous piecewise-linear function with homogeneous
/// Dirichlet boundary values. Coefficients are stored per interior node
/// (column c = component c); evaluation at the boundary returns zero.
class FeField {
 public:
  FeField() = default;
  FeField(MeshPtr mesh, int components)
      : mesh_(std::move(mesh)), coeffs_(Eigen::MatrixXd::Zero(mesh_->num_interior(), components)) {}
  FeField(MeshPtr mesh, Eigen::MatrixXd coeffs) : mesh_(std::move(mesh)), coeffs_(std::move(coeffs)) {
    if (coeffs_.rows() != mesh_->num_interior()) throw ConfigError("FeField: coefficient/mesh mismatch");
  }

  const MeshPtr& mesh() const { return mesh_; }
  int components() const { return static_cast<int>(coeffs_.cols()); }
  Eigen::MatrixXd& coeffs() { return coeffs_; }
  const Eigen::MatrixXd& coeffs() const { return coeffs_; }

  /// Value of component c at mesh node j (zero on the boundary).
  double node_value(int j, int c) const {
    if (mesh_->is_boundary(j)) return 0.0;
    return coeffs_(j - 1, c);
  }

  /// Pointwise evaluation; x is clamped to the domain.
  Eigen::VectorXd value(double x) const;

  SpatialFunction as_function() const;

 private:
  MeshPtr mesh_;
  Eigen::MatrixXd coeffs_;
};

/// Per-element gradient of a P1 field: constant on each element. Row e holds
/// the m gradient components on element e (units: field units per length).
struct ElementGradient {
  Eigen::MatrixXd per_element;  // num_elements x m

  int num_elements() const { return static_cast<int>(per_element.rows()); }
  int components() const { return static_cast<int>(per_element.cols()); }
};

/// Mass matrix over interior nodes: symmetric positive definite tridiagonal.
Tridiagonal assemble_mass_matrix(const Mesh1D& mesh);

/// Load vector b(j,c) = integral of f_c * hat_j, by per-element Gauss quadrature.
Eigen::MatrixXd assemble_load(const Mesh1D& mesh, const SpatialFunction& f, int quad_points = 2);

/// L2-orthogonal projection of f onto the P1 space with zero boundary values.
FeField l2_project(const MeshPtr& mesh, const SpatialFunction& f, int quad_points = 2);

ElementGradient gradient(const FeField& field);

double l2_inner(const FeField& a, const FeField& b);
double l2_norm(const FeField& a);

/// Same inner product on raw coefficient blocks (columns = components).
double l2_inner_coeffs(const Tridiagonal& mass, const Eigen::Ref<const Eigen::MatrixXd>& a,
                       const Eigen::Ref<const Eigen::MatrixXd>& b);

}  // namespace fbp

#endif
