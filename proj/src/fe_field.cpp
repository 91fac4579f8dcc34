#include "fbp/fe_field.hpp"

#include "fbp/quadrature.hpp"

namespace fbp {

Eigen::VectorXd FeField::value(double x) const {
  const int e = mesh_->locate(x);
  const double xl = mesh_->node(e), xr = mesh_->node(e + 1);
  const double s = (x - xl) / (xr - xl);
  Eigen::VectorXd v(components());
  for (int c = 0; c < components(); ++c) {
    v[c] = (1.0 - s) * node_value(e, c) + s * node_value(e + 1, c);
  }
  return v;
}

SpatialFunction FeField::as_function() const {
  FeField copy = *this;
  return {components(), [copy = std::move(copy)](double x) { return copy.value(x); }};
}

Tridiagonal assemble_mass_matrix(const Mesh1D& mesh) {
  const int n = mesh.num_interior();
  Tridiagonal m(n);
  // One element contributes h/3 to each endpoint diagonal and h/6 across.
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double h = mesh.length(e);
    const int jl = e, jr = e + 1;  // global node ids
    if (!mesh.is_boundary(jl)) m.diag(jl - 1) += h / 3.0;
    if (!mesh.is_boundary(jr)) m.diag(jr - 1) += h / 3.0;
    if (!mesh.is_boundary(jl) && !mesh.is_boundary(jr)) m.off(jl - 1) += h / 6.0;
  }
  return m;
}

Eigen::MatrixXd assemble_load(const Mesh1D& mesh, const SpatialFunction& f, int quad_points) {
  const GaussRule rule = gauss_rule(quad_points);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(mesh.num_interior(), f.m);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double xl = mesh.node(e), h = mesh.length(e);
    for (int q = 0; q < rule.n; ++q) {
      const double s = rule.points[static_cast<std::size_t>(q)];
      const double w = rule.weights[static_cast<std::size_t>(q)] * h;
      const Eigen::VectorXd fv = f.eval(xl + s * h);
      if (!mesh.is_boundary(e)) b.row(e - 1) += w * (1.0 - s) * fv.transpose();
      if (!mesh.is_boundary(e + 1)) b.row(e) += w * s * fv.transpose();
    }
  }
  return b;
}

FeField l2_project(const MeshPtr& mesh, const SpatialFunction& f, int quad_points) {
  const Eigen::MatrixXd b = assemble_load(*mesh, f, quad_points);
  const TridiagonalFactor factor(assemble_mass_matrix(*mesh));
  Eigen::MatrixXd coeffs(mesh->num_interior(), f.m);
  for (int c = 0; c < f.m; ++c) coeffs.col(c) = factor.solve(b.col(c));
  return FeField(mesh, std::move(coeffs));
}

ElementGradient gradient(const FeField& field) {
  const Mesh1D& mesh = *field.mesh();
  ElementGradient g;
  g.per_element.resize(mesh.num_elements(), field.components());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double inv_h = 1.0 / mesh.length(e);
    for (int c = 0; c < field.components(); ++c) {
      g.per_element(e, c) = (field.node_value(e + 1, c) - field.node_value(e, c)) * inv_h;
    }
  }
  return g;
}

double l2_inner_coeffs(const Tridiagonal& mass, const Eigen::Ref<const Eigen::MatrixXd>& a,
                       const Eigen::Ref<const Eigen::MatrixXd>& b) {
  double v = 0.0;
  for (int c = 0; c < a.cols(); ++c) v += b.col(c).dot(mass.multiply(a.col(c)));
  return v;
}

double l2_inner(const FeField& a, const FeField& b) {
  if (!same_mesh(*a.mesh(), *b.mesh())) throw ConfigError("l2_inner: fields live on different meshes");
  const Tridiagonal mass = assemble_mass_matrix(*a.mesh());
  return l2_inner_coeffs(mass, a.coeffs(), b.coeffs());
}

double l2_norm(const FeField& a) {
  const Tridiagonal mass = assemble_mass_matrix(*a.mesh());
  double q = 0.0;
  for (int c = 0; c < a.components(); ++c) q += mass.quadratic_form(a.coeffs().col(c));
  return std::sqrt(std::max(0.0, q));
}

}  // namespace fbp
