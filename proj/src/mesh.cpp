#include "fbp/mesh.hpp"

#include <algorithm>

namespace fbp {

Mesh1D::Mesh1D(Eigen::VectorXd nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 3) throw ConfigError("Mesh1D: need at least 2 elements");
  for (int i = 0; i + 1 < num_nodes(); ++i) {
    if (!(nodes_[i] < nodes_[i + 1])) throw ConfigError("Mesh1D: nodes must be strictly increasing");
  }
}

int Mesh1D::locate(double x) const {
  if (x <= left()) return 0;
  if (x >= right()) return num_elements() - 1;
  const double* begin = nodes_.data();
  const double* end = begin + nodes_.size();
  int e = static_cast<int>(std::upper_bound(begin, end, x) - begin) - 1;
  return std::clamp(e, 0, num_elements() - 1);
}

MeshPtr build_uniform_mesh(int num_elements, double a, double b) {
  if (num_elements < 2) throw ConfigError("build_uniform_mesh: need at least 2 elements");
  if (!(a < b)) throw ConfigError("build_uniform_mesh: empty interval");
  Eigen::VectorXd nodes(num_elements + 1);
  for (int j = 0; j <= num_elements; ++j) {
    nodes[j] = a + (b - a) * (static_cast<double>(j) / num_elements);
  }
  nodes[num_elements] = b;
  return std::make_shared<Mesh1D>(std::move(nodes));
}

MeshPtr mesh_from_nodes(Eigen::VectorXd nodes) { return std::make_shared<Mesh1D>(std::move(nodes)); }

}  // namespace fbp
