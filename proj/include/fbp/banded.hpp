#ifndef FBP_BANDED_HPP
#define FBP_BANDED_HPP

#include <Eigen/Dense>

#include "fbp/errors.hpp"

namespace fbp {

/// Symmetric tridiagonal matrix stored as three diagonals.
/// Used for the P1 mass matrix over interior nodes.
class Tridiagonal {
 public:
  Tridiagonal() = default;
  explicit Tridiagonal(int n) : diag_(Eigen::VectorXd::Zero(n)), off_(Eigen::VectorXd::Zero(n > 0 ? n - 1 : 0)) {}

  int size() const { return static_cast<int>(diag_.size()); }
  double& diag(int i) { return diag_[i]; }
  double diag(int i) const { return diag_[i]; }
  double& off(int i) { return off_[i]; }  // entry (i, i+1) == (i+1, i)
  double off(int i) const { return off_[i]; }

  Eigen::VectorXd multiply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd dense() const;

 private:
  Eigen::VectorXd diag_, off_;
};

/// LDL^T-style factorization of a symmetric tridiagonal matrix (no pivoting;
/// intended for positive definite matrices such as the mass matrix).
class TridiagonalFactor {
 public:
  explicit TridiagonalFactor(const Tridiagonal& t);
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const;

 private:
  Eigen::VectorXd lower_, pivot_, upper_;
};

/// General banded matrix with kl sub- and ku super-diagonals, stored
/// column-wise in the classic band layout with kl extra fill rows so it can
/// be factored in place with partial pivoting.
class BandedMatrix {
 public:
  BandedMatrix(int n, int kl, int ku);

  int size() const { return n_; }
  int lower_bandwidth() const { return kl_; }
  int upper_bandwidth() const { return ku_; }

  void set_zero() { store_.setZero(); }
  double& at(int i, int j);
  double at(int i, int j) const;
  void add(int i, int j, double v) { at(i, j) += v; }

  Eigen::MatrixXd dense() const;

 private:
  friend class BandedLU;
  int n_, kl_, ku_;
  Eigen::MatrixXd store_;  // (2*kl + ku + 1) x n
};

/// LU factorization with partial pivoting of a banded matrix.
class BandedLU {
 public:
  explicit BandedLU(const BandedMatrix& a);

  bool singular() const { return singular_; }
  /// Solves A x = rhs. Throws NumericalError if the factorization is singular.
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const;

 private:
  int n_, kl_, ku_;
  Eigen::MatrixXd ab_;
  Eigen::VectorXi ipiv_;
  bool singular_ = false;
};

}  // namespace fbp

#endif
