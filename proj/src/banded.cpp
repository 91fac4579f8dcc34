#include "fbp/banded.hpp"

#include <algorithm>
#include <cmath>

namespace fbp {

Eigen::VectorXd Tridiagonal::multiply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const int n = size();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double v = diag_[i] * x[i];
    if (i > 0) v += off_[i - 1] * x[i - 1];
    if (i + 1 < n) v += off_[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

double Tridiagonal::quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const int n = size();
  double q = 0.0;
  for (int i = 0; i < n; ++i) {
    q += diag_[i] * x[i] * x[i];
    if (i + 1 < n) q += 2.0 * off_[i] * x[i] * x[i + 1];
  }
  return q;
}

Eigen::MatrixXd Tridiagonal::dense() const {
  const int n = size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    d(i, i) = diag_[i];
    if (i + 1 < n) d(i, i + 1) = d(i + 1, i) = off_[i];
  }
  return d;
}

TridiagonalFactor::TridiagonalFactor(const Tridiagonal& t) {
  const int n = t.size();
  lower_.resize(n);
  pivot_.resize(n);
  upper_.resize(n);
  for (int i = 0; i < n; ++i) upper_[i] = (i + 1 < n) ? t.off(i) : 0.0;
  for (int i = 0; i < n; ++i) {
    double d = t.diag(i);
    double l = 0.0;
    if (i > 0) {
      if (pivot_[i - 1] == 0.0) throw NumericalError("TridiagonalFactor: zero pivot");
      l = t.off(i - 1) / pivot_[i - 1];
      d -= l * t.off(i - 1);
    }
    lower_[i] = l;
    pivot_[i] = d;
  }
  if (pivot_[n - 1] == 0.0) throw NumericalError("TridiagonalFactor: zero pivot");
}

Eigen::VectorXd TridiagonalFactor::solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const {
  const int n = static_cast<int>(pivot_.size());
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = rhs[i] - (i > 0 ? lower_[i] * x[i - 1] : 0.0);
  for (int i = n - 1; i >= 0; --i) x[i] = (x[i] - (i + 1 < n ? upper_[i] * x[i + 1] : 0.0)) / pivot_[i];
  return x;
}

BandedMatrix::BandedMatrix(int n, int kl, int ku) : n_(n), kl_(kl), ku_(ku) {
  if (n < 1 || kl < 0 || ku < 0) throw ConfigError("BandedMatrix: invalid shape");
  store_ = Eigen::MatrixXd::Zero(2 * kl + ku + 1, n);
}

double& BandedMatrix::at(int i, int j) {
  const int r = kl_ + ku_ + i - j;
  if (i < 0 || i >= n_ || j < 0 || j >= n_ || i - j > kl_ || j - i > ku_)
    throw DomainError("BandedMatrix::at outside band");
  return store_(r, j);
}

double BandedMatrix::at(int i, int j) const { return const_cast<BandedMatrix*>(this)->at(i, j); }

Eigen::MatrixXd BandedMatrix::dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n_, n_);
  for (int j = 0; j < n_; ++j)
    for (int i = std::max(0, j - ku_); i <= std::min(n_ - 1, j + kl_); ++i) d(i, j) = at(i, j);
  return d;
}

BandedLU::BandedLU(const BandedMatrix& a)
    : n_(a.n_), kl_(a.kl_), ku_(a.ku_), ab_(a.store_), ipiv_(Eigen::VectorXi::Zero(a.n_)) {
  // Band LU with partial pivoting; fill from pivoting widens the upper band
  // to kl + ku. Layout: ab_(kl + ku + i - j, j) holds entry (i, j).
  const int kv = kl_ + ku_;  // effective upper bandwidth after pivoting
  for (int j = 0; j < n_; ++j) {
    const int km = std::min(kl_, n_ - 1 - j);  // subdiagonal count in column j
    int jp = 0;
    double best = std::abs(ab_(kv, j));
    for (int i = 1; i <= km; ++i) {
      const double v = std::abs(ab_(kv + i, j));
      if (v > best) {
        best = v;
        jp = i;
      }
    }
    ipiv_[j] = j + jp;
    if (best == 0.0) {
      singular_ = true;
      return;
    }
    const int ju = std::min(j + kv, n_ - 1);  // last column touched by this pivot row
    if (jp != 0) {
      for (int jj = j; jj <= ju; ++jj) std::swap(ab_(kv + j + jp - jj, jj), ab_(kv + j - jj, jj));
    }
    const double pivot = ab_(kv, j);
    for (int i = 1; i <= km; ++i) ab_(kv + i, j) /= pivot;
    for (int jj = j + 1; jj <= ju; ++jj) {
      const double t = ab_(kv + j - jj, jj);
      if (t != 0.0) {
        for (int i = 1; i <= km; ++i) ab_(kv + j + i - jj, jj) -= ab_(kv + i, j) * t;
      }
    }
  }
}

Eigen::VectorXd BandedLU::solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const {
  if (singular_) throw NumericalError("BandedLU: singular matrix");
  const int kv = kl_ + ku_;
  Eigen::VectorXd x = rhs;
  for (int j = 0; j < n_; ++j) {
    if (ipiv_[j] != j) std::swap(x[j], x[ipiv_[j]]);
    const int km = std::min(kl_, n_ - 1 - j);
    for (int i = 1; i <= km; ++i) x[j + i] -= ab_(kv + i, j) * x[j];
  }
  for (int j = n_ - 1; j >= 0; --j) {
    x[j] /= ab_(kv, j);
    const int top = std::max(0, j - kv);
    for (int i = top; i < j; ++i) x[i] -= ab_(kv + i - j, j) * x[j];
  }
  return x;
}

}  // namespace fbp
