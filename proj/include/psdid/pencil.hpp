#pragma once

#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <string>

#include "psdid/error.hpp"
#include "psdid/sparse_sym_matrix.hpp"

namespace psdid {

/// The symmetric-definite pair (H, S) together with a cached sparse LDL^T
/// factorization of S. Immutable after construction.
///
/// The factorization is accepted when every pivot of D exceeds
/// 1e-14 * max|S_ii|. Otherwise S is replaced by S + 1e-14 * trace(S)/n * I,
/// refactored with strictly positive pivots required (the shift may itself
/// sit below the first threshold), and regularized() reports true; every later operation
/// (products, norms, oracle) then sees the regularized S.
class Pencil {
public:
  using Factorization =
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double, Eigen::ColMajor, int>,
                            Eigen::Lower>;

  static constexpr double pivot_tolerance = 1e-14;

  Pencil(SparseSymMatrix h, SparseSymMatrix s)
      : h_(std::move(h)), s_(std::move(s)) {
    if (h_.n() != s_.n())
      throw UsageError("pencil: H is " + std::to_string(h_.n()) + "x" +
                       std::to_string(h_.n()) + " but S is " +
                       std::to_string(s_.n()) + "x" + std::to_string(s_.n()));
    if (h_.n() == 0)
      throw UsageError("pencil: empty matrices");

    auto fact = try_factor(s_, pivot_tolerance * s_.max_abs_diagonal());
    if (!fact) {
      const double shift = pivot_tolerance * s_.trace() / static_cast<double>(s_.n());
      if (!(shift > 0.0))
        throw NumericalError("pencil: S is not positive definite (trace <= 0)");
      SparseSymMatrix::Storage reg = s_.storage();
      for (Eigen::Index i = 0; i < reg.rows(); ++i)
        reg.coeffRef(i, i) += shift;
      s_ = SparseSymMatrix(std::move(reg));
      fact = try_factor(s_, 0.0);
      if (!fact)
        throw NumericalError("pencil: S is not positive definite, even after "
                             "static regularization by " +
                             std::to_string(shift));
      regularization_ = shift;
    }
    factor_ = std::move(fact);
  }

  const SparseSymMatrix &h() const { return h_; }
  const SparseSymMatrix &s() const { return s_; }
  std::size_t n() const { return h_.n(); }
  Eigen::Index size() const { return h_.size(); }

  bool regularized() const { return regularization_ > 0.0; }
  double regularization_shift() const { return regularization_; }

  /// S^{-1} r through the cached factorization.
  Vector solve_s(const Vector &r) const {
    check_size(r, "solve_s");
    Vector x = factor_->solve(r);
    if (factor_->info() != Eigen::Success || !x.allFinite())
      throw NumericalError("S solve failed (factorization of order " +
                           std::to_string(n()) + ")");
    return x;
  }

  double s_inner(const Vector &x, const Vector &y) const {
    return x.dot(s_ * y);
  }

  double s_norm(const Vector &x) const { return std::sqrt(std::max(0.0, s_inner(x, x))); }

  void check_size(const Vector &v, const char *what) const {
    if (v.size() != size())
      throw UsageError(std::string(what) + ": vector length " +
                       std::to_string(v.size()) + " != pencil order " +
                       std::to_string(n()));
  }

private:
  static std::shared_ptr<const Factorization> try_factor(const SparseSymMatrix &s,
                                                          double tol) {
    auto f = std::make_shared<Factorization>();
    const Eigen::SparseMatrix<double, Eigen::ColMajor, int> cm = s.storage();
    f->compute(cm);
    if (f->info() != Eigen::Success)
      return nullptr;
    const Vector &d = f->vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!(d(i) > tol))
        return nullptr;
    return f;
  }

  SparseSymMatrix h_;
  SparseSymMatrix s_;
  std::shared_ptr<const Factorization> factor_;
  double regularization_ = 0.0;
};

/// rho(z) = z^T H z / z^T S z.
inline double rayleigh_quotient(const Pencil &p, const Vector &z) {
  p.check_size(z, "rayleigh_quotient");
  const double den = p.s_inner(z, z);
  if (!(den > 0.0))
    throw DomainError("rayleigh_quotient: zero vector");
  return z.dot(p.h() * z) / den;
}

/// H u - lambda S u.
inline Vector residual(const Pencil &p, double lambda, const Vector &u) {
  p.check_size(u, "residual");
  return p.h() * u - lambda * (p.s() * u);
}

/// ||Hu - lambda Su|| / (||Hu|| + |lambda| ||Su||) in the Euclidean norm.
inline double relative_residual(const Pencil &p, double lambda, const Vector &u) {
  p.check_size(u, "relative_residual");
  if (u.isZero(0.0))
    throw DomainError("relative_residual: zero vector");
  const Vector hu = p.h() * u;
  const Vector su = p.s() * u;
  const double den = hu.norm() + std::abs(lambda) * su.norm();
  if (!(den > 0.0))
    throw DomainError("relative_residual: Hu and lambda*Su both vanish");
  return (hu - lambda * su).norm() / den;
}

/// Number of eigenvalues of (H, S) below mu, from the inertia of an LDL^T
/// factorization of H - mu S (Sylvester's law). A zero pivot nudges mu up by a
/// relative 1e-12 and retries.
inline std::size_t eigenvalue_count_below(const Pencil &p, double mu) {
  using Col = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  const Col h = p.h().storage();
  const Col s = p.s().storage();
  for (int attempt = 0; attempt < 4; ++attempt) {
    const Col a = h - mu * s;
    Eigen::SimplicialLDLT<Col, Eigen::Lower> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
      const Vector &d = ldlt.vectorD();
      if (d.allFinite()) {
        std::size_t count = 0;
        for (Eigen::Index k = 0; k < d.size(); ++k)
          if (d(k) < 0.0)
            ++count;
        return count;
      }
    }
    mu += 1e-12 * std::max(1.0, std::abs(mu));
  }
  throw NumericalError("eigenvalue_count_below: H - mu S could not be factored near " +
                       std::to_string(mu));
}

/// sqrt(r^T S^{-1} r).
inline double s_inv_norm(const Pencil &p, const Vector &r) {
  const Vector y = p.solve_s(r);
  return std::sqrt(std::max(0.0, r.dot(y)));
}

} // namespace psdid
