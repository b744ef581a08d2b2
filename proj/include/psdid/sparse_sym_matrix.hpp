#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "psdid/error.hpp"

namespace psdid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;

/// Real symmetric matrix in compressed sparse row form with both triangles
/// stored. Column indices are sorted within each row and unique; entry (i,j)
/// equals entry (j,i) bit for bit.
class SparseSymMatrix {
public:
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

  enum class Triangle { Full, Lower };

  SparseSymMatrix() = default;

  /// Takes ownership of an already symmetric matrix; throws UsageError if it
  /// is not square or not exactly symmetric.
  explicit SparseSymMatrix(Storage m) : m_(std::move(m)) {
    m_.makeCompressed();
    validate();
  }

  /// Builds from triplets. Duplicates are summed (finite element assembly).
  /// With Triangle::Lower only entries with row >= col may be given and they
  /// are mirrored; with Triangle::Full both halves must be present.
  static SparseSymMatrix from_triplets(std::size_t n,
                                       const std::vector<Triplet> &entries,
                                       Triangle tri = Triangle::Full) {
    std::vector<Triplet> all;
    all.reserve(tri == Triangle::Lower ? 2 * entries.size() : entries.size());
    for (const auto &t : entries) {
      if (t.row() < 0 || t.col() < 0 || static_cast<std::size_t>(t.row()) >= n ||
          static_cast<std::size_t>(t.col()) >= n)
        throw UsageError("triplet index out of range");
      if (tri == Triangle::Lower) {
        if (t.row() < t.col())
          throw UsageError("upper-triangle triplet given with Triangle::Lower");
        all.push_back(t);
        if (t.row() != t.col())
          all.emplace_back(t.col(), t.row(), t.value());
      } else {
        all.push_back(t);
      }
    }
    Storage m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(all.begin(), all.end());
    return SparseSymMatrix(std::move(m));
  }

  /// Copies the nonzeros of a dense matrix, which must be exactly symmetric.
  static SparseSymMatrix from_dense(const Matrix &a) {
    if (a.rows() != a.cols())
      throw UsageError("from_dense: matrix is not square");
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j)
        if (a(i, j) != 0.0)
          t.emplace_back(static_cast<int>(i), static_cast<int>(j), a(i, j));
    return from_triplets(static_cast<std::size_t>(a.rows()), t);
  }

  static SparseSymMatrix diagonal(const Vector &d) {
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < d.size(); ++i)
      t.emplace_back(static_cast<int>(i), static_cast<int>(i), d(i));
    return from_triplets(static_cast<std::size_t>(d.size()), t);
  }

  static SparseSymMatrix identity(std::size_t n) {
    return diagonal(Vector::Ones(static_cast<Eigen::Index>(n)));
  }

  std::size_t n() const { return static_cast<std::size_t>(m_.rows()); }
  Eigen::Index size() const { return m_.rows(); }
  std::size_t nnz() const { return static_cast<std::size_t>(m_.nonZeros()); }
  const Storage &storage() const { return m_; }

  double coeff(Eigen::Index i, Eigen::Index j) const { return m_.coeff(i, j); }

  Vector operator*(const Vector &x) const {
    if (x.size() != m_.cols())
      throw UsageError("matrix-vector product: dimension mismatch");
    return m_ * x;
  }

  Matrix operator*(const Matrix &x) const {
    if (x.rows() != m_.cols())
      throw UsageError("matrix-matrix product: dimension mismatch");
    return m_ * x;
  }

  Matrix to_dense() const { return Matrix(m_); }

  /// Max absolute column sum.
  double norm1() const {
    Vector colsum = Vector::Zero(m_.cols());
    for (Eigen::Index r = 0; r < m_.outerSize(); ++r)
      for (Storage::InnerIterator it(m_, r); it; ++it)
        colsum(it.col()) += std::abs(it.value());
    return m_.cols() > 0 ? colsum.maxCoeff() : 0.0;
  }

  double max_abs_diagonal() const {
    double best = 0.0;
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
      best = std::max(best, std::abs(m_.coeff(i, i)));
    return best;
  }

  double trace() const {
    double t = 0.0;
    for (Eigen::Index i = 0; i < m_.rows(); ++i)
      t += m_.coeff(i, i);
    return t;
  }

  friend bool operator==(const SparseSymMatrix &a, const SparseSymMatrix &b) {
    if (a.m_.rows() != b.m_.rows() || a.m_.nonZeros() != b.m_.nonZeros())
      return false;
    const auto nnz = static_cast<std::size_t>(a.m_.nonZeros());
    const auto rows = static_cast<std::size_t>(a.m_.rows()) + 1;
    return std::equal(a.m_.outerIndexPtr(), a.m_.outerIndexPtr() + rows,
                      b.m_.outerIndexPtr()) &&
           std::equal(a.m_.innerIndexPtr(), a.m_.innerIndexPtr() + nnz,
                      b.m_.innerIndexPtr()) &&
           std::equal(a.m_.valuePtr(), a.m_.valuePtr() + nnz, b.m_.valuePtr(),
                      [](double x, double y) {
                        return std::bit_cast<std::uint64_t>(x) ==
                               std::bit_cast<std::uint64_t>(y);
                      });
  }

private:
  void validate() const {
    if (m_.rows() != m_.cols())
      throw UsageError("symmetric matrix must be square");
    for (Eigen::Index r = 0; r < m_.outerSize(); ++r) {
      int last = -1;
      for (Storage::InnerIterator it(m_, r); it; ++it) {
        if (!std::isfinite(it.value()))
          throw UsageError("non-finite entry at (" + std::to_string(r) + "," +
                           std::to_string(it.col()) + ")");
        if (it.col() <= last)
          throw UsageError("row " + std::to_string(r) +
                           " has unsorted or duplicate column indices");
        last = static_cast<int>(it.col());
      }
    }
    const Storage t = m_.transpose();
    const auto nnz = static_cast<std::size_t>(m_.nonZeros());
    const auto rows = static_cast<std::size_t>(m_.rows()) + 1;
    const bool same =
        t.nonZeros() == m_.nonZeros() &&
        std::equal(t.outerIndexPtr(), t.outerIndexPtr() + rows,
                   m_.outerIndexPtr()) &&
        std::equal(t.innerIndexPtr(), t.innerIndexPtr() + nnz,
                   m_.innerIndexPtr()) &&
        std::equal(t.valuePtr(), t.valuePtr() + nnz, m_.valuePtr());
    if (!same)
      throw UsageError("matrix is not exactly symmetric");
  }

  Storage m_;
};

} // namespace psdid
