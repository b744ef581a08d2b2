#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <vector>

#include "psdid/pencil.hpp"

namespace psdid {

/// Projected solve could not produce the requested pairs.
class BreakdownError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

template <typename T>
struct SymmetricEigenT {
  Eigen::Matrix<T, Eigen::Dynamic, 1> values;              // ascending
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> vectors; // orthonormal columns
};

using SymmetricEigen = SymmetricEigenT<double>;

/// Cyclic Jacobi eigensolver for a small dense symmetric matrix. Ties in the
/// final ascending sort keep the original diagonal order.
template <typename T>
SymmetricEigenT<T> jacobi_eigen(Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> a,
                                int max_sweeps = 64) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  if (a.rows() != a.cols())
    throw UsageError("jacobi_eigen: matrix is not square");
  const Eigen::Index n = a.rows();
  Mat v = Mat::Identity(n, n);
  const T scale = a.norm();
  const T tiny = std::numeric_limits<T>::epsilon() * T(1e-3);
  for (int sweep = 0; sweep < max_sweeps && n > 1; ++sweep) {
    T off = 0;
    for (Eigen::Index q = 1; q < n; ++q)
      for (Eigen::Index r = 0; r < q; ++r)
        off += a(r, q) * a(r, q);
    if (off == T(0) || std::sqrt(off) <= tiny * scale)
      break;
    for (Eigen::Index r = 0; r < n - 1; ++r) {
      for (Eigen::Index q = r + 1; q < n; ++q) {
        const T arq = a(r, q);
        if (arq == T(0))
          continue;
        const T theta = (a(q, q) - a(r, r)) / (T(2) * arq);
        const T t = (theta >= T(0) ? T(1) : T(-1)) /
                    (std::abs(theta) + std::sqrt(theta * theta + T(1)));
        const T c = T(1) / std::sqrt(t * t + T(1));
        const T s = t * c;
        const T tau = s / (T(1) + c);
        const T shift = t * arq;
        a(r, r) -= shift;
        a(q, q) += shift;
        a(r, q) = a(q, r) = T(0);
        for (Eigen::Index k = 0; k < n; ++k) {
          if (k == r || k == q)
            continue;
          const T g = a(k, r), h = a(k, q);
          a(k, r) = a(r, k) = g - s * (h + g * tau);
          a(k, q) = a(q, k) = h + s * (g - h * tau);
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const T g = v(k, r), h = v(k, q);
          v(k, r) = g - s * (h + g * tau);
          v(k, q) = h + s * (g - h * tau);
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
  SymmetricEigenT<T> out{Eigen::Matrix<T, Eigen::Dynamic, 1>(n), Mat(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

struct OrthonormalBasis {
  Matrix q;                      // S-orthonormal columns
  std::vector<Eigen::Index> kept; // source column of each basis vector
};

/// Modified Gram-Schmidt in the S inner product with one reorthogonalization
/// pass. A column whose S-norm after orthogonalization falls below
/// drop_tolerance times its original S-norm is dropped.
inline OrthonormalBasis s_orthonormalize(const Pencil &p, const Matrix &z,
                                         double drop_tolerance = 1e-10) {
  if (z.rows() != p.size())
    throw UsageError("s_orthonormalize: basis has the wrong row count");
  OrthonormalBasis out{Matrix(z.rows(), z.cols()), {}};
  Matrix sq(z.rows(), z.cols());
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    Vector x = z.col(c);
    const double n0 = p.s_norm(x);
    if (!(n0 > 0.0) || !std::isfinite(n0))
      continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index b = 0; b < k; ++b)
        x -= sq.col(b).dot(x) * out.q.col(b);
    const Vector sx = p.s() * x;
    const double nx = std::sqrt(std::max(0.0, x.dot(sx)));
    if (!(nx > drop_tolerance * n0))
      continue;
    out.q.col(k) = x / nx;
    sq.col(k) = sx / nx;
    out.kept.push_back(c);
    ++k;
  }
  out.q.conservativeResize(Eigen::NoChange, k);
  return out;
}

struct RitzPairs {
  Vector values;  // ascending
  Matrix vectors; // S-normalized Ritz vectors, one per value
  Matrix coefficients; // Ritz vectors in the Gram-Schmidt basis of span(Z)
  Eigen::Index basis_rank = 0;
};

/// Ritz pairs of (H, S) on span(Z) with the first `locked` columns of Z held
/// fixed: the projection is taken on the S-orthogonal complement of those
/// columns inside span(Z), so the returned vectors are S-orthogonal to them to
/// rounding. Returns `want` pairs plus up to `more` further ones as the rank
/// allows. With locked = 0 this is the plain Rayleigh-Ritz procedure.
inline RitzPairs rayleigh_ritz_locked(const Pencil &p, const Matrix &z, Eigen::Index locked,
                                      Eigen::Index want, Eigen::Index more = 0) {
  if (want < 1)
    throw UsageError("rayleigh_ritz: want must be >= 1");
  if (locked < 0 || locked > z.cols())
    throw UsageError("rayleigh_ritz: locked column count out of range");
  if (z.cols() - locked < want)
    throw UsageError("rayleigh_ritz: basis has fewer columns than wanted pairs");
  const OrthonormalBasis basis = s_orthonormalize(p, z);
  Eigen::Index kept_locked = 0;
  while (kept_locked < static_cast<Eigen::Index>(basis.kept.size()) &&
         basis.kept[static_cast<std::size_t>(kept_locked)] < locked)
    ++kept_locked;
  if (kept_locked != locked)
    throw BreakdownError("rayleigh_ritz: locked columns are linearly dependent");
  const Matrix q = basis.q.rightCols(basis.q.cols() - locked);
  const Eigen::Index rank = q.cols();
  if (rank < want)
    throw BreakdownError("rayleigh_ritz: basis rank " + std::to_string(rank) +
                         " below the " + std::to_string(want) + " wanted pairs");
  // Q is S-orthonormal only up to the rounding of the Gram-Schmidt sweep,
  // which grows with cond(S); the Cholesky factor of the Gram matrix restores
  // exact S-orthonormal coordinates. Projections are accumulated in extended
  // precision: vectors of ill-conditioned pencils carry large near-null
  // components, and double rounding of u^T H u would then exceed the
  // decrease of late iterations.
  using Ext = long double;
  using MatExt = Eigen::Matrix<Ext, Eigen::Dynamic, Eigen::Dynamic>;
  const MatExt qx = q.cast<Ext>();
  const MatExt hq = p.h().storage().cast<Ext>() * qx;
  const MatExt sq = p.s().storage().cast<Ext>() * qx;
  MatExt gram = qx.transpose() * sq;
  gram = (Ext(0.5) * (gram + gram.transpose())).eval();
  const Eigen::LLT<MatExt> llt(gram);
  if (llt.info() != Eigen::Success)
    throw BreakdownError("rayleigh_ritz: projected S is not positive definite");
  MatExt hr = qx.transpose() * hq;
  hr = llt.matrixL().solve(hr);
  hr = llt.matrixL().solve(MatExt(hr.transpose())).transpose();
  hr = (Ext(0.5) * (hr + hr.transpose())).eval();
  if (!hr.allFinite())
    throw BreakdownError("rayleigh_ritz: non-finite projected matrix");
  const SymmetricEigenT<Ext> eig = jacobi_eigen<Ext>(hr);
  const Eigen::Index count = std::min(rank, want + std::max<Eigen::Index>(more, 0));
  RitzPairs out;
  out.basis_rank = rank;
  out.values = eig.values.head(count).template cast<double>();
  const MatExt coeff = llt.matrixU().solve(MatExt(eig.vectors.leftCols(count)));
  out.coefficients = coeff.cast<double>();
  out.vectors = (qx * coeff).cast<double>();
  for (Eigen::Index k = 0; k < count; ++k) {
    const double nk = p.s_norm(out.vectors.col(k));
    if (!(nk > 0.0))
      throw BreakdownError("rayleigh_ritz: zero Ritz vector");
    out.vectors.col(k) /= nk;
  }
  return out;
}

inline RitzPairs rayleigh_ritz(const Pencil &p, const Matrix &z, Eigen::Index want,
                               Eigen::Index more = 0) {
  return rayleigh_ritz_locked(p, z, 0, want, more);
}

} // namespace psdid
