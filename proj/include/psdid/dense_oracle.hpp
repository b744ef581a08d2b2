#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cstdlib>
#include <string>
#include <vector>

#include "psdid/pencil.hpp"

namespace psdid {

/// An approximate eigenpair with an S-normalized vector.
struct EigPair {
  double value = 0.0;
  Vector vector;
};

/// Full dense decomposition H U = S U diag(values), U^T S U = I, ascending.
struct OracleDecomposition {
  Vector values;
  Matrix vectors;
  bool regularized = false;

  Eigen::Index size() const { return values.size(); }

  std::vector<EigPair> pairs() const {
    std::vector<EigPair> out;
    out.reserve(static_cast<std::size_t>(values.size()));
    for (Eigen::Index k = 0; k < values.size(); ++k)
      out.push_back({values(k), vectors.col(k)});
    return out;
  }
};

inline constexpr std::size_t default_oracle_cap = 2000;

/// Oracle size cap; PSDID_ORACLE_CAP overrides the default.
inline std::size_t oracle_cap() {
  if (const char *env = std::getenv("PSDID_ORACLE_CAP")) {
    char *end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0)
      return static_cast<std::size_t>(v);
  }
  return default_oracle_cap;
}

/// Dense generalized eigendecomposition by congruence: S = L L^T,
/// C = L^{-1} H L^{-T}, C = Y diag(values) Y^T, U = L^{-T} Y.
inline OracleDecomposition dense_gev_oracle(const Pencil &p, std::size_t cap = oracle_cap()) {
  if (p.n() > cap)
    throw UsageError("dense oracle: order " + std::to_string(p.n()) +
                     " exceeds cap " + std::to_string(cap) +
                     " (set PSDID_ORACLE_CAP to raise it)");
  const Matrix h = p.h().to_dense();
  const Matrix s = p.s().to_dense();

  Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success)
    throw NumericalError("dense oracle: S is numerically indefinite");
  const Matrix l = llt.matrixL();
  const double tol = Pencil::pivot_tolerance * s.diagonal().cwiseAbs().maxCoeff();
  if ((l.diagonal().array().square() <= tol).any())
    throw NumericalError("dense oracle: Cholesky pivot of S below tolerance");

  Matrix c = llt.matrixL().solve(h);
  c = llt.matrixL().solve(c.transpose()).transpose();
  c = 0.5 * (c + c.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  if (eig.info() != Eigen::Success)
    throw NumericalError("dense oracle: symmetric eigensolver did not converge");

  OracleDecomposition out;
  out.values = eig.eigenvalues();
  out.vectors = llt.matrixU().solve(eig.eigenvectors());
  for (Eigen::Index k = 0; k < out.vectors.cols(); ++k) {
    Eigen::Index imax = 0;
    out.vectors.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, k) < 0.0)
      out.vectors.col(k) *= -1.0;
  }
  out.regularized = p.regularized();
  return out;
}

} // namespace psdid
