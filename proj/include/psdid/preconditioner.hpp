#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "psdid/dense_oracle.hpp"
#include "psdid/minres.hpp"

namespace psdid {

enum class PreconditionerKind { Identity, FixedShiftInvert, LocallyAccelerated };

inline std::string_view to_string(PreconditionerKind k) {
  switch (k) {
  case PreconditionerKind::Identity: return "identity";
  case PreconditionerKind::FixedShiftInvert: return "fixed-shift";
  case PreconditionerKind::LocallyAccelerated: return "local";
  }
  return "?";
}

/// K = I, K = (H - sigma S)^{-1}, or K = (H - lambda S)^{-1} with lambda the
/// current Ritz value. The shift-invert kinds are applied through MINRES.
struct PreconditionerSpec {
  PreconditionerKind kind = PreconditionerKind::Identity;
  double sigma = 0.0;
  MinresConfig inner{};

  static PreconditionerSpec identity() { return {}; }
  static PreconditionerSpec fixed_shift(double sigma, MinresConfig inner = {}) {
    return {PreconditionerKind::FixedShiftInvert, sigma, inner};
  }
  static PreconditionerSpec locally_accelerated(MinresConfig inner = {}) {
    return {PreconditionerKind::LocallyAccelerated, 0.0, inner};
  }
};

struct PreconditionedDirection {
  Vector direction;
  std::optional<MinresResult> inner;
  std::optional<double> shift;
};

/// p = -K r. For LocallyAccelerated the shift is `lambda`; `eta`, when given,
/// replaces the inner tolerance (clamped into the valid open interval).
inline PreconditionedDirection apply_preconditioner(const PreconditionerSpec &spec,
                                                    const Pencil &p, double lambda,
                                                    const Vector &r,
                                                    std::optional<double> eta = std::nullopt) {
  p.check_size(r, "apply_preconditioner");
  if (r.isZero(0.0))
    throw DomainError("apply_preconditioner: zero residual");
  PreconditionedDirection out;
  if (spec.kind == PreconditionerKind::Identity) {
    out.direction = -r;
    return out;
  }
  MinresConfig cfg = spec.inner;
  if (eta)
    cfg.rel_tolerance = std::clamp(*eta, 1e-16, 0.5);
  const double shift = spec.kind == PreconditionerKind::FixedShiftInvert ? spec.sigma : lambda;
  MinresResult res = minres_shifted(p, shift, -r, cfg);
  out.direction = res.solution;
  out.inner = std::move(res);
  out.shift = shift;
  return out;
}

/// Dense (H - beta S)^{-1}.
inline Matrix dense_shift_invert(const Pencil &p, double beta) {
  const Matrix a = p.h().to_dense() - beta * p.s().to_dense();
  Eigen::FullPivLU<Matrix> lu(a);
  if (!lu.isInvertible())
    throw DomainError("dense_shift_invert: H - beta S is singular at beta = " +
                      std::to_string(beta));
  return lu.inverse();
}

/// Dense form of a preconditioner spec; LocallyAccelerated uses `shift`.
inline Matrix dense_preconditioner(const PreconditionerSpec &spec, const Pencil &p,
                                   double shift = 0.0) {
  switch (spec.kind) {
  case PreconditionerKind::Identity: return Matrix::Identity(p.size(), p.size());
  case PreconditionerKind::FixedShiftInvert: return dense_shift_invert(p, spec.sigma);
  case PreconditionerKind::LocallyAccelerated: return dense_shift_invert(p, shift);
  }
  return {};
}

struct EffectivePdReport {
  bool effectively_pd = false;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  /// max/min eigenvalue of the symmetrized K^c; infinite when not positive.
  double condition = 0.0;
};

/// K^c = (U^c)^T S K S U^c with U^c = [u_i .. u_n] (i is 1-based), symmetrized.
inline Matrix complement_operator(const Matrix &k, const Pencil &p,
                                  const OracleDecomposition &oracle, std::size_t i) {
  if (i < 1 || i > static_cast<std::size_t>(oracle.size()))
    throw UsageError("target index " + std::to_string(i) + " out of range");
  if (k.rows() != p.size() || k.cols() != p.size())
    throw UsageError("preconditioner matrix has the wrong order");
  const Eigen::Index first = static_cast<Eigen::Index>(i - 1);
  const Matrix uc = oracle.vectors.rightCols(oracle.size() - first);
  const Matrix suc = p.s() * uc;
  Matrix kc = suc.transpose() * k * suc;
  return 0.5 * (kc + kc.transpose());
}

/// Effective positive definiteness of a dense K for target i: every eigenvalue
/// of the symmetrized K^c above 1e-12 * max|diag(K^c)|.
inline EffectivePdReport effective_pd_check(const Matrix &k, const Pencil &p,
                                            const OracleDecomposition &oracle,
                                            std::size_t i) {
  const Matrix kc = complement_operator(k, p, oracle, i);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(kc, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw NumericalError("effective_pd_check: eigensolver failed");
  EffectivePdReport out;
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  out.max_eigenvalue = eig.eigenvalues().maxCoeff();
  const double floor = 1e-12 * kc.diagonal().cwiseAbs().maxCoeff();
  out.effectively_pd = out.min_eigenvalue > floor;
  out.condition = out.effectively_pd ? out.max_eigenvalue / out.min_eigenvalue
                                     : std::numeric_limits<double>::infinity();
  return out;
}

inline EffectivePdReport effective_pd_check(const PreconditionerSpec &spec, const Pencil &p,
                                            std::size_t i, double shift = 0.0) {
  const OracleDecomposition oracle = dense_gev_oracle(p);
  return effective_pd_check(dense_preconditioner(spec, p, shift), p, oracle, i);
}

} // namespace psdid
