#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "psdid/pencil.hpp"

namespace psdid {

enum class MinresPreconditioner { None, SInverse };

struct MinresConfig {
  /// Stop once ||(H - lambda S) x - rhs|| <= rel_tolerance * ||rhs|| (2-norm).
  double rel_tolerance = 1e-2;
  std::size_t max_iterations = 200;
  MinresPreconditioner preconditioner = MinresPreconditioner::SInverse;

  void validate() const {
    if (!(rel_tolerance > 0.0 && rel_tolerance < 1.0))
      throw UsageError("minres: tolerance must lie in (0, 1), got " +
                       std::to_string(rel_tolerance));
    if (max_iterations < 1)
      throw UsageError("minres: max_iterations must be >= 1");
  }
};

struct MinresResult {
  Vector solution;
  std::size_t iterations = 0;
  /// ||(H - lambda S) x - rhs|| / ||rhs|| of the returned solution.
  double achieved_relres = 1.0;
  bool converged = false;
  /// Preconditioned residual norm estimate, one entry per iteration plus the
  /// initial value; non-increasing.
  std::vector<double> preconditioned_residuals;
};

/// Preconditioned MINRES (Paige-Saunders recurrences) for (H - lambda S) x = rhs
/// from x0 = 0. The operator may be indefinite. The preconditioner, when
/// SInverse, is the exact S^{-1} from the pencil's factorization.
inline MinresResult minres_shifted(const Pencil &p, double lambda, const Vector &rhs,
                                   const MinresConfig &cfg) {
  cfg.validate();
  p.check_size(rhs, "minres_shifted");
  if (!std::isfinite(lambda))
    throw UsageError("minres_shifted: non-finite shift");
  const double rhs_norm = rhs.norm();
  if (!(rhs_norm > 0.0))
    throw DomainError("minres_shifted: zero right-hand side");

  const auto op = [&](const Vector &v) -> Vector { return p.h() * v - lambda * (p.s() * v); };
  const auto prec = [&](const Vector &v) -> Vector {
    return cfg.preconditioner == MinresPreconditioner::SInverse ? p.solve_s(v) : v;
  };
  const auto true_relres = [&](const Vector &x) { return (op(x) - rhs).norm() / rhs_norm; };
  constexpr double eps = std::numeric_limits<double>::epsilon();

  MinresResult out;
  out.solution = Vector::Zero(rhs.size());

  Vector r1 = rhs;
  Vector y = prec(r1);
  const double beta1_sq = r1.dot(y);
  if (!(beta1_sq > 0.0))
    throw NumericalError("minres: preconditioner is not positive definite on rhs");
  const double beta1 = std::sqrt(beta1_sq);
  out.preconditioned_residuals.push_back(beta1);

  Vector r2 = r1;
  Vector w = Vector::Zero(rhs.size());
  Vector w1 = w, w2 = w;
  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0;
  double phibar = beta1, cs = -1.0, sn = 0.0;
  double anorm = 0.0;

  for (std::size_t k = 1; k <= cfg.max_iterations; ++k) {
    const Vector v = y / beta;
    y = op(v);
    if (k >= 2)
      y -= (beta / oldb) * r1;
    const double alfa = v.dot(y);
    y -= (alfa / beta) * r2;
    r1 = r2;
    r2 = y;
    y = prec(r2);
    oldb = beta;
    const double beta_sq = r2.dot(y);
    if (!std::isfinite(alfa) || !std::isfinite(beta_sq))
      throw NumericalError("minres: non-finite value at Lanczos step " + std::to_string(k));
    beta = std::sqrt(std::max(0.0, beta_sq));
    anorm = std::max(anorm, std::sqrt(alfa * alfa + beta * beta + oldb * oldb));

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double gamma = std::hypot(gbar, beta);
    // projected operator singular: the Krylov space holds a null vector
    const bool singular = gamma <= eps * anorm;
    if (singular) {
      out.iterations = k;
      break;
    }
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    out.solution += phi * w;
    if (!out.solution.allFinite())
      throw NumericalError("minres: non-finite iterate at Lanczos step " + std::to_string(k));
    out.preconditioned_residuals.push_back(std::abs(phibar));
    out.iterations = k;

    out.achieved_relres = true_relres(out.solution);
    if (out.achieved_relres <= cfg.rel_tolerance) {
      out.converged = true;
      return out;
    }
    // happy breakdown, measured in the preconditioner's norm of rhs
    if (beta < 1e-14 * beta1)
      break;
  }
  out.achieved_relres = true_relres(out.solution);
  out.converged = out.achieved_relres <= cfg.rel_tolerance;
  return out;
}

} // namespace psdid
