#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "psdid/dense_oracle.hpp"
#include "psdid/preconditioner.hpp"
#include "psdid/solver.hpp"

namespace psdid {

// Oracle-scale evaluation of the convergence bounds. Every function takes an
// exact dense preconditioner K; the MINRES-approximate production directions
// do not satisfy the hypotheses and are checked end to end only.

/// Eigenvalue differences below this are not resolved by a double precision
/// dense oracle (PUFE eigenvalues agree with a 40-digit reference to ~1e-13).
inline double eigen_resolution(double lambda_i) {
  return 1e-12 * std::max(1.0, std::abs(lambda_i));
}

namespace detail {

inline Eigen::Index target_column(const OracleDecomposition &o, std::size_t i) {
  if (i < 1 || i > static_cast<std::size_t>(o.size()))
    throw UsageError("target index " + std::to_string(i) + " out of range 1.." +
                     std::to_string(o.size()));
  return static_cast<Eigen::Index>(i - 1);
}

inline Vector symmetric_eigenvalues(const Matrix &a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success)
    throw NumericalError("analysis: symmetric eigensolver failed");
  return eig.eigenvalues();
}

inline double spectral_norm_sym(const Matrix &a) {
  const Vector ev = symmetric_eigenvalues(a);
  return std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// per-step decrease lower bound

struct DecreaseBound {
  double bound = 0.0;
  double g = 0.0;     // (lambda_n - lambda_i) / 2
  double phi = 0.0;   // ||r||_{S^-1} / kappa(K^c)
  double kappa = 1.0; // condition number of K^c
};

/// sqrt(g^2 + phi^2) - g from its ingredients, evaluated as
/// phi^2 / (sqrt(g^2 + phi^2) + g) to avoid cancellation.
inline DecreaseBound decrease_bound(double g, double r_s_inv_norm, double kappa) {
  if (!(g >= 0.0) || !(r_s_inv_norm >= 0.0) || !(kappa >= 1.0))
    throw UsageError("decrease_bound: need g >= 0, ||r|| >= 0 and kappa >= 1");
  DecreaseBound out;
  out.g = g;
  out.kappa = kappa;
  out.phi = r_s_inv_norm / kappa;
  const double root = std::hypot(g, out.phi);
  out.bound = root + g > 0.0 ? out.phi * out.phi / (root + g) : 0.0;
  return out;
}

/// Bound for target i with K applied exactly. K must be effectively positive
/// definite for the target.
inline DecreaseBound decrease_bound(const Pencil &p, const OracleDecomposition &o, std::size_t i,
                                  double r_s_inv_norm, const Matrix &k) {
  const Eigen::Index c = detail::target_column(o, i);
  const EffectivePdReport pd = effective_pd_check(k, p, o, i);
  if (!pd.effectively_pd)
    throw DomainError("decrease_bound: preconditioner is not effectively positive definite "
                      "for target " + std::to_string(i) + " (smallest eigenvalue of K^c " +
                      shortest_decimal(pd.min_eigenvalue) + ")");
  const double g = 0.5 * (o.values(o.size() - 1) - o.values(c));
  return decrease_bound(g, r_s_inv_norm, pd.condition);
}

// ---------------------------------------------------------------------------
// rate quantities

struct SymmetricSqrt {
  Matrix root;
  /// Some eigenvalues of S were raised to 1e-14 * lambda_max before rooting.
  bool floored = false;
};

/// S^{1/2} from the spectral decomposition of S.
inline SymmetricSqrt symmetric_sqrt(const Matrix &s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success)
    throw NumericalError("symmetric_sqrt: eigensolver failed");
  Vector d = eig.eigenvalues();
  const double top = d.maxCoeff();
  if (!(top > 0.0))
    throw DomainError("symmetric_sqrt: matrix has no positive eigenvalue");
  const double floor = 1e-14 * top;
  SymmetricSqrt out;
  for (Eigen::Index k = 0; k < d.size(); ++k)
    if (d(k) < floor) {
      d(k) = floor;
      out.floored = true;
    }
  out.root = eig.eigenvectors() * d.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  out.root = 0.5 * (out.root + out.root.transpose()).eval();
  return out;
}

/// M = P^T (H - lambda_i S) P with P = I - U_{i-1} U_{i-1}^T S, formed directly
/// from H and S.
inline Matrix deflated_operator(const Pencil &p, const OracleDecomposition &o, std::size_t i) {
  const Eigen::Index c = detail::target_column(o, i);
  const Matrix s = p.s().to_dense();
  const Matrix u = o.vectors.leftCols(c);
  const Matrix proj = Matrix::Identity(p.size(), p.size()) - u * (u.transpose() * s);
  const Matrix a = p.h().to_dense() - o.values(c) * s;
  Matrix m = proj.transpose() * a * proj;
  return 0.5 * (m + m.transpose());
}

/// G = S U_i^c (Lambda_i^c - lambda_i I)^{1/2} with U_i^c = [u_{i+1} .. u_n],
/// so that M = G G^T.
inline Matrix deflated_factor(const Pencil &p, const OracleDecomposition &o, std::size_t i) {
  const Eigen::Index c = detail::target_column(o, i);
  const Eigen::Index rest = o.size() - c - 1;
  if (rest < 1)
    throw UsageError("deflated_factor: target " + std::to_string(i) +
                     " is the largest eigenvalue; no complement");
  const Matrix uc = o.vectors.rightCols(rest);
  Vector w = (o.values.tail(rest).array() - o.values(c)).matrix();
  w = w.cwiseMax(0.0).cwiseSqrt();
  return (p.s() * uc) * w.asDiagonal();
}

struct RateQuantities {
  double theta = 0.0;   // ||S^{1/2} K M K S^{1/2}||
  double delta = 0.0;   // ||S^{1/2} K S^{1/2}||
  double Gamma = 0.0;   // largest positive eigenvalue of K M
  double gamma = 0.0;   // smallest positive eigenvalue of K M
  double Delta = 0.0;   // (Gamma - gamma) / (Gamma + gamma)
  double tau = 0.0;     // 2 / (Gamma + gamma)
  double epsilon = 0.0; // lambda_{i;j} - lambda_i
  /// tau (sqrt(theta eps) + delta eps); the rate bound applies when < 1.
  double localized_lhs = 0.0;
  bool applicable = false;
  /// [(Delta + tau sqrt(theta eps)) / (1 - localized_lhs)]^2 when applicable.
  double bound_factor = std::numeric_limits<double>::infinity();
  bool sqrt_floored = false;
};

/// Dense evaluation for target i at Ritz value lambda_ij with K applied exactly.
/// Gamma and gamma come from G^T K G, whose spectrum is the nonzero part of
/// that of K M.
inline RateQuantities rate_quantities(const Pencil &p, const OracleDecomposition &o,
                                      std::size_t i, double lambda_ij, const Matrix &k) {
  const Eigen::Index c = detail::target_column(o, i);
  if (k.rows() != p.size() || k.cols() != p.size())
    throw UsageError("rate_quantities: preconditioner matrix has the wrong order");
  const double li = o.values(c);
  if (lambda_ij < li - eigen_resolution(li))
    throw DomainError("rate_quantities: Ritz value " + shortest_decimal(lambda_ij) +
                      " lies below lambda_" + std::to_string(i) + " = " + shortest_decimal(li));
  RateQuantities q;
  q.epsilon = std::max(0.0, lambda_ij - li);

  const Matrix g = deflated_factor(p, o, i);
  const Vector gkg = detail::symmetric_eigenvalues(g.transpose() * k * g);
  q.gamma = gkg.minCoeff();
  q.Gamma = gkg.maxCoeff();
  if (!(q.gamma > 0.0))
    throw DomainError("rate_quantities: G^T K G is not positive definite; K is not "
                      "effectively positive definite for target " + std::to_string(i));

  const SymmetricSqrt root = symmetric_sqrt(p.s().to_dense());
  q.sqrt_floored = root.floored;
  const Matrix m = g * g.transpose();
  const Matrix sk = root.root * k;
  q.theta = detail::spectral_norm_sym(sk * m * sk.transpose());
  q.delta = detail::spectral_norm_sym(sk * root.root);

  q.Delta = (q.Gamma - q.gamma) / (q.Gamma + q.gamma);
  q.tau = 2.0 / (q.Gamma + q.gamma);
  const double ste = std::sqrt(q.theta * q.epsilon);
  q.localized_lhs = q.tau * (ste + q.delta * q.epsilon);
  q.applicable = q.localized_lhs < 1.0;
  if (q.applicable) {
    const double f = (q.Delta + q.tau * ste) / (1.0 - q.localized_lhs);
    q.bound_factor = f * f;
  }
  return q;
}

/// Closed forms of theta, delta, Gamma, gamma for K = (H - beta S)^{-1} with
/// beta below lambda_i, valid when beta is close enough to lambda_i that the
/// extremes are attained at lambda_i and lambda_{i+1}.
inline RateQuantities shift_invert_closed_forms(const Vector &values, std::size_t i, double beta) {
  if (i < 1 || i >= static_cast<std::size_t>(values.size()))
    throw UsageError("shift_invert_closed_forms: need 1 <= i < n");
  const Eigen::Index c = static_cast<Eigen::Index>(i - 1);
  const double li = values(c), lnext = values(c + 1), ln = values(values.size() - 1);
  if (!(beta < li))
    throw DomainError("shift_invert_closed_forms: beta must lie below lambda_i");
  RateQuantities q;
  q.theta = (lnext - li) / ((lnext - beta) * (lnext - beta));
  q.delta = 1.0 / (li - beta);
  q.Gamma = (ln - li) / (ln - beta);
  q.gamma = (lnext - li) / (lnext - beta);
  q.Delta = (q.Gamma - q.gamma) / (q.Gamma + q.gamma);
  q.tau = 2.0 / (q.Gamma + q.gamma);
  return q;
}

// ---------------------------------------------------------------------------
// spectrum of K M

struct KmSpectrum {
  std::size_t zero_count = 0;
  std::size_t positive_count = 0;
  std::size_t other_count = 0; // negative or complex beyond tolerance
  double Gamma = 0.0;
  double smallest_positive = 0.0;
  double max_imag = 0.0;
  /// max |sorted nonzero eigenvalues of K M - eigenvalues of G^T K G| / Gamma
  double factor_mismatch = 0.0;
};

/// Eigenvalues of K M from a general (nonsymmetric) eigensolve of the product,
/// M formed directly. Zeros are |mu| <= zero_tol * Gamma, Gamma being the
/// largest real part.
inline KmSpectrum km_spectrum(const Pencil &p, const OracleDecomposition &o, std::size_t i,
                              const Matrix &k, double zero_tol = 1e-10) {
  const Matrix km = k * deflated_operator(p, o, i);
  Eigen::EigenSolver<Matrix> eig(km, false);
  if (eig.info() != Eigen::Success)
    throw NumericalError("km_spectrum: eigensolver failed");
  const Eigen::VectorXcd ev = eig.eigenvalues();
  KmSpectrum out;
  out.Gamma = ev.real().maxCoeff();
  const double zt = zero_tol * std::abs(out.Gamma);
  std::vector<double> nonzero;
  out.smallest_positive = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < ev.size(); ++t) {
    const std::complex<double> mu = ev(t);
    if (std::abs(mu) <= zt) {
      ++out.zero_count;
      continue;
    }
    out.max_imag = std::max(out.max_imag, std::abs(mu.imag()));
    if (mu.real() > 0.0 && std::abs(mu.imag()) <= zt) {
      ++out.positive_count;
      out.smallest_positive = std::min(out.smallest_positive, mu.real());
      nonzero.push_back(mu.real());
    } else {
      ++out.other_count;
    }
  }
  const Eigen::Index rest = o.size() - static_cast<Eigen::Index>(i);
  if (rest > 0 && static_cast<Eigen::Index>(nonzero.size()) == rest) {
    const Matrix g = deflated_factor(p, o, i);
    const Vector gkg = detail::symmetric_eigenvalues(g.transpose() * k * g);
    std::sort(nonzero.begin(), nonzero.end());
    for (Eigen::Index t = 0; t < rest; ++t)
      out.factor_mismatch = std::max(
          out.factor_mismatch, std::abs(nonzero[static_cast<std::size_t>(t)] - gkg(t)));
    out.factor_mismatch /= std::abs(out.Gamma);
  } else {
    out.factor_mismatch = std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Smallest eigenvalue of M relative to ||M||; M is positive semi-definite.
inline double deflated_operator_min_relative(const Pencil &p, const OracleDecomposition &o,
                                             std::size_t i) {
  const Vector ev = detail::symmetric_eigenvalues(deflated_operator(p, o, i));
  const double scale = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  return scale > 0.0 ? ev.minCoeff() / scale : 0.0;
}

// ---------------------------------------------------------------------------
// per-step verification over a history

/// The exact K used for the step that produced `produced`, or none when the
/// step was not an exact dense application.
using ExactPreconditionerLookup = std::function<std::optional<Matrix>(const IterateState &produced)>;

enum class StepVerdict { Holds, Violated, Skipped };

inline std::string_view to_string(StepVerdict v) {
  switch (v) {
  case StepVerdict::Holds: return "holds";
  case StepVerdict::Violated: return "violated";
  case StepVerdict::Skipped: return "skipped";
  }
  return "?";
}

struct DecreaseStepReport {
  std::size_t j = 0; // step j -> j+1
  double decrease = 0.0;
  double bound = 0.0;
  StepVerdict verdict = StepVerdict::Skipped;
  std::string note;
};

struct RateStepReport {
  std::size_t j = 0;
  double epsilon = 0.0;
  double next_epsilon = 0.0;
  double bound_factor = 0.0;
  double localized_lhs = 0.0;
  /// (bound_factor * epsilon - next_epsilon) / (bound_factor * epsilon)
  double margin = 0.0;
  StepVerdict verdict = StepVerdict::Skipped;
  std::string note;
};

template <typename Step>
std::size_t count_verdict(const std::vector<Step> &steps, StepVerdict v) {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [&](const Step &s) { return s.verdict == v; }));
}

/// Realized decrease against the per-step lower bound, tolerance 1e-10 |lambda_{i;j}|.
inline std::vector<DecreaseStepReport>
verify_decrease_bound(const Pencil &p, const OracleDecomposition &o,
                      const ConvergenceHistory &h, const ExactPreconditionerLookup &lookup,
                      double rel_tol = 1e-10) {
  std::vector<DecreaseStepReport> out;
  for (std::size_t t = 0; t + 1 < h.iterates.size(); ++t) {
    const IterateState &cur = h.iterates[t];
    const IterateState &next = h.iterates[t + 1];
    DecreaseStepReport rep;
    rep.j = cur.j;
    rep.decrease = cur.lambda - next.lambda;
    const std::optional<Matrix> k = lookup(next);
    if (!k) {
      rep.note = "inexact preconditioner application";
    } else if (!(cur.r_s_inv_norm > 0.0)) {
      rep.note = "zero residual";
    } else {
      try {
        rep.bound = decrease_bound(p, o, h.i, cur.r_s_inv_norm, *k).bound;
        const bool ok = rep.decrease >= rep.bound - rel_tol * std::abs(cur.lambda);
        rep.verdict = ok ? StepVerdict::Holds : StepVerdict::Violated;
      } catch (const DomainError &e) {
        rep.note = e.what();
      }
    }
    out.push_back(std::move(rep));
  }
  return out;
}

/// Rate bound eps_{j+1} <= factor * eps_j * (1 + rel_slack) at every step where
/// it applies. Errors below the oracle resolution are not compared: a step is
/// skipped when eps_j is unresolved, and an unresolved eps_{j+1} counts as zero.
inline std::vector<RateStepReport>
verify_rate_bound(const Pencil &p, const OracleDecomposition &o, const ConvergenceHistory &h,
                  const ExactPreconditionerLookup &lookup, double rel_slack = 1e-8) {
  const Eigen::Index c = detail::target_column(o, h.i);
  const double li = o.values(c);
  const double res = eigen_resolution(li);
  std::vector<RateStepReport> out;
  for (std::size_t t = 0; t + 1 < h.iterates.size(); ++t) {
    const IterateState &cur = h.iterates[t];
    const IterateState &next = h.iterates[t + 1];
    RateStepReport rep;
    rep.j = cur.j;
    rep.epsilon = cur.lambda - li;
    rep.next_epsilon = next.lambda - li;
    const std::optional<Matrix> k = lookup(next);
    if (!k) {
      rep.note = "inexact preconditioner application";
    } else if (rep.epsilon <= res) {
      rep.note = "error below oracle resolution";
    } else if (c + 1 < o.size() && cur.lambda >= o.values(c + 1)) {
      rep.note = "Ritz value not below lambda_{i+1}";
    } else {
      try {
        const RateQuantities q = rate_quantities(p, o, h.i, cur.lambda, *k);
        rep.localized_lhs = q.localized_lhs;
        if (!q.applicable) {
          rep.note = "not localized: tau (sqrt(theta eps) + delta eps) >= 1";
        } else {
          rep.bound_factor = q.bound_factor;
          const double rhs = q.bound_factor * rep.epsilon;
          const double measured = rep.next_epsilon <= res ? 0.0 : rep.next_epsilon;
          rep.margin = rhs > 0.0 ? (rhs - measured) / rhs : 0.0;
          rep.verdict =
              measured <= rhs * (1.0 + rel_slack) ? StepVerdict::Holds : StepVerdict::Violated;
        }
      } catch (const DomainError &e) {
        rep.note = e.what();
      }
    }
    out.push_back(std::move(rep));
  }
  return out;
}

// ---------------------------------------------------------------------------
// shift with the infimum constant

struct ShiftStep {
  std::size_t j = 0;
  double lambda = 0.0;
  double epsilon = 0.0;
  bool localized = false;
  /// lambda_i < lambda_{i;j} < lambda_{i+1} with the error resolved.
  bool in_interval = false;
  double kato_lhs = 0.0; // (lambda_{i;j} - lambda_i)(lambda_{i+1} - lambda_{i;j})
  double kato_rhs = 0.0; // ||r||^2_{S^-1}
  StepVerdict kato = StepVerdict::Skipped;
  double c = 0.0;        // running infimum up to this step
  double beta = 0.0;     // lambda_{i;j} - c ||r||_{S^-1}
  double Delta_ij = 0.0; // (lambda_{i;j} - lambda_i) / (lambda_{i+1} - lambda_{i;j})
  /// c > 3 sqrt(Delta_ij) and 0 < Delta_ij < min(Delta_i^2 / 4, 0.1)
  bool conditions = false;
  StepVerdict beta_below = StepVerdict::Skipped;
  /// Delta + tau sqrt(theta eps) from the closed forms, when conditions hold.
  std::optional<double> rate_term;
  /// (lambda_i - beta) / (2 (lambda_{i+1} - lambda_i)) + sqrt(Delta_ij)
  std::optional<double> rate_term_bound;
  std::string note;
};

struct ShiftReport {
  std::size_t i = 1;
  double Delta_i = 0.0; // (lambda_i - lambda_{i-1}) / (lambda_{i+1} - lambda_i)
  double c = 0.0;       // final running infimum
  std::vector<ShiftStep> steps;
  std::size_t kato_violations = 0;
  std::size_t beta_violations = 0;
  /// Strict decrease of Delta + tau sqrt(theta eps) over the last three
  /// localized steps where the conditions hold; empty if fewer exist.
  std::optional<bool> rate_term_decreasing;
  /// Strict decrease of |beta - lambda_i| over the last three localized steps.
  std::optional<bool> beta_converging;
};

/// Ratio sqrt((lambda_{i;k} - lambda_i)(lambda_{i+1} - lambda_{i;k})) / ||r_{i;k}||.
inline double shift_constant_term(double lambda_ik, double li, double lnext, double r_norm) {
  return std::sqrt((lambda_ik - li) * (lnext - lambda_ik)) / r_norm;
}

namespace detail {

inline std::optional<bool> strictly_decreasing_tail(const std::vector<double> &v,
                                                    std::size_t count = 3) {
  if (v.size() < count)
    return std::nullopt;
  for (std::size_t t = v.size() - count + 1; t < v.size(); ++t)
    if (!(v[t] < v[t - 1]))
      return false;
  return true;
}

} // namespace detail

/// Kato-Temple inequality, the shift beta with the running-infimum constant c,
/// and the limits of beta and of the rate term over a history. Kato-Temple is
/// compared with an absolute slack of the oracle resolution times the gap.
inline ShiftReport shift_analysis(const OracleDecomposition &o, const ConvergenceHistory &h) {
  const Eigen::Index c = detail::target_column(o, h.i);
  if (c + 1 >= o.size())
    throw UsageError("shift_analysis: target has no larger eigenvalue");
  const double li = o.values(c), lnext = o.values(c + 1);
  const double lower = c > 0 ? o.values(c - 1) : -std::numeric_limits<double>::infinity();
  const double res = eigen_resolution(li);
  const double gap = lnext - li;
  ShiftReport out;
  out.i = h.i;
  out.Delta_i = c > 0 ? (li - lower) / gap : std::numeric_limits<double>::infinity();
  double running = std::numeric_limits<double>::infinity();
  std::vector<double> rate_terms, beta_gaps;
  for (const IterateState &s : h.iterates) {
    ShiftStep st;
    st.j = s.j;
    st.lambda = s.lambda;
    st.epsilon = s.lambda - li;
    st.localized = s.localized;
    st.kato_rhs = s.r_s_inv_norm * s.r_s_inv_norm;
    st.in_interval = st.epsilon > res && s.lambda < lnext;
    if (!st.in_interval) {
      st.note = st.epsilon <= res ? "error below oracle resolution"
                                  : "Ritz value not below lambda_{i+1}";
      out.steps.push_back(std::move(st));
      continue;
    }
    st.kato_lhs = st.epsilon * (lnext - s.lambda);
    st.kato = st.kato_lhs <= st.kato_rhs + res * gap ? StepVerdict::Holds : StepVerdict::Violated;
    if (st.kato == StepVerdict::Violated)
      ++out.kato_violations;
    if (s.r_s_inv_norm > 0.0)
      running = std::min(running, shift_constant_term(s.lambda, li, lnext, s.r_s_inv_norm));
    st.c = running;
    st.beta = s.lambda - running * s.r_s_inv_norm;
    st.Delta_ij = st.epsilon / (lnext - s.lambda);
    const double cap = std::min(out.Delta_i * out.Delta_i / 4.0, 0.1);
    st.conditions = std::isfinite(running) && running > 3.0 * std::sqrt(st.Delta_ij) &&
                    st.Delta_ij > 0.0 && st.Delta_ij < cap;
    if (st.conditions) {
      st.beta_below = st.beta < li ? StepVerdict::Holds : StepVerdict::Violated;
      if (st.beta_below == StepVerdict::Violated)
        ++out.beta_violations;
      else {
        const RateQuantities q = shift_invert_closed_forms(o.values, h.i, st.beta);
        st.rate_term = q.Delta + q.tau * std::sqrt(q.theta * st.epsilon);
        st.rate_term_bound = (li - st.beta) / (2.0 * gap) + std::sqrt(st.Delta_ij);
      }
    }
    if (st.localized) {
      if (st.rate_term)
        rate_terms.push_back(*st.rate_term);
      if (std::isfinite(running))
        beta_gaps.push_back(std::abs(st.beta - li));
    }
    out.steps.push_back(std::move(st));
  }
  out.c = running;
  out.rate_term_decreasing = detail::strictly_decreasing_tail(rate_terms);
  out.beta_converging = detail::strictly_decreasing_tail(beta_gaps);
  return out;
}

// ---------------------------------------------------------------------------
// ideal direction

struct IdealDirection {
  Vector xi;               // U^T S (u + p)
  double tail_ratio = 0.0; // ||xi_{i+1:n}|| / |xi_i|
  /// False when xi_i vanishes and the ratio carries no information.
  bool informative = true;
};

inline IdealDirection ideal_direction_diagnostic(const Pencil &p, const OracleDecomposition &o,
                                                 std::size_t i, const Vector &u,
                                                 const Vector &dir) {
  const Eigen::Index c = detail::target_column(o, i);
  p.check_size(u, "ideal_direction_diagnostic");
  p.check_size(dir, "ideal_direction_diagnostic");
  IdealDirection out;
  out.xi = o.vectors.transpose() * (p.s() * Vector(u + dir));
  const double head = std::abs(out.xi(c));
  const double tail = out.xi.tail(o.size() - c - 1).norm();
  out.informative = head > 1e-14 * out.xi.norm() && head > 0.0;
  out.tail_ratio = out.informative ? tail / head : std::numeric_limits<double>::infinity();
  return out;
}

// ---------------------------------------------------------------------------
// exact dense harness

/// Preconditioner families applied exactly (dense) by the harness.
///  FixedShift:   K = (H - sigma S)^{-1}, sigma below lambda_1 (SPD).
///  TargetShift:  K = (H - sigma_i S)^{-1}, sigma_i midway between lambda_{i-1}
///                and lambda_i: indefinite for i > 1 but effectively positive
///                definite for target i.
///  Identity:     K = I.
///  Matrix:       a caller-supplied fixed K.
///  Accelerated:  FixedShift until the shift conditions hold, then
///                K = (H - beta S)^{-1} with beta from the running-infimum constant.
enum class ExactKind { FixedShift, TargetShift, Identity, Matrix, Accelerated };

inline std::string_view to_string(ExactKind k) {
  switch (k) {
  case ExactKind::FixedShift: return "exact-fixed-shift";
  case ExactKind::TargetShift: return "exact-target-shift";
  case ExactKind::Identity: return "exact-identity";
  case ExactKind::Matrix: return "exact-matrix";
  case ExactKind::Accelerated: return "exact-beta";
  }
  return "?";
}

struct ExactHarnessConfig {
  ExactKind kind = ExactKind::Accelerated;
  /// K for ExactKind::Matrix.
  psdid::Matrix k;
  /// Offset of the fixed shift below lambda_1 as a fraction of lambda_2 - lambda_1.
  double shift_offset = 0.5;
};

/// Records each step's preconditioner so the bounds can be evaluated afterwards.
class ExactHarness {
public:
  ExactHarness(const Pencil &p, ExactHarnessConfig cfg)
      : p_(p), cfg_(std::move(cfg)), oracle_(dense_gev_oracle(p)) {
    if (cfg_.kind == ExactKind::Matrix &&
        (cfg_.k.rows() != p.size() || cfg_.k.cols() != p.size()))
      throw UsageError("exact harness: matrix preconditioner has the wrong order");
    if (oracle_.size() < 2)
      throw UsageError("exact harness: pencil order must be >= 2");
    if (!(cfg_.shift_offset > 0.0))
      throw UsageError("exact harness: shift offset must be positive");
    const double l1 = oracle_.values(0), l2 = oracle_.values(1);
    const double width = l2 > l1 ? l2 - l1 : std::max(1.0, std::abs(l1));
    global_sigma_ = l1 - cfg_.shift_offset * width;
  }

  const OracleDecomposition &oracle() const { return oracle_; }
  double global_sigma() const { return global_sigma_; }

  /// Shift used for target i under TargetShift.
  double target_sigma(std::size_t i) const {
    const Eigen::Index c = detail::target_column(oracle_, i);
    return c == 0 ? global_sigma_ : 0.5 * (oracle_.values(c - 1) + oracle_.values(c));
  }

  DirectionProvider provider() {
    return [this](const DirectionContext &ctx) { return direction(ctx); };
  }

  /// Dense K for a step, reconstructed from the label and shift recorded on
  /// the iterate it produced.
  std::optional<Matrix> lookup(const IterateState &produced) const {
    return exact_preconditioner(p_, produced, cfg_.kind == ExactKind::Matrix ? &cfg_.k : nullptr);
  }

  ExactPreconditionerLookup lookup_function() const {
    return [this](const IterateState &s) { return lookup(s); };
  }

  /// Reconstruction shared with histories read back from disk.
  static std::optional<Matrix> exact_preconditioner(const Pencil &p, const IterateState &produced,
                                                    const Matrix *fixed = nullptr) {
    const std::string &label = produced.precond;
    if (label == to_string(ExactKind::Identity))
      return Matrix::Identity(p.size(), p.size());
    if (label == to_string(ExactKind::Matrix))
      return fixed ? std::optional<Matrix>(*fixed) : std::nullopt;
    if ((label == to_string(ExactKind::FixedShift) || label == to_string(ExactKind::TargetShift) ||
         label == to_string(ExactKind::Accelerated)) &&
        produced.shift_used)
      return dense_shift_invert(p, *produced.shift_used);
    return std::nullopt;
  }

private:
  struct ShiftTrack {
    std::size_t i = 0;
    double c = std::numeric_limits<double>::infinity();
    bool accelerated = false;
  };

  const Eigen::FullPivLU<Matrix> &factor(double shift) {
    auto it = cache_.find(shift);
    if (it == cache_.end()) {
      if (cache_.size() > 8)
        cache_.clear();
      const Matrix a = p_.h().to_dense() - shift * p_.s().to_dense();
      it = cache_.emplace(shift, Eigen::FullPivLU<Matrix>(a)).first;
      if (!it->second.isInvertible())
        throw NumericalError("exact harness: H - sigma S is singular at " + shortest_decimal(shift));
    }
    return it->second;
  }

  StepDirection shift_invert(const Vector &r, double shift, ExactKind kind) {
    StepDirection d;
    if (kind == ExactKind::Accelerated) {
      const Matrix a = p_.h().to_dense() - shift * p_.s().to_dense();
      Eigen::FullPivLU<Matrix> lu(a);
      if (!lu.isInvertible())
        throw NumericalError("exact harness: H - beta S is singular at " + shortest_decimal(shift));
      d.p = -lu.solve(r);
    } else {
      d.p = -factor(shift).solve(r);
    }
    d.shift = shift;
    d.precond = std::string(to_string(kind));
    return d;
  }

  /// Running infimum of the shift constant over the current target's iterates;
  /// returns beta when the conditions of the accelerated shift hold.
  std::optional<double> accelerated_shift(const DirectionContext &ctx) {
    if (track_.i != ctx.i || ctx.state.j == 0)
      track_ = ShiftTrack{ctx.i};
    const Eigen::Index c = detail::target_column(oracle_, ctx.i);
    if (c + 1 >= oracle_.size())
      return std::nullopt;
    const double li = oracle_.values(c), lnext = oracle_.values(c + 1);
    const double eps = ctx.state.lambda - li;
    if (!(eps > eigen_resolution(li)) || !(ctx.state.lambda < lnext) ||
        !(ctx.state.r_s_inv_norm > 0.0))
      return std::nullopt;
    track_.c = std::min(track_.c, shift_constant_term(ctx.state.lambda, li, lnext,
                                                      ctx.state.r_s_inv_norm));
    const double dij = eps / (lnext - ctx.state.lambda);
    const double di = c > 0 ? (li - oracle_.values(c - 1)) / (lnext - li)
                            : std::numeric_limits<double>::infinity();
    const double cap = std::min(di * di / 4.0, 0.1);
    if (!(track_.c > 3.0 * std::sqrt(dij) && dij < cap))
      return std::nullopt;
    return ctx.state.lambda - track_.c * ctx.state.r_s_inv_norm;
  }

  StepDirection direction(const DirectionContext &ctx) {
    switch (cfg_.kind) {
    case ExactKind::Identity: {
      StepDirection d;
      d.p = -ctx.r;
      d.precond = std::string(to_string(ExactKind::Identity));
      return d;
    }
    case ExactKind::Matrix: {
      StepDirection d;
      d.p = -(cfg_.k * ctx.r);
      d.precond = std::string(to_string(ExactKind::Matrix));
      return d;
    }
    case ExactKind::FixedShift:
      return shift_invert(ctx.r, global_sigma_, ExactKind::FixedShift);
    case ExactKind::TargetShift:
      return shift_invert(ctx.r, target_sigma(ctx.i), ExactKind::TargetShift);
    case ExactKind::Accelerated:
      if (const std::optional<double> beta = accelerated_shift(ctx))
        return shift_invert(ctx.r, *beta, ExactKind::Accelerated);
      return shift_invert(ctx.r, global_sigma_, ExactKind::FixedShift);
    }
    throw UsageError("exact harness: unknown kind");
  }

  const Pencil &p_;
  ExactHarnessConfig cfg_;
  OracleDecomposition oracle_;
  double global_sigma_ = 0.0;
  ShiftTrack track_;
  std::map<double, Eigen::FullPivLU<Matrix>> cache_;
};

} // namespace psdid
