#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace psdid;
using namespace psdid::test;
using Catch::Approx;

namespace {

ConvergenceHistory single_iterate_history(const Pencil &p, std::size_t i, const Vector &u) {
  ConvergenceHistory h;
  h.i = i;
  IterateState s;
  s.i = i;
  s.u = u / p.s_norm(u);
  s.lambda = rayleigh_quotient(p, s.u);
  s.r_s_inv_norm = s_inv_norm(p, residual(p, s.lambda, s.u));
  h.iterates.push_back(s);
  return h;
}

SolveResult harness_run(const Pencil &p, ExactHarness &harness, std::size_t nev, std::uint64_t seed) {
  SolverConfig cfg;
  cfg.nev = nev;
  cfg.extra_ritz = 2;
  cfg.rng_seed = seed;
  cfg.max_outer_iterations = 1000;
  return solve_smallest(p, cfg, harness.provider());
}

// Dense theta, delta, Gamma, gamma straight from the definitions, for a
// diagonal pencil where S^{1/2} is the elementwise root.
RateQuantities brute_force_rates(const Vector &h, const Vector &s, std::size_t i, double beta) {
  const Pencil p = diagonal_pencil(h, s);
  const OracleDecomposition o = dense_gev_oracle(p);
  const Eigen::Index c = static_cast<Eigen::Index>(i - 1);
  const Matrix k = (h - beta * s).cwiseInverse().asDiagonal();
  const Matrix sh = s.cwiseSqrt().asDiagonal();
  const Matrix sd = s.asDiagonal();
  const Matrix u = o.vectors.leftCols(c);
  const Matrix proj = Matrix::Identity(h.size(), h.size()) - u * u.transpose() * sd;
  const Matrix m = proj.transpose() * (Matrix(h.asDiagonal()) - o.values(c) * sd) * proj;
  RateQuantities q;
  const Matrix a = sh * k * m * k * sh;
  q.theta = Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
  q.delta = Eigen::JacobiSVD<Matrix>(Matrix(sh * k * sh)).singularValues()(0);
  const Eigen::VectorXcd ev = Matrix(k * m).eigenvalues();
  q.Gamma = 0.0;
  q.gamma = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < ev.size(); ++t)
    if (std::abs(ev(t)) > 1e-10) {
      q.Gamma = std::max(q.Gamma, ev(t).real());
      q.gamma = std::min(q.gamma, ev(t).real());
    }
  return q;
}

} // namespace

TEST_CASE("decrease bound arithmetic", "[analysis][decrease]") {
  const DecreaseBound zero = decrease_bound(1.0, 0.0, 2.0);
  CHECK(zero.bound == 0.0);
  // g = 0 gives bound = phi
  CHECK(decrease_bound(0.0, 3.0, 2.0).bound == Approx(1.5));
  // sqrt(g^2 + phi^2) - g with g = 2, phi = 1.5
  const DecreaseBound b = decrease_bound(2.0, 3.0, 2.0);
  CHECK(b.phi == 1.5);
  CHECK(b.bound == Approx(0.5).epsilon(1e-15));
  // no cancellation for tiny phi: phi^2 / (2 g) to leading order
  const DecreaseBound tiny = decrease_bound(1e3, 1e-9, 1.0);
  CHECK(tiny.bound == Approx(1e-18 / 2e3).epsilon(1e-12));
  CHECK_THROWS_AS(decrease_bound(-1.0, 1.0, 1.0), UsageError);
  CHECK_THROWS_AS(decrease_bound(1.0, -1.0, 1.0), UsageError);
  CHECK_THROWS_AS(decrease_bound(1.0, 1.0, 0.5), UsageError);
}

TEST_CASE("decrease bound needs an effectively positive definite K", "[analysis][decrease]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0, 4.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  const Matrix id = Matrix::Identity(4, 4);
  const DecreaseBound b = decrease_bound(p, o, 1, 0.5, id);
  CHECK(b.g == Approx(1.5));
  CHECK(b.kappa == Approx(1.0));
  CHECK_THROWS_AS(decrease_bound(p, o, 1, 0.5, Matrix(-id)), DomainError);
}

TEST_CASE("decrease bound holds along exact runs", "[analysis][decrease][property]") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 6; ++trial) {
    const bool diag = trial % 2 == 0;
    const Eigen::Index n = 10 + 7 * trial;
    const Pencil p = diag ? random_diagonal_pencil(n, rng) : random_dense_pencil(n, rng);
    for (ExactKind kind : {ExactKind::FixedShift, ExactKind::TargetShift, ExactKind::Accelerated}) {
      ExactHarness harness(p, {kind});
      const SolveResult r = harness_run(p, harness, 3, static_cast<std::uint64_t>(trial));
      REQUIRE(r.all_converged());
      std::size_t held = 0;
      for (const auto &h : r.histories) {
        const auto steps = verify_decrease_bound(p, harness.oracle(), h, harness.lookup_function());
        CHECK(count_verdict(steps, StepVerdict::Violated) == 0);
        held += count_verdict(steps, StepVerdict::Holds);
      }
      CHECK(held > 0);
    }
  }
}

TEST_CASE("inexact steps are skipped by the verifiers", "[analysis]") {
  const Pencil p = oscillator(Discretization::PUFE, 8);
  const OracleDecomposition o = dense_gev_oracle(p);
  SolverConfig cfg;
  cfg.nev = 1;
  const SolveResult r = solve_smallest(p, cfg);
  const ExactPreconditionerLookup none = [](const IterateState &) { return std::optional<Matrix>(); };
  const auto dec = verify_decrease_bound(p, o, r.histories[0], none);
  const auto rate = verify_rate_bound(p, o, r.histories[0], none);
  CHECK(count_verdict(dec, StepVerdict::Skipped) == dec.size());
  CHECK(count_verdict(rate, StepVerdict::Skipped) == rate.size());
  CHECK(to_string(StepVerdict::Holds) == "holds");
}

TEST_CASE("S square root and the deflated operator", "[analysis]") {
  std::mt19937_64 rng(6);
  const Pencil p = random_dense_pencil(12, rng);
  const Matrix s = p.s().to_dense();
  const SymmetricSqrt root = symmetric_sqrt(s);
  CHECK_FALSE(root.floored);
  CHECK((root.root * root.root - s).norm() <= 1e-12 * s.norm());

  Vector d(3);
  d << 1.0, 1e-20, 4.0;
  const SymmetricSqrt fl = symmetric_sqrt(Matrix(d.asDiagonal()));
  CHECK(fl.floored);
  CHECK(fl.root(1, 1) == Approx(std::sqrt(4e-14)));
  CHECK_THROWS_AS(symmetric_sqrt(Matrix::Zero(2, 2)), DomainError);

  const OracleDecomposition o = dense_gev_oracle(p);
  for (std::size_t i = 1; i <= 4; ++i) {
    const Matrix m = deflated_operator(p, o, i);
    const Matrix g = deflated_factor(p, o, i);
    CHECK((g * g.transpose() - m).norm() <= 1e-9 * m.norm());
    CHECK(deflated_operator_min_relative(p, o, i) >= -1e-10);
  }
  CHECK_THROWS_AS(deflated_factor(p, o, 12), UsageError);
}

TEST_CASE("deflated operator is positive semi-definite on oscillator pencils", "[analysis][property]") {
  for (auto [d, e] : {std::pair{Discretization::LinearFE, 64}, std::pair{Discretization::CubicFE, 32},
                      std::pair{Discretization::PUFE, 16}, std::pair{Discretization::PUFE, 32}}) {
    const Pencil p = oscillator(d, e);
    const OracleDecomposition o = dense_gev_oracle(p);
    for (std::size_t i = 1; i <= 4; ++i)
      CHECK(deflated_operator_min_relative(p, o, i) >= -1e-10);
  }
}

TEST_CASE("closed forms agree with brute-force norms", "[analysis][rate][property]") {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> frac(0.05, 0.45);
  int compared = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 6 + trial;
    const Pencil p = random_diagonal_pencil(n, rng);
    const Vector h = p.h().to_dense().diagonal(), s = p.s().to_dense().diagonal();
    const OracleDecomposition o = dense_gev_oracle(p);
    for (std::size_t i = 1; i + 1 <= static_cast<std::size_t>(n) && i <= 3; ++i) {
      const Eigen::Index c = static_cast<Eigen::Index>(i - 1);
      const double li = o.values(c), lnext = o.values(c + 1);
      double width = lnext - li;
      if (c > 0)
        width = std::min(width, li - o.values(c - 1));
      // beta close enough to lambda_i that every extreme sits at lambda_i or lambda_{i+1}
      const double beta = li - frac(rng) * width;
      const RateQuantities closed = shift_invert_closed_forms(o.values, i, beta);
      const RateQuantities brute = brute_force_rates(h, s, i, beta);
      const RateQuantities dense = rate_quantities(p, o, i, li, dense_shift_invert(p, beta));
      CHECK(relative_difference(closed.theta, brute.theta) <= 1e-8);
      CHECK(relative_difference(closed.delta, brute.delta) <= 1e-8);
      CHECK(relative_difference(closed.Gamma, brute.Gamma) <= 1e-8);
      CHECK(relative_difference(closed.gamma, brute.gamma) <= 1e-8);
      CHECK(relative_difference(closed.theta, dense.theta) <= 1e-8);
      CHECK(relative_difference(closed.delta, dense.delta) <= 1e-8);
      CHECK(relative_difference(closed.Gamma, dense.Gamma) <= 1e-8);
      CHECK(relative_difference(closed.gamma, dense.gamma) <= 1e-8);
      ++compared;
    }
  }
  CHECK(compared >= 20);
  CHECK_THROWS_AS(shift_invert_closed_forms(Vector::LinSpaced(4, 1, 4), 2, 2.5), DomainError);
  CHECK_THROWS_AS(shift_invert_closed_forms(Vector::LinSpaced(4, 1, 4), 4, 3.5), UsageError);
}

TEST_CASE("rate quantities arithmetic", "[analysis][rate]") {
  // H = diag(1,2,3,4), S = I, i = 1, K = (H - 0.5 I)^{-1}, lambda_ij = 1.01
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0, 4.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  const RateQuantities q = rate_quantities(p, o, 1, 1.01, dense_shift_invert(p, 0.5));
  CHECK(q.theta == Approx(1.0 / 2.25).epsilon(1e-12));
  CHECK(q.delta == Approx(2.0).epsilon(1e-12));
  CHECK(q.Gamma == Approx(3.0 / 3.5).epsilon(1e-12));
  CHECK(q.gamma == Approx(1.0 / 1.5).epsilon(1e-12));
  CHECK(q.epsilon == Approx(0.01).epsilon(1e-10));
  const double tau = 2.0 / (q.Gamma + q.gamma);
  CHECK(q.tau == Approx(tau));
  CHECK(q.localized_lhs == Approx(tau * (std::sqrt(0.01 / 2.25) + 0.02)));
  CHECK(q.applicable);
  const double f = (q.Delta + tau * std::sqrt(0.01 / 2.25)) / (1.0 - q.localized_lhs);
  CHECK(q.bound_factor == Approx(f * f));
  CHECK_THROWS_AS(rate_quantities(p, o, 2, 1.0, dense_shift_invert(p, 0.5)), DomainError);
  CHECK_THROWS_AS(rate_quantities(p, o, 1, 1.01, Matrix(-Matrix::Identity(4, 4))), DomainError);
}

TEST_CASE("rate bound on an exact eigenvector start", "[analysis][rate]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  ConvergenceHistory h = single_iterate_history(p, 1, Vector::Unit(3, 0));
  h.iterates.push_back(h.iterates[0]);
  h.iterates[1].j = 1;
  h.iterates[1].precond = "exact-identity";
  const auto steps = verify_rate_bound(p, o, h, [&](const IterateState &s) {
    return ExactHarness::exact_preconditioner(p, s);
  });
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].epsilon == 0.0);
  CHECK(steps[0].verdict == StepVerdict::Skipped);
}

TEST_CASE("rate bound holds along exact accelerated runs", "[analysis][rate][property]") {
  std::mt19937_64 rng(2718);
  std::vector<Pencil> pencils;
  for (int t = 0; t < 4; ++t)
    pencils.push_back(random_diagonal_pencil(12 + 5 * t, rng));
  for (int t = 0; t < 3; ++t)
    pencils.push_back(random_dense_pencil(15 + 8 * t, rng));
  pencils.push_back(oscillator(Discretization::PUFE, 8));
  for (std::size_t k = 0; k < pencils.size(); ++k) {
    const Pencil &p = pencils[k];
    ExactHarness harness(p, {ExactKind::Accelerated});
    const SolveResult r = harness_run(p, harness, 3, k);
    REQUIRE(r.all_converged());
    std::size_t held = 0;
    for (const auto &h : r.histories) {
      const auto steps = verify_rate_bound(p, harness.oracle(), h, harness.lookup_function());
      CHECK(count_verdict(steps, StepVerdict::Violated) == 0);
      held += count_verdict(steps, StepVerdict::Holds);
      for (const auto &s : steps)
        if (s.verdict == StepVerdict::Holds)
          CHECK(s.margin >= -1e-8);
    }
    CHECK(held > 0);
  }
}

TEST_CASE("exact local shift-invert at the Ritz value returns -u", "[analysis]") {
  std::mt19937_64 rng(3);
  const Pencil p = random_dense_pencil(10, rng);
  const Vector u = random_matrix(10, 1, rng);
  const double lam = rayleigh_quotient(p, u);
  const Vector pdir = -dense_shift_invert(p, lam) * residual(p, lam, u);
  CHECK((pdir + u).norm() <= 1e-8 * u.norm());
}

TEST_CASE("spectrum of K M", "[analysis][km][property]") {
  std::mt19937_64 rng(55);
  std::vector<Pencil> pencils;
  for (int t = 0; t < 4; ++t)
    pencils.push_back(random_dense_pencil(10 + 10 * t, rng));
  pencils.push_back(oscillator(Discretization::LinearFE, 128));
  pencils.push_back(oscillator(Discretization::CubicFE, 32));
  pencils.push_back(oscillator(Discretization::PUFE, 8));
  pencils.push_back(oscillator(Discretization::PUFE, 16));
  for (const Pencil &p : pencils) {
    ExactHarness harness(p, {ExactKind::FixedShift});
    const OracleDecomposition &o = harness.oracle();
    for (std::size_t i = 1; i <= 3; ++i) {
      for (const Matrix &k : {dense_shift_invert(p, harness.global_sigma()),
                              dense_shift_invert(p, harness.target_sigma(i)),
                              Matrix(Matrix::Identity(p.size(), p.size()))}) {
        const KmSpectrum km = km_spectrum(p, o, i, k);
        CHECK(km.zero_count == i);
        CHECK(km.positive_count == static_cast<std::size_t>(p.size()) - i);
        CHECK(km.other_count == 0);
        CHECK(km.factor_mismatch <= 1e-6);
      }
    }
  }
}

TEST_CASE("Kato-Temple by direct arithmetic", "[analysis][kato]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 5.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  const double t = 0.1;
  Vector u(3);
  u << std::cos(t), std::sin(t), 0.0;
  const ConvergenceHistory h = single_iterate_history(p, 1, u);
  const double lam = std::cos(t) * std::cos(t) + 2.0 * std::sin(t) * std::sin(t);
  // r = (H - lam) u; with S = I the S^{-1} norm is the 2-norm
  const double r2 = std::pow((1.0 - lam) * std::cos(t), 2) + std::pow((2.0 - lam) * std::sin(t), 2);
  const ShiftReport rep = shift_analysis(o, h);
  REQUIRE(rep.steps.size() == 1);
  const ShiftStep &s = rep.steps[0];
  CHECK(s.in_interval);
  CHECK(s.kato_lhs == Approx((lam - 1.0) * (2.0 - lam)).epsilon(1e-12));
  CHECK(s.kato_rhs == Approx(r2).epsilon(1e-12));
  CHECK(s.kato == StepVerdict::Holds);
  // two-dimensional case: the inequality is an equality
  CHECK(s.kato_lhs == Approx(s.kato_rhs).epsilon(1e-12));
  CHECK(rep.kato_violations == 0);
}

TEST_CASE("Kato-Temple on an exact eigenpair", "[analysis][kato]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 5.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  const ShiftReport rep = shift_analysis(o, single_iterate_history(p, 2, Vector::Unit(3, 1)));
  CHECK(rep.steps[0].epsilon == 0.0);
  CHECK(rep.steps[0].kato_rhs == 0.0);
  CHECK(rep.steps[0].kato == StepVerdict::Skipped);
  CHECK_THROWS_AS(shift_analysis(o, single_iterate_history(p, 3, Vector::Unit(3, 2))), UsageError);
}

TEST_CASE("Kato-Temple and the shift along random runs", "[analysis][kato][property]") {
  std::mt19937_64 rng(88);
  for (int trial = 0; trial < 6; ++trial) {
    const Pencil p = trial % 2 ? random_dense_pencil(20 + trial, rng) : random_diagonal_pencil(20 + trial, rng);
    ExactHarness harness(p, {ExactKind::Accelerated});
    const SolveResult r = harness_run(p, harness, 3, static_cast<std::uint64_t>(trial));
    REQUIRE(r.all_converged());
    for (const auto &h : r.histories) {
      const ShiftReport rep = shift_analysis(harness.oracle(), h);
      CHECK(rep.kato_violations == 0);
      CHECK(rep.beta_violations == 0);
      for (const auto &s : rep.steps)
        if (s.rate_term)
          CHECK(*s.rate_term <= *s.rate_term_bound * (1.0 + 1e-8));
    }
  }
}

TEST_CASE("shift from a converged oscillator run approaches the eigenvalue", "[analysis][kato]") {
  const Pencil p = oscillator(Discretization::PUFE, 16);
  const OracleDecomposition o = dense_gev_oracle(p);
  SolverConfig cfg;
  const SolveResult r = solve_smallest(p, cfg);
  REQUIRE(r.all_converged());
  std::size_t decided = 0;
  for (const auto &h : r.histories) {
    const ShiftReport rep = shift_analysis(o, h);
    CHECK(rep.kato_violations == 0);
    CHECK(rep.beta_violations == 0);
    if (rep.beta_converging) {
      ++decided;
      CHECK(*rep.beta_converging);
    }
  }
  CHECK(decided >= 1);
}

TEST_CASE("ideal direction diagnostic", "[analysis][ideal]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0});
  const OracleDecomposition o = dense_gev_oracle(p);
  Vector u(3);
  u << 0.8, 0.36, 0.48;
  // p = U e_1 - u is the ideal direction
  const IdealDirection ideal = ideal_direction_diagnostic(p, o, 1, u, Vector(o.vectors.col(0) - u));
  CHECK(ideal.tail_ratio <= 1e-15);
  CHECK(ideal.informative);
  // p = -r with K = I: u + p = u - (H - lam) u, componentwise (1 - (h_k - lam)) u_k
  const double lam = rayleigh_quotient(p, u);
  const IdealDirection sd = ideal_direction_diagnostic(p, o, 1, u, Vector(-residual(p, lam, u)));
  const double x1 = (1.0 - (1.0 - lam)) * 0.8, x2 = (1.0 - (2.0 - lam)) * 0.36,
               x3 = (1.0 - (3.0 - lam)) * 0.48;
  CHECK(sd.tail_ratio == Approx(std::hypot(x2, x3) / std::abs(x1)).epsilon(1e-12));
  // xi_i = 0 is not informative
  const IdealDirection bad = ideal_direction_diagnostic(p, o, 1, Vector::Unit(3, 1), Vector::Zero(3));
  CHECK_FALSE(bad.informative);
}

TEST_CASE("locally accelerated directions approach the ideal one", "[analysis][ideal]") {
  const Pencil p = oscillator(Discretization::PUFE, 8);
  const OracleDecomposition o = dense_gev_oracle(p);
  SolverConfig cfg;
  const DirectionProvider base = default_direction(cfg);
  std::map<std::size_t, std::vector<double>> tails;
  const DirectionProvider recording = [&](const DirectionContext &ctx) {
    StepDirection d = base(ctx);
    if (ctx.localized && !ctx.stalled)
      tails[ctx.i].push_back(ideal_direction_diagnostic(p, o, ctx.i, ctx.state.u, d.p).tail_ratio);
    return d;
  };
  const SolveResult r = solve_smallest(p, cfg, recording);
  REQUIRE(r.all_converged());
  REQUIRE(tails.size() == 4);
  for (const auto &[i, v] : tails) {
    INFO("target " << i);
    REQUIRE(v.size() >= 2);
    CHECK(v.back() < v.front());
  }
}

TEST_CASE("harness bookkeeping", "[analysis][harness]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 4.0, 8.0});
  ExactHarness h(p, {ExactKind::TargetShift});
  CHECK(h.global_sigma() == Approx(0.5));
  CHECK(h.target_sigma(1) == Approx(0.5));
  CHECK(h.target_sigma(3) == Approx(3.0));
  IterateState s;
  s.precond = "exact-target-shift";
  s.shift_used = 3.0;
  const auto k = ExactHarness::exact_preconditioner(p, s);
  REQUIRE(k.has_value());
  CHECK((*k)(2, 2) == Approx(1.0));
  s.precond = "local";
  CHECK_FALSE(ExactHarness::exact_preconditioner(p, s).has_value());
  s.precond = "exact-matrix";
  CHECK_FALSE(ExactHarness::exact_preconditioner(p, s).has_value());
  CHECK_THROWS_AS(ExactHarness(p, {ExactKind::Matrix}), UsageError);
  CHECK(to_string(ExactKind::Accelerated) == "exact-beta");
}
