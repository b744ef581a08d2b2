#include <catch_amalgamated.hpp>

#include "test_support.hpp"

using namespace psdid;
using namespace psdid::test;

namespace {

MinresConfig tight(std::size_t max_it = 200) {
  MinresConfig c;
  c.rel_tolerance = 1e-12;
  c.max_iterations = max_it;
  return c;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v)
    out(k++) = x;
  return out;
}

void check_nonincreasing(const MinresResult &r) {
  for (std::size_t k = 1; k < r.preconditioned_residuals.size(); ++k)
    CHECK(r.preconditioned_residuals[k] <= r.preconditioned_residuals[k - 1] * (1.0 + 1e-12));
}

} // namespace

TEST_CASE("config validation", "[minres]") {
  MinresConfig c;
  CHECK_NOTHROW(c.validate());
  c.rel_tolerance = 0.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.rel_tolerance = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.rel_tolerance = 0.5;
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("identity operator", "[minres]") {
  const Pencil p = standard_diagonal({2.0, 2.0, 2.0});
  const Vector b = vec({1.0, -2.0, 0.5});
  const MinresResult r = minres_shifted(p, 1.0, b, tight());
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK((r.solution - b).norm() <= 1e-14);
}

TEST_CASE("diagonal solves", "[minres]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0});
  MinresConfig cfg;
  for (MinresPreconditioner pc : {MinresPreconditioner::None, MinresPreconditioner::SInverse}) {
    cfg.preconditioner = pc;
    const MinresResult pos = minres_shifted(p, 0.0, Vector::Ones(3), cfg);
    CHECK(pos.converged);
    CHECK(pos.achieved_relres <= cfg.rel_tolerance);
    CHECK((pos.solution - vec({1.0, 0.5, 1.0 / 3.0})).norm() <= cfg.rel_tolerance * 1.2);

    const MinresResult ind = minres_shifted(p, 1.5, Vector::Unit(3, 0), cfg);
    CHECK(ind.converged);
    CHECK((ind.solution - vec({-2.0, 0.0, 0.0})).norm() <= 2.0 * cfg.rel_tolerance);
    check_nonincreasing(pos);
    check_nonincreasing(ind);
  }
}

TEST_CASE("errors", "[minres]") {
  const Pencil p = standard_diagonal({1.0, 2.0});
  CHECK_THROWS_AS(minres_shifted(p, 0.0, Vector::Zero(2), tight()), DomainError);
  CHECK_THROWS_AS(minres_shifted(p, 0.0, Vector::Ones(3), tight()), UsageError);
  CHECK_THROWS_AS(minres_shifted(p, std::nan(""), Vector::Ones(2), tight()), UsageError);
}

TEST_CASE("tight tolerance matches a dense solve", "[minres][property]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index n = 5 + 4 * trial;
    const Pencil p = random_dense_pencil(n, rng);
    const OracleDecomposition o = dense_gev_oracle(p);
    // Shifts inside the spectrum make the operator indefinite.
    const double lambda = 0.5 * (o.values(n / 3) + o.values(n / 3 + 1));
    const Vector b = random_matrix(n, 1, rng);
    const Matrix a = p.h().to_dense() - lambda * p.s().to_dense();
    const Vector exact = a.fullPivLu().solve(b);
    for (MinresPreconditioner pc : {MinresPreconditioner::None, MinresPreconditioner::SInverse}) {
      MinresConfig cfg = tight(2000);
      cfg.preconditioner = pc;
      const MinresResult r = minres_shifted(p, lambda, b, cfg);
      CHECK(r.converged);
      CHECK(r.achieved_relres <= cfg.rel_tolerance);
      CHECK((r.solution - exact).norm() <= 1e-8 * exact.norm());
      CHECK(r.preconditioned_residuals.size() == r.iterations + 1);
      check_nonincreasing(r);
    }
  }
}

TEST_CASE("loose tolerance stops early with the promised residual", "[minres]") {
  const Pencil p = oscillator(Discretization::PUFE, 16);
  const Vector b = Vector::Ones(p.size());
  MinresConfig cfg;
  cfg.rel_tolerance = 1e-2;
  const MinresResult r = minres_shifted(p, 0.3, b, cfg);
  CHECK(r.converged);
  CHECK(r.achieved_relres <= 1e-2);
  check_nonincreasing(r);
  cfg.rel_tolerance = 1e-8;
  const MinresResult r2 = minres_shifted(p, 0.3, b, cfg);
  CHECK(r2.iterations >= r.iterations);
}

TEST_CASE("singular operator hits the cap without producing NaN", "[minres]") {
  const Pencil p = standard_diagonal({1.0, 2.0, 3.0, 4.0});
  const MinresResult r = minres_shifted(p, 2.0, Vector::Ones(4), tight(50));
  CHECK_FALSE(r.converged);
  CHECK(r.solution.allFinite());
  CHECK(r.achieved_relres > 1e-12);
  CHECK(r.achieved_relres <= 1.0);
  check_nonincreasing(r);
}

TEST_CASE("iteration cap is honored", "[minres]") {
  std::mt19937_64 rng(4);
  const Pencil p = random_dense_pencil(40, rng);
  const MinresResult r = minres_shifted(p, 0.0, random_matrix(40, 1, rng), tight(3));
  CHECK(r.iterations <= 3);
  CHECK_FALSE(r.converged);
  CHECK(r.solution.allFinite());
}
