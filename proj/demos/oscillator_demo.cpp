// Four smallest eigenpairs of the PUFE oscillator pencil (n = 112), with the
// residual history of each target.

#include <cstdio>
#include <string>

#include "psdid/psdid.hpp"

int main() {
  using namespace psdid;
  OscillatorSpec spec;
  spec.discretization = Discretization::PUFE;
  spec.n_elem = 32;
  const Pencil p = assemble_oscillator(spec);

  SolverConfig cfg;
  cfg.nev = 4;
  cfg.extra_ritz = 4;
  cfg.rng_seed = 7;
  const SolveResult r = solve_smallest(p, cfg);

  std::printf("PUFE oscillator, n = %zu\n", p.n());
  for (const ConvergenceHistory &h : r.histories) {
    const double exact = static_cast<double>(h.i) - 0.5;
    std::printf("lambda_%zu = %.12f  (k - 1/2 = %.1f, %s after %zu iterations)\n", h.i,
                h.final.value, exact, std::string(to_string(h.termination)).c_str(),
                h.iterates.size() - 1);
    for (const IterateState &s : h.iterates)
      std::printf("  j=%-3zu Res=%.3e%s\n", s.j, s.res, s.localized ? "  localized" : "");
  }
  return r.all_converged() ? 0 : 1;
}
