#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "psdid/error.hpp"

namespace psdid {

/// Inputs and outcome of the switch to the locally accelerated preconditioner.
struct LocalizationState {
  /// (lambda_{i;j} - lambda_{i-1}) / (lambda_{i+1;j} - lambda_{i;j})
  double gap_ratio = 0.0;
  /// (lambda_{i;j-1} - lambda_{i;j}) / (lambda_{i+1;j} - lambda_{i;j})
  double closeness = 0.0;
  /// min(gap_ratio^2 / 4, 0.1)
  double tau2 = 0.1;
  double prev_lambda = 0.0;
  bool localized = false;
  std::vector<std::string> warnings;
};

struct LocalizationInput {
  std::size_t j = 0;
  double res = 1.0;
  double lambda = 0.0;       // lambda_{i;j}
  double prev_lambda = 0.0;  // lambda_{i;j-1}
  double next_ritz = 0.0;    // lambda_{i+1;j}
  double lower_anchor = 0.0; // accepted lambda_{i-1}, or sigma for i = 1
  double tau1 = 0.1;
};

inline constexpr double multiplicity_gap_floor = 1e-6;

/// Residual test Res <= tau1 combined with the extrapolated closeness test.
/// Once true it stays true (the state latches). Iteration 0 is never localized.
inline bool localization_test(LocalizationState &ls, const LocalizationInput &in) {
  ls.prev_lambda = in.prev_lambda;
  if (ls.localized)
    return true;
  if (in.j == 0)
    return false;
  if (!(in.res <= in.tau1))
    return false;
  const double gap = in.next_ritz - in.lambda;
  if (!(gap > 0.0)) {
    ls.warnings.push_back("iteration " + std::to_string(in.j) +
                          ": next Ritz value does not exceed the current one; "
                          "gap estimate collapsed");
    return false;
  }
  const double lower_gap = in.lambda - in.lower_anchor;
  if (std::abs(lower_gap) < 1e-12 * std::abs(in.lambda)) {
    ls.gap_ratio = multiplicity_gap_floor;
    ls.warnings.push_back("iteration " + std::to_string(in.j) +
                          ": gap to the previous eigenvalue vanishes; possible multiplicity");
  } else {
    ls.gap_ratio = lower_gap / gap;
  }
  ls.tau2 = std::min(ls.gap_ratio * ls.gap_ratio / 4.0, 0.1);
  ls.closeness = std::max(0.0, in.prev_lambda - in.lambda) / gap;
  ls.localized = ls.closeness < ls.tau2;
  return ls.localized;
}

} // namespace psdid
