#pragma once

// Umbrella header for the PSD-id sparse generalized eigensolver.

#include "psdid/error.hpp"
#include "psdid/format.hpp"
#include "psdid/sparse_sym_matrix.hpp"
#include "psdid/pencil.hpp"
#include "psdid/dense_oracle.hpp"
#include "psdid/matrix_market.hpp"
#include "psdid/oscillator.hpp"
#include "psdid/minres.hpp"
#include "psdid/preconditioner.hpp"
#include "psdid/rayleigh_ritz.hpp"
#include "psdid/localization.hpp"
#include "psdid/solver.hpp"
#include "psdid/analysis.hpp"
#include "psdid/history_io.hpp"
