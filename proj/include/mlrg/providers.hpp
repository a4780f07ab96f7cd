#pragma once

#include "mlrg/lm_solver.hpp"
#include "mlrg/sampler.hpp"

namespace mlrg {

/// Metropolis moments on an L x L lattice. Evaluation e of a solve samples
/// with seed derive_seed(settings.seed, e).
MomentProvider monte_carlo_provider(int side, const MCSettings& settings);

/// Exact enumeration moments (side 2..4).
MomentProvider exact_provider(int side);

}  // namespace mlrg
