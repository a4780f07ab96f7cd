#include "mlrg/providers.hpp"

#include "mlrg/errors.hpp"
#include "mlrg/exact_oracle.hpp"

namespace mlrg {

MomentProvider monte_carlo_provider(int side, const MCSettings& settings) {
  settings.validate();
  if (side < SpinLattice::kMinSide) throw ConfigError("Monte Carlo provider needs a lattice side of at least 4");
  return [side, settings](const Vector8& alpha, int evaluation) {
    MCSettings s = settings;
    s.seed = derive_seed(settings.seed, static_cast<std::uint64_t>(evaluation));
    return estimate_moments(alpha, side, s);
  };
}

MomentProvider exact_provider(int side) {
  auto enumerator = ExactEnumerator::for_side(side);
  return [enumerator](const Vector8& alpha, int) { return enumerator->moments(alpha).as_stats(); };
}

}  // namespace mlrg
