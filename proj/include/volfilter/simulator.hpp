#pragma once

// Ground-truth generation: exact chain paths, observation times under each
// policy, and log prices at those times. No time discretization is used
// anywhere; holding times and Gaussian increments are exact draws.

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "volfilter/model.hpp"
#include "volfilter/rng.hpp"

namespace volfilter {

/// Precomputed exit rates and jump distributions of a chain.
class ChainSampler {
 public:
  explicit ChainSampler(const VolatilityChain& chain);

  std::size_t size() const { return exit_rate_.size(); }
  int initial(Rng& rng) const;
  /// Exponential holding time in `state`; +inf for an absorbing state.
  double holding_time(int state, Rng& rng) const;
  int next(int state, Rng& rng) const;

  /// Evolves the chain for `duration` starting in `state`, calling
  /// visit(state, length) for each constant piece in time order. Returns the
  /// state at the end of the interval.
  template <class Visit>
  int advance(int state, double duration, Rng& rng, Visit&& visit) const {
    double left = duration;
    for (;;) {
      const double hold = holding_time(state, rng);
      if (!(hold < left)) {
        visit(state, left);
        return state;
      }
      visit(state, hold);
      left -= hold;
      state = next(state, rng);
    }
  }

 private:
  std::vector<double> exit_rate_;
  std::vector<std::vector<double>> cumulative_;  // jump CDF per state
  std::vector<double> initial_cdf_;
};

struct SimOutput {
  ChainPath path;
  std::vector<Tick> ticks;
  std::vector<int> true_states_at_ticks;
};

ChainPath simulate_chain(const VolatilityChain& chain, double horizon, std::uint64_t seed);

/// Same as simulate_chain but from a fixed start state with a caller-owned
/// stream.
ChainPath simulate_chain_from(const ChainSampler& sampler, int start, double horizon, Rng& rng);

/// Observation times in (0, horizon], strictly increasing.
std::vector<double> simulate_arrivals(const ChainPath& path, const ObservationPolicy& policy,
                                      std::uint64_t seed);

/// Log prices at tick 0 = (0, x0) and at every arrival time.
std::vector<Tick> simulate_ticks(const ChainPath& path, const MarketModel& model,
                                 std::span<const double> arrivals, std::uint64_t seed);

/// Chain path, arrivals and ticks from independent streams of one seed.
SimOutput simulate(const VolatilityChain& chain, const MarketModel& model,
                   const ObservationPolicy& policy, double horizon, std::uint64_t seed);

}  // namespace volfilter
