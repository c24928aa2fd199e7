#include "volfilter/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "volfilter/errors.hpp"

namespace volfilter {

namespace {

int sample_cdf(const std::vector<double>& cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                   static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

}  // namespace

ChainSampler::ChainSampler(const VolatilityChain& chain) {
  const std::size_t m = chain.size();
  exit_rate_.resize(m);
  cumulative_.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    exit_rate_[j] = chain.exit_rate(j);
    double acc = 0.0;
    cumulative_[j].resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      if (i != j) acc += chain.intensity()(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
      cumulative_[j][i] = acc;
    }
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < chain.initial_law().size(); ++i) {
    acc += chain.initial_law()[i];
    initial_cdf_.push_back(acc);
  }
}

int ChainSampler::initial(Rng& rng) const { return sample_cdf(initial_cdf_, rng.uniform()); }

double ChainSampler::holding_time(int state, Rng& rng) const {
  const double rate = exit_rate_[static_cast<std::size_t>(state)];
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::log1p(-rng.uniform()) / rate;
}

int ChainSampler::next(int state, Rng& rng) const {
  const auto& cdf = cumulative_[static_cast<std::size_t>(state)];
  // Entry `state` of the CDF repeats its predecessor, so upper_bound never
  // lands on it for u in [0, 1).
  return sample_cdf(cdf, rng.uniform());
}

ChainPath simulate_chain_from(const ChainSampler& sampler, int start, double horizon, Rng& rng) {
  if (!(horizon > 0.0)) throw InvalidInput("simulation horizon must be positive");
  std::vector<double> jumps;
  std::vector<int> states{start};
  double t = 0.0;
  int state = start;
  for (;;) {
    t += sampler.holding_time(state, rng);
    if (!(t < horizon)) break;
    state = sampler.next(state, rng);
    jumps.push_back(t);
    states.push_back(state);
  }
  return ChainPath(std::move(jumps), std::move(states), horizon);
}

ChainPath simulate_chain(const VolatilityChain& chain, double horizon, std::uint64_t seed) {
  const ChainSampler sampler(chain);
  Rng rng(derive_seed(seed, stream::kChain));
  const int start = sampler.initial(rng);
  return simulate_chain_from(sampler, start, horizon, rng);
}

std::vector<double> simulate_arrivals(const ChainPath& path, const ObservationPolicy& policy,
                                      std::uint64_t seed) {
  const double horizon = path.horizon();
  std::vector<double> times;
  Rng rng(derive_seed(seed, stream::kArrivals));
  switch (policy.kind()) {
    case PolicyKind::kFixedGrid: {
      const double h = policy.grid_step();
      for (std::size_t k = 1;; ++k) {
        const double t = static_cast<double>(k) * h;
        if (t > horizon * (1.0 + 1e-12)) break;
        times.push_back(std::min(t, horizon));
      }
      break;
    }
    case PolicyKind::kPoisson: {
      const double rate = policy.poisson_rate();
      double t = 0.0;
      for (;;) {
        t += -std::log1p(-rng.uniform()) / rate;
        if (t > horizon) break;
        times.push_back(t);
      }
      break;
    }
    case PolicyKind::kCox: {
      // Thinning against the largest intensity.
      const Vector& n = policy.cox_intensity();
      const double n_max = n.maxCoeff();
      double t = 0.0;
      for (;;) {
        t += -std::log1p(-rng.uniform()) / n_max;
        if (t > horizon) break;
        const double accept = n[path.state_at(t)] / n_max;
        if (rng.uniform() < accept) times.push_back(t);
      }
      break;
    }
  }
  return times;
}

std::vector<Tick> simulate_ticks(const ChainPath& path, const MarketModel& model,
                                 std::span<const double> arrivals, std::uint64_t seed) {
  // Only m and s2 matter here, so the survival part is switched off.
  const SegmentRates rates(model, ObservationPolicy::poisson(1.0));
  Rng rng(derive_seed(seed, stream::kIncrements));
  std::normal_distribution<double> normal;

  std::vector<Tick> ticks;
  ticks.reserve(arrivals.size() + 1);
  ticks.push_back({0.0, model.x0()});

  const auto& jumps = path.jump_times();
  const auto& states = path.states();
  std::size_t seg = 0;
  double prev = 0.0;
  for (const double t : arrivals) {
    if (!(t > prev) || t > path.horizon()) {
      throw InvalidInput("arrival times must be increasing and inside the path horizon");
    }
    SegmentAccumulator acc(rates);
    double left = prev;
    while (left < t) {
      while (seg < jumps.size() && jumps[seg] <= left) ++seg;
      const double right = seg < jumps.size() ? std::min(jumps[seg], t) : t;
      acc.add(states[seg], right - left);
      left = right;
    }
    const double increment = acc.m() + std::sqrt(acc.s2()) * normal(rng);
    ticks.push_back({t, ticks.back().logprice + increment});
    prev = t;
  }
  return ticks;
}

SimOutput simulate(const VolatilityChain& chain, const MarketModel& model,
                   const ObservationPolicy& policy, double horizon, std::uint64_t seed) {
  if (model.size() != chain.size()) throw InvalidModel("market model and chain sizes differ");
  policy.check_dimension(chain.size());
  ChainPath path = simulate_chain(chain, horizon, seed);
  const std::vector<double> arrivals = simulate_arrivals(path, policy, seed);
  std::vector<Tick> ticks = simulate_ticks(path, model, arrivals, seed);
  std::vector<int> truth;
  truth.reserve(ticks.size());
  for (const Tick& tick : ticks) truth.push_back(path.state_at(tick.time));
  return SimOutput{std::move(path), std::move(ticks), std::move(truth)};
}

}  // namespace volfilter
