#include "volfilter/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "volfilter/errors.hpp"
#include "volfilter/parallel.hpp"
#include "volfilter/rng.hpp"
#include "volfilter/simulator.hpp"

namespace volfilter {

namespace {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct SegmentSums {
  double m = 0.0;
  double s2 = 0.0;
  double hazard = 0.0;
};

}  // namespace

ParticleCloud::ParticleCloud(std::vector<int> states, std::vector<double> log_weights)
    : states_(std::move(states)), log_weights_(std::move(log_weights)) {
  if (states_.size() != log_weights_.size()) throw InvalidInput("particle arrays differ in length");
  if (states_.empty()) throw InvalidInput("particle cloud is empty");
}

Vector ParticleCloud::posterior(std::size_t num_states,
                                std::span<const double> extra_log_weights) const {
  const bool extra = !extra_log_weights.empty();
  if (extra && extra_log_weights.size() != size()) throw InvalidInput("extra weights length mismatch");
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < size(); ++p) {
    top = std::max(top, log_weights_[p] + (extra ? extra_log_weights[p] : 0.0));
  }
  if (!std::isfinite(top)) throw ParticleCollapse("all particle weights vanished");
  std::vector<CompensatedSum> by_state(num_states);
  CompensatedSum total;
  for (std::size_t p = 0; p < size(); ++p) {
    const double w = std::exp(log_weights_[p] + (extra ? extra_log_weights[p] : 0.0) - top);
    by_state[static_cast<std::size_t>(states_[p])].add(w);
    total.add(w);
  }
  Vector pi(static_cast<Eigen::Index>(num_states));
  for (std::size_t i = 0; i < num_states; ++i) {
    pi[static_cast<Eigen::Index>(i)] = by_state[i].value() / total.value();
  }
  return pi;
}

void ParticleCloud::renormalize() {
  double top = -std::numeric_limits<double>::infinity();
  for (const double lw : log_weights_) {
    if (!std::isnan(lw)) top = std::max(top, lw);
  }
  if (!std::isfinite(top)) {
    throw ParticleCollapse("all " + std::to_string(size()) + " particle weights vanished");
  }
  for (double& lw : log_weights_) {
    lw = std::isnan(lw) ? -std::numeric_limits<double>::infinity() : lw - top;
  }
}

double ParticleCloud::effective_sample_size() const {
  CompensatedSum s1;
  CompensatedSum s2;
  for (const double lw : log_weights_) {
    const double w = std::exp(lw);
    s1.add(w);
    s2.add(w * w);
  }
  return s1.value() * s1.value() / s2.value();
}

void ParticleCloud::resample_systematic(double u) {
  const std::size_t n = size();
  std::vector<double> cdf(n);
  CompensatedSum acc;
  for (std::size_t p = 0; p < n; ++p) {
    acc.add(std::exp(log_weights_[p]));
    cdf[p] = acc.value();
  }
  const double total = cdf.back();
  std::vector<int> next(n);
  std::size_t src = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double target = (static_cast<double>(p) + u) / static_cast<double>(n) * total;
    while (src + 1 < n && cdf[src] <= target) ++src;
    next[p] = states_[src];
  }
  states_ = std::move(next);
  std::fill(log_weights_.begin(), log_weights_.end(), 0.0);
}

OracleResult pf_run(const VolatilityChain& chain, const MarketModel& model,
                    const ObservationPolicy& policy, std::span<const Tick> ticks,
                    std::span<const double> probe_times, const OracleOptions& options) {
  if (options.particles < 100) throw InvalidInput("particle oracle needs at least 100 particles");
  if (model.size() != chain.size()) throw InvalidModel("market model and chain sizes differ");
  policy.check_dimension(chain.size());
  for (std::size_t k = 1; k < ticks.size(); ++k) {
    if (!(ticks[k].time > ticks[k - 1].time)) throw InvalidInput("ticks must be time-sorted");
  }
  for (std::size_t k = 1; k < probe_times.size(); ++k) {
    if (!(probe_times[k] >= probe_times[k - 1])) throw InvalidInput("probe times must be sorted");
  }

  const std::size_t m = chain.size();
  const std::size_t n = options.particles;
  const ChainSampler sampler(chain);
  const SegmentRates rates(model, policy);
  const bool cox = policy.kind() == PolicyKind::kCox;

  std::vector<int> init_states(n);
  for (std::size_t p = 0; p < n; ++p) {
    Rng rng(derive_seed(options.seed, stream::kParticleInit, p));
    init_states[p] = sampler.initial(rng);
  }
  ParticleCloud cloud(std::move(init_states), std::vector<double>(n, 0.0));
  std::vector<SegmentSums> sums(n);
  std::vector<double> extra(n);

  OracleResult result;
  result.diagnostics.min_ess = static_cast<double>(n);
  Tick last{0.0, model.x0()};
  std::size_t next = 0;
  if (!ticks.empty() && ticks[0].time == 0.0) {
    last.logprice = ticks[0].logprice;
    next = 1;
  }
  result.trajectory.push_back({0.0, PointKind::kTick, cloud.posterior(m)});

  std::uint64_t move_index = 0;
  double now = last.time;
  auto advance_to = [&](double target) {
    const double span = target - now;
    const std::uint64_t move = move_index++;
    if (span <= 0.0) return;
    auto& states = cloud.mutable_states();
    parallel_for(n, options.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        Rng rng(derive_seed(options.seed, stream::kParticleMove, move, p));
        SegmentSums& acc = sums[p];
        states[p] = sampler.advance(states[p], span, rng, [&](int s, double len) {
          acc.m += rates.mean[s] * len;
          acc.s2 += rates.variance[s] * len;
          acc.hazard += rates.survival[s] * len;
        });
      }
    });
    now = target;
  };

  std::size_t probe = 0;
  while (probe < probe_times.size() && probe_times[probe] <= now) ++probe;
  std::uint64_t tick_index = 0;
  for (; next < ticks.size(); ++next, ++tick_index) {
    const Tick& tick = ticks[next];
    std::fill(sums.begin(), sums.end(), SegmentSums{});
    for (; probe < probe_times.size() && probe_times[probe] < tick.time; ++probe) {
      advance_to(probe_times[probe]);
      for (std::size_t p = 0; p < n; ++p) extra[p] = cox ? -sums[p].hazard : 0.0;
      result.trajectory.push_back({probe_times[probe], PointKind::kProbe, cloud.posterior(m, extra)});
    }
    while (probe < probe_times.size() && probe_times[probe] == tick.time) ++probe;
    advance_to(tick.time);

    const double dz = tick.logprice - last.logprice;
    auto& log_weights = cloud.mutable_log_weights();
    const auto& states = cloud.states();
    parallel_for(n, options.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        double lw = log_increment_log_density({sums[p].m, sums[p].s2, 1.0}, dz);
        if (cox) lw += std::log(rates.survival[states[p]]) - sums[p].hazard;
        log_weights[p] += lw;
      }
    });
    cloud.renormalize();
    result.trajectory.push_back({tick.time, PointKind::kTick, cloud.posterior(m)});

    const double ess = cloud.effective_sample_size();
    result.diagnostics.min_ess = std::min(result.diagnostics.min_ess, ess);
    if (ess < options.ess_fraction * static_cast<double>(n)) {
      Rng rng(derive_seed(options.seed, stream::kResample, tick_index));
      cloud.resample_systematic(rng.uniform());
      ++result.diagnostics.resamples;
    }
    last = tick;
  }

  std::fill(sums.begin(), sums.end(), SegmentSums{});
  for (; probe < probe_times.size(); ++probe) {
    advance_to(probe_times[probe]);
    for (std::size_t p = 0; p < n; ++p) extra[p] = cox ? -sums[p].hazard : 0.0;
    result.trajectory.push_back({probe_times[probe], PointKind::kProbe, cloud.posterior(m, extra)});
  }
  return result;
}

}  // namespace volfilter
