#pragma once

// Sequential Monte Carlo reference filter. Each particle carries an exact
// chain path; the weight of a particle over (tau_k, tau_{k+1}] is the
// Gaussian likelihood of the observed log increment given its path, times
// n(theta_{tau_{k+1}}) exp(-int n) for Cox arrivals. Nothing here touches the
// structure tables, so it serves as an independent check of the filter.

#include <cstdint>
#include <span>
#include <vector>

#include "volfilter/filter.hpp"
#include "volfilter/model.hpp"

namespace volfilter {

class ParticleCloud {
 public:
  ParticleCloud(std::vector<int> states, std::vector<double> log_weights);

  std::size_t size() const { return states_.size(); }
  const std::vector<int>& states() const { return states_; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  std::vector<int>& mutable_states() { return states_; }
  std::vector<double>& mutable_log_weights() { return log_weights_; }

  /// Weighted state histogram (compensated sums). `extra_log_weights`, when
  /// non-empty, is added to each particle's log weight first.
  Vector posterior(std::size_t num_states, std::span<const double> extra_log_weights = {}) const;

  /// Shifts log weights so the largest is zero. Throws ParticleCollapse when
  /// no particle has positive finite weight.
  void renormalize();

  double effective_sample_size() const;

  /// Systematic resampling with offset u in [0, 1); weights become equal.
  void resample_systematic(double u);

 private:
  std::vector<int> states_;
  std::vector<double> log_weights_;
};

struct OracleOptions {
  std::size_t particles = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  double ess_fraction = 0.5;
};

struct OracleDiagnostics {
  std::size_t resamples = 0;
  double min_ess = 0.0;
};

struct OracleResult {
  Trajectory trajectory;
  OracleDiagnostics diagnostics;
};

/// Same row convention as `run`: initial posterior first, then probes and
/// ticks in time order.
OracleResult pf_run(const VolatilityChain& chain, const MarketModel& model,
                    const ObservationPolicy& policy, std::span<const Tick> ticks,
                    std::span<const double> probe_times, const OracleOptions& options);

}  // namespace volfilter
