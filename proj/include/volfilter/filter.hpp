#pragma once

// Online chain filter: a Bayes update at every tick and a deterministic
// Kolmogorov-type propagation between ticks.
//
// Between ticks (Cox arrivals) the posterior follows
//   d pi_i = sum_j lambda(a_j, a_i) pi_j dt + Dbar pi_i dt + D_i dt
// with D_i = -n_i occ_i(u) / tail(u), Dbar = sum_l n_l occ_l(u) / tail(u),
// u = t - tau_k and occ, tail from the ArrivalProfile of the last tick.
// Poisson and fixed-grid arrivals reduce this to pi(t) = P(u)^T pi(tau_k).

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volfilter/model.hpp"
#include "volfilter/structure_table.hpp"

namespace volfilter {

/// Probability vector over chain states.
struct Posterior {
  Vector pi;

  /// Clamps rounding negatives, renormalizes; throws NumericError if no
  /// mass is left or entries are not finite.
  static Posterior normalized(Vector v);
};

enum class PointKind { kTick, kProbe };

struct TrajectoryPoint {
  double time = 0.0;
  PointKind kind = PointKind::kTick;
  Vector pi;
};

using Trajectory = std::vector<TrajectoryPoint>;

struct FilterOptions {
  double rk4_step = 0.0;  // 0 selects default_rk4_step
  bool degenerate_fallback = true;
};

struct FilterWarning {
  double time = 0.0;
  std::string message;
};

struct FilterDiagnostics {
  std::size_t rk4_steps = 0;
  std::size_t fallbacks = 0;
  // max over field evaluations of |sum_i D_i + Dbar| / |Dbar| (absolute when
  // both are below 1e-14)
  double max_conservation_residual = 0.0;
  // max over field evaluations of |sum_i F_i(pi)|
  double max_field_sum = 0.0;
};

/// Terms of the between-tick correction at offset u from the last tick.
struct CorrectionTerms {
  Vector d;          // D_i
  double dbar = 0.0; // Dbar
  bool active = true;  // false when the tail mass is degenerate
};

CorrectionTerms correction_terms(const ArrivalProfile& profile, const StructureTable& table,
                                 const Vector& anchor, double u);

/// 1e-3 times the shortest characteristic time (inverse of the largest jump
/// or arrival rate), capped at 1e-3.
double default_rk4_step(const VolatilityChain& chain, const ObservationPolicy& policy);

class FilterState {
 public:
  /// Posterior starts at the chain's initial law, anchored at (0, x0).
  static FilterState init(const VolatilityChain& chain, const MarketModel& model,
                          const ObservationPolicy& policy,
                          std::shared_ptr<const StructureTable> table, FilterOptions options = {});

  const Posterior& posterior() const { return posterior_; }
  /// Posterior at the last tick.
  const Posterior& anchor() const { return anchor_; }
  const Tick& last_tick() const { return last_tick_; }
  double clock() const { return clock_; }
  double rk4_step() const { return rk4_step_; }
  const ObservationPolicy& policy() const { return policy_; }
  const StructureTable& table() const { return *table_; }
  const std::vector<FilterWarning>& warnings() const { return warnings_; }
  const FilterDiagnostics& diagnostics() const { return diagnostics_; }

  /// Bayes update with the next tick; resets the clock to the tick time.
  Posterior tick_update(const Tick& tick);

  /// Moves the posterior forward to time t (no new tick before t).
  Posterior propagate(double t);

  /// Replaces the anchor log price; used when the tick stream starts with its
  /// own time-0 observation.
  void reanchor_logprice(double logprice);

 private:
  FilterState(const VolatilityChain& chain, ObservationPolicy policy,
              std::shared_ptr<const StructureTable> table, FilterOptions options, Posterior prior,
              Tick start);

  void reset_profile();
  Vector jump_correction() const;
  Vector field(double s, const Vector& pi);

  Matrix intensity_;
  ObservationPolicy policy_;
  std::shared_ptr<const StructureTable> table_;
  FilterOptions options_;
  double rk4_step_;
  Posterior posterior_;
  Posterior anchor_;
  Tick last_tick_;
  double clock_;
  std::optional<ArrivalProfile> profile_;
  bool correction_warned_ = false;
  std::vector<FilterWarning> warnings_;
  FilterDiagnostics diagnostics_;
};

/// Runs the filter over time-sorted ticks. The first row is the posterior at
/// the anchor (a leading tick at the anchor time is absorbed into it). With no
/// probes only tick updates are performed; probes in between ticks are filled
/// by propagation.
Trajectory run(FilterState& state, std::span<const Tick> ticks,
               std::span<const double> probe_times = {});

/// Total-variation distance between two probability vectors.
double total_variation(const Vector& a, const Vector& b);

}  // namespace volfilter
