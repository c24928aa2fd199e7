#pragma once

// Domain types for the hidden volatility chain, the conditionally Gaussian
// price model and the observation-time policies, plus the elementary
// densities and transition matrices every other module builds on.

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace volfilter {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Hidden finite-state continuous-time Markov chain.
///
/// `intensity(j, i)` is the jump rate from state j to state i; rows sum to
/// zero. `initial_law` is the distribution of the state at time 0.
class VolatilityChain {
 public:
  VolatilityChain(Vector states, Matrix intensity, Vector initial_law);

  std::size_t size() const { return static_cast<std::size_t>(states_.size()); }
  const Vector& states() const { return states_; }
  const Matrix& intensity() const { return intensity_; }
  const Vector& initial_law() const { return initial_law_; }
  double exit_rate(std::size_t i) const {
    return -intensity_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
  }

 private:
  Vector states_;
  Matrix intensity_;
  Vector initial_law_;
};

/// Per-state drift r_i and volatility v_i of the log price, and the initial
/// log price. Log increments over a segment in state i are Gaussian with mean
/// (r_i - v_i^2 / 2) * len and variance v_i^2 * len.
class MarketModel {
 public:
  static constexpr double kDefaultVolFloor = 1e-6;

  MarketModel(Vector drift, Vector vol, double x0, double vol_floor = kDefaultVolFloor);

  std::size_t size() const { return static_cast<std::size_t>(drift_.size()); }
  const Vector& drift() const { return drift_; }
  const Vector& vol() const { return vol_; }
  double x0() const { return x0_; }
  double vol_floor() const { return vol_floor_; }

  double mean_rate(std::size_t i) const;
  double variance_rate(std::size_t i) const;

 private:
  Vector drift_;
  Vector vol_;
  double x0_;
  double vol_floor_;
};

enum class PolicyKind { kCox, kPoisson, kFixedGrid };

struct CoxArrivals {
  Vector intensity;  // n_i per state
};

struct PoissonArrivals {
  double rate;
};

struct FixedGridArrivals {
  double step;
};

/// How observation times arise.
class ObservationPolicy {
 public:
  static ObservationPolicy cox(Vector intensity);
  static ObservationPolicy poisson(double rate);
  static ObservationPolicy fixed_grid(double step);

  PolicyKind kind() const;
  std::string_view name() const;

  const Vector& cox_intensity() const { return std::get<CoxArrivals>(variant_).intensity; }
  double poisson_rate() const { return std::get<PoissonArrivals>(variant_).rate; }
  double grid_step() const { return std::get<FixedGridArrivals>(variant_).step; }

  /// Rates entering the survival weight exp(-int n(theta_u) du): the Cox
  /// intensities, zero for Poisson and fixed-grid observation.
  Vector survival_rates(std::size_t num_states) const;

  /// Checks the policy dimension against the chain.
  void check_dimension(std::size_t num_states) const;

 private:
  explicit ObservationPolicy(std::variant<CoxArrivals, PoissonArrivals, FixedGridArrivals> v)
      : variant_(std::move(v)) {}

  std::variant<CoxArrivals, PoissonArrivals, FixedGridArrivals> variant_;
};

/// Conditional mean and variance of a log increment given the chain path, and
/// the survival weight exp(-int n) over the same segment.
struct PathSegmentStats {
  double m = 0.0;
  double s2 = 0.0;
  double w = 1.0;

  /// Stats over [s, u] followed by [u, t].
  PathSegmentStats then(const PathSegmentStats& next) const {
    return {m + next.m, s2 + next.s2, w * next.w};
  }
};

struct Tick {
  double time = 0.0;
  double logprice = 0.0;
};

/// Piecewise-constant realization of the chain on [0, horizon].
/// `states[k]` holds on [jump_times[k-1], jump_times[k]), with an implicit
/// jump time 0 in front.
class ChainPath {
 public:
  ChainPath(std::vector<double> jump_times, std::vector<int> states, double horizon);

  const std::vector<double>& jump_times() const { return jump_times_; }
  const std::vector<int>& states() const { return states_; }
  double horizon() const { return horizon_; }

  int state_at(double t) const;

 private:
  std::vector<double> jump_times_;
  std::vector<int> states_;
  double horizon_;
};

/// Per-state rates used to accumulate segment stats incrementally.
struct SegmentRates {
  Vector mean;      // r_i - v_i^2 / 2
  Vector variance;  // v_i^2
  Vector survival;  // n_i (Cox) or 0

  SegmentRates(const MarketModel& model, const ObservationPolicy& policy);
};

/// Running sums of segment stats; the survival weight is kept in log form so
/// long segments do not underflow before the end.
class SegmentAccumulator {
 public:
  explicit SegmentAccumulator(const SegmentRates& rates) : rates_(&rates) {}

  void add(int state, double duration) {
    m_ += rates_->mean[state] * duration;
    s2_ += rates_->variance[state] * duration;
    hazard_ += rates_->survival[state] * duration;
  }
  void reset() { m_ = s2_ = hazard_ = 0.0; }

  double m() const { return m_; }
  double s2() const { return s2_; }
  double hazard() const { return hazard_; }
  PathSegmentStats stats() const;

 private:
  const SegmentRates* rates_;
  double m_ = 0.0;
  double s2_ = 0.0;
  double hazard_ = 0.0;
};

/// P(t) = exp(t * Lambda); entry (j, i) is P(theta_t = a_i | theta_0 = a_j).
/// Rounding negatives are clamped to zero and rows renormalized.
Matrix transition_matrix(const VolatilityChain& chain, double t);
Matrix transition_matrix(const Matrix& intensity, double t);

/// exp(t * (Lambda - diag(rates))): entry (j, i) is
/// E[1{theta_t = a_i} exp(-int_0^t n(theta_u) du) | theta_0 = a_j].
Matrix killed_transition_matrix(const Matrix& intensity, const Vector& rates, double t);

/// Gaussian density of a log increment y given segment stats.
double log_increment_density(const PathSegmentStats& stats, double y);

/// Log of the same density; used where products of densities underflow.
double log_increment_log_density(const PathSegmentStats& stats, double y);

/// Exact segment sums over [s, t] of a piecewise-constant path.
PathSegmentStats segment_stats(const ChainPath& path, double s, double t,
                               const MarketModel& model, const ObservationPolicy& policy);

/// Stable 64-bit fingerprint of everything a structure table depends on.
std::uint64_t model_fingerprint(const VolatilityChain& chain, const MarketModel& model,
                                const ObservationPolicy& policy);

}  // namespace volfilter
