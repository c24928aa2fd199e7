#include "volfilter/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "volfilter/errors.hpp"

namespace volfilter {

namespace {

constexpr double kRowSumTolerance = 1e-12;

std::string index_label(Eigen::Index i) { return std::to_string(i + 1); }

bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace

VolatilityChain::VolatilityChain(Vector states, Matrix intensity, Vector initial_law)
    : states_(std::move(states)),
      intensity_(std::move(intensity)),
      initial_law_(std::move(initial_law)) {
  const Eigen::Index m = states_.size();
  if (m < 1) throw InvalidModel("chain needs at least one state");
  if (intensity_.rows() != m || intensity_.cols() != m) {
    throw InvalidModel("intensity matrix must be " + std::to_string(m) + "x" + std::to_string(m));
  }
  if (initial_law_.size() != m) throw InvalidModel("initial law length must equal state count");
  if (!states_.allFinite() || !all_finite(intensity_) || !initial_law_.allFinite()) {
    throw InvalidModel("chain contains non-finite values");
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i != j && intensity_(j, i) < 0.0) {
        throw InvalidModel("intensity row " + index_label(j) + " has a negative off-diagonal entry");
      }
    }
    if (std::abs(intensity_.row(j).sum()) > kRowSumTolerance) {
      throw InvalidModel("intensity row " + index_label(j) + " does not sum to zero");
    }
  }
  if ((initial_law_.array() < 0.0).any()) throw InvalidModel("initial law has negative entries");
  if (std::abs(initial_law_.sum() - 1.0) > kRowSumTolerance) {
    throw InvalidModel("initial law does not sum to one");
  }
}

MarketModel::MarketModel(Vector drift, Vector vol, double x0, double vol_floor)
    : drift_(std::move(drift)), vol_(std::move(vol)), x0_(x0), vol_floor_(vol_floor) {
  if (!(vol_floor_ > 0.0)) throw InvalidModel("volatility floor must be positive");
  if (drift_.size() != vol_.size()) throw InvalidModel("drift and vol lengths differ");
  if (drift_.size() < 1) throw InvalidModel("market model needs at least one state");
  if (!drift_.allFinite() || !vol_.allFinite() || !std::isfinite(x0_)) {
    throw InvalidModel("market model contains non-finite values");
  }
  for (Eigen::Index i = 0; i < vol_.size(); ++i) {
    if (!(vol_[i] >= vol_floor_)) {
      throw InvalidModel("vol " + index_label(i) + " is below the floor " + std::to_string(vol_floor_));
    }
  }
}

double MarketModel::mean_rate(std::size_t i) const {
  const auto k = static_cast<Eigen::Index>(i);
  return drift_[k] - 0.5 * vol_[k] * vol_[k];
}

double MarketModel::variance_rate(std::size_t i) const {
  const auto k = static_cast<Eigen::Index>(i);
  return vol_[k] * vol_[k];
}

ObservationPolicy ObservationPolicy::cox(Vector intensity) {
  if (intensity.size() < 1) throw InvalidModel("Cox intensity vector is empty");
  for (Eigen::Index i = 0; i < intensity.size(); ++i) {
    if (!(intensity[i] > 0.0) || !std::isfinite(intensity[i])) {
      throw InvalidModel("Cox intensity " + index_label(i) + " must be positive");
    }
  }
  return ObservationPolicy(CoxArrivals{std::move(intensity)});
}

ObservationPolicy ObservationPolicy::poisson(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidModel("Poisson rate must be positive");
  return ObservationPolicy(PoissonArrivals{rate});
}

ObservationPolicy ObservationPolicy::fixed_grid(double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidModel("grid step must be positive");
  return ObservationPolicy(FixedGridArrivals{step});
}

PolicyKind ObservationPolicy::kind() const {
  switch (variant_.index()) {
    case 0:
      return PolicyKind::kCox;
    case 1:
      return PolicyKind::kPoisson;
    default:
      return PolicyKind::kFixedGrid;
  }
}

std::string_view ObservationPolicy::name() const {
  switch (kind()) {
    case PolicyKind::kCox:
      return "cox";
    case PolicyKind::kPoisson:
      return "poisson";
    case PolicyKind::kFixedGrid:
      return "fixed_grid";
  }
  return "";
}

Vector ObservationPolicy::survival_rates(std::size_t num_states) const {
  if (kind() == PolicyKind::kCox) return cox_intensity();
  return Vector::Zero(static_cast<Eigen::Index>(num_states));
}

void ObservationPolicy::check_dimension(std::size_t num_states) const {
  if (kind() == PolicyKind::kCox &&
      cox_intensity().size() != static_cast<Eigen::Index>(num_states)) {
    throw InvalidModel("Cox intensity length must equal state count");
  }
}

ChainPath::ChainPath(std::vector<double> jump_times, std::vector<int> states, double horizon)
    : jump_times_(std::move(jump_times)), states_(std::move(states)), horizon_(horizon) {
  if (!(horizon_ > 0.0)) throw InvalidPath("path horizon must be positive");
  if (states_.size() != jump_times_.size() + 1) {
    throw InvalidPath("path needs exactly one more state than jumps");
  }
  double prev = 0.0;
  for (std::size_t k = 0; k < jump_times_.size(); ++k) {
    if (!(jump_times_[k] > prev) || !(jump_times_[k] < horizon_)) {
      throw InvalidPath("jump times must be strictly increasing inside (0, horizon)");
    }
    if (states_[k] == states_[k + 1]) throw InvalidPath("consecutive path states must differ");
    prev = jump_times_[k];
  }
}

int ChainPath::state_at(double t) const {
  const auto it = std::upper_bound(jump_times_.begin(), jump_times_.end(), t);
  return states_[static_cast<std::size_t>(it - jump_times_.begin())];
}

SegmentRates::SegmentRates(const MarketModel& model, const ObservationPolicy& policy) {
  const std::size_t m = model.size();
  mean.resize(static_cast<Eigen::Index>(m));
  variance.resize(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    mean[static_cast<Eigen::Index>(i)] = model.mean_rate(i);
    variance[static_cast<Eigen::Index>(i)] = model.variance_rate(i);
  }
  survival = policy.survival_rates(m);
}

PathSegmentStats SegmentAccumulator::stats() const { return {m_, s2_, std::exp(-hazard_)}; }

Matrix transition_matrix(const VolatilityChain& chain, double t) {
  return transition_matrix(chain.intensity(), t);
}

Matrix transition_matrix(const Matrix& intensity, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("transition time must be >= 0");
  if (!all_finite(intensity)) throw InvalidModel("intensity matrix is not finite");
  const Eigen::Index m = intensity.rows();
  if (t == 0.0) return Matrix::Identity(m, m);
  Matrix p = (t * intensity).exp();
  if (!all_finite(p)) throw InvalidModel("transition matrix is not finite");
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) p(j, i) = std::max(p(j, i), 0.0);
    p.row(j) /= p.row(j).sum();
  }
  return p;
}

Matrix killed_transition_matrix(const Matrix& intensity, const Vector& rates, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("transition time must be >= 0");
  const Eigen::Index m = intensity.rows();
  if (t == 0.0) return Matrix::Identity(m, m);
  Matrix generator = intensity;
  generator.diagonal() -= rates;
  Matrix q = (t * generator).exp();
  if (!all_finite(q)) throw InvalidModel("killed transition matrix is not finite");
  return q.cwiseMax(0.0);
}

double log_increment_log_density(const PathSegmentStats& stats, double y) {
  if (!(stats.s2 > 0.0) || !std::isfinite(stats.s2) || !std::isfinite(stats.m)) {
    throw InvalidStats("segment variance must be positive and finite");
  }
  const double d = y - stats.m;
  return -0.5 * (std::log(2.0 * std::numbers::pi * stats.s2) + d * d / stats.s2);
}

double log_increment_density(const PathSegmentStats& stats, double y) {
  return std::exp(log_increment_log_density(stats, y));
}

PathSegmentStats segment_stats(const ChainPath& path, double s, double t,
                               const MarketModel& model, const ObservationPolicy& policy) {
  if (!(s >= 0.0) || !(t >= s) || !(t <= path.horizon())) {
    throw InvalidPath("segment [s, t] is not covered by the path");
  }
  const SegmentRates rates(model, policy);
  SegmentAccumulator acc(rates);
  const auto& jumps = path.jump_times();
  const auto& states = path.states();
  double left = s;
  std::size_t k = static_cast<std::size_t>(
      std::upper_bound(jumps.begin(), jumps.end(), s) - jumps.begin());
  while (left < t) {
    const double right = k < jumps.size() ? std::min(jumps[k], t) : t;
    acc.add(states[k], right - left);
    left = right;
    ++k;
  }
  return acc.stats();
}

std::uint64_t model_fingerprint(const VolatilityChain& chain, const MarketModel& model,
                                const ObservationPolicy& policy) {
  // FNV-1a over the bit patterns; the prior and x0 do not affect tables.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  auto mix_d = [&mix](double v) { mix(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); };
  mix(chain.size());
  for (Eigen::Index i = 0; i < chain.states().size(); ++i) mix_d(chain.states()[i]);
  for (Eigen::Index j = 0; j < chain.intensity().rows(); ++j) {
    for (Eigen::Index i = 0; i < chain.intensity().cols(); ++i) mix_d(chain.intensity()(j, i));
  }
  for (Eigen::Index i = 0; i < model.drift().size(); ++i) mix_d(model.drift()[i]);
  for (Eigen::Index i = 0; i < model.vol().size(); ++i) mix_d(model.vol()[i]);
  mix(static_cast<std::uint64_t>(policy.kind()));
  switch (policy.kind()) {
    case PolicyKind::kCox:
      for (Eigen::Index i = 0; i < policy.cox_intensity().size(); ++i) {
        mix_d(policy.cox_intensity()[i]);
      }
      break;
    case PolicyKind::kPoisson:
      mix_d(policy.poisson_rate());
      break;
    case PolicyKind::kFixedGrid:
      mix_d(policy.grid_step());
      break;
  }
  return h;
}

}  // namespace volfilter
