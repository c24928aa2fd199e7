#include "volfilter/filter.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "volfilter/errors.hpp"

namespace volfilter {

namespace {

constexpr double kConservationTolerance = 1e-10;
constexpr double kConservationFloor = 1e-14;

}  // namespace

Posterior Posterior::normalized(Vector v) {
  if (!v.allFinite()) throw NumericError("posterior has non-finite entries");
  v = v.cwiseMax(0.0);
  const double total = v.sum();
  if (!(total > 0.0)) throw NumericError("posterior has no mass left");
  v /= total;
  return Posterior{std::move(v)};
}

double total_variation(const Vector& a, const Vector& b) {
  return 0.5 * (a - b).cwiseAbs().sum();
}

double default_rk4_step(const VolatilityChain& chain, const ObservationPolicy& policy) {
  double rate = 1.0;
  for (std::size_t i = 0; i < chain.size(); ++i) rate = std::max(rate, chain.exit_rate(i));
  if (policy.kind() == PolicyKind::kCox) rate = std::max(rate, policy.cox_intensity().maxCoeff());
  return 1e-3 / rate;
}

CorrectionTerms correction_terms(const ArrivalProfile& profile, const StructureTable& table,
                                 const Vector& anchor, double u) {
  const Vector& n = table.survival_rates();
  CorrectionTerms out;
  out.d = Vector::Zero(n.size());
  const Matrix qbar = eval_qbar_matrix(table, u);
  const Vector occupation = qbar.transpose() * anchor;
  const double tail = profile.tail_given(occupation);
  if (!(tail > 0.0) || !std::isfinite(tail)) {
    out.active = false;
    return out;
  }
  out.d = -(n.array() * occupation.array()).matrix() / tail;
  // Dbar summed in the other order (start state outermost) so the
  // conservation check compares two independent reductions.
  double dbar = 0.0;
  for (Eigen::Index j = 0; j < anchor.size(); ++j) dbar += anchor[j] * qbar.row(j).dot(n);
  out.dbar = dbar / tail;
  return out;
}

FilterState::FilterState(const VolatilityChain& chain, ObservationPolicy policy,
                         std::shared_ptr<const StructureTable> table, FilterOptions options,
                         Posterior prior, Tick start)
    : intensity_(chain.intensity()),
      policy_(std::move(policy)),
      table_(std::move(table)),
      options_(options),
      rk4_step_(options.rk4_step > 0.0 ? options.rk4_step : default_rk4_step(chain, policy_)),
      posterior_(prior),
      anchor_(std::move(prior)),
      last_tick_(start),
      clock_(start.time) {
  reset_profile();
}

FilterState FilterState::init(const VolatilityChain& chain, const MarketModel& model,
                              const ObservationPolicy& policy,
                              std::shared_ptr<const StructureTable> table, FilterOptions options) {
  if (!table) throw InvalidInput("filter needs a structure table");
  if (model.size() != chain.size()) throw InvalidModel("market model and chain sizes differ");
  policy.check_dimension(chain.size());
  if (table->model_hash() != model_fingerprint(chain, model, policy) ||
      table->policy() != policy.kind() || table->size() != chain.size()) {
    throw ModelHashMismatch("structure table was built for a different model");
  }
  if (options.rk4_step < 0.0 || !std::isfinite(options.rk4_step)) {
    throw InvalidInput("RK4 step must be positive");
  }
  return FilterState(chain, policy, std::move(table), options,
                     Posterior::normalized(chain.initial_law()), Tick{0.0, model.x0()});
}

void FilterState::reset_profile() {
  profile_.reset();
  correction_warned_ = false;
  if (policy_.kind() == PolicyKind::kCox) profile_.emplace(*table_, anchor_.pi);
}

void FilterState::reanchor_logprice(double logprice) {
  if (!std::isfinite(logprice)) throw InvalidInput("anchor log price must be finite");
  last_tick_.logprice = logprice;
}

Vector FilterState::jump_correction() const {
  // The atom term of the general update vanishes for all three policies:
  // Cox and Poisson compensators are continuous, and on a fixed grid the
  // atom term cancels against the forward-Kolmogorov prediction. A policy
  // with genuine atoms would have to supply it here.
  return Vector::Zero(anchor_.pi.size());
}

Posterior FilterState::tick_update(const Tick& tick) {
  if (!(tick.time > last_tick_.time) || !std::isfinite(tick.time) || !std::isfinite(tick.logprice)) {
    throw InvalidInput("ticks must be finite and strictly after the last tick");
  }
  double dt = tick.time - last_tick_.time;
  const double dz = tick.logprice - last_tick_.logprice;
  if (policy_.kind() == PolicyKind::kFixedGrid) {
    const double h = policy_.grid_step();
    if (std::abs(dt - h) > 1e-9 * std::max(1.0, h)) {
      throw InvalidInput("tick gap " + std::to_string(dt) + " does not match the grid step");
    }
    dt = h;
  }

  const Matrix q = eval_q_matrix(*table_, dt, dz);
  Vector likelihood = q.transpose() * anchor_.pi;
  if (policy_.kind() == PolicyKind::kCox) {
    likelihood = (likelihood.array() * policy_.cox_intensity().array()).matrix();
  }
  const Vector correction = jump_correction();
  assert(correction.cwiseAbs().maxCoeff() == 0.0);

  const double total = likelihood.sum();
  if (total > 0.0 && std::isfinite(total)) {
    posterior_ = Posterior::normalized(likelihood / total - correction);
  } else {
    if (!options_.degenerate_fallback) {
      throw NumericError("tick at t = " + std::to_string(tick.time) +
                         " has zero likelihood under every state");
    }
    posterior_ = Posterior::normalized(transition_matrix(intensity_, dt).transpose() * anchor_.pi);
    warnings_.push_back({tick.time, "degenerate likelihood (log increment " + std::to_string(dz) +
                                        "); used prior propagation"});
    ++diagnostics_.fallbacks;
  }
  anchor_ = posterior_;
  last_tick_ = tick;
  clock_ = tick.time;
  reset_profile();
  return posterior_;
}

Vector FilterState::field(double s, const Vector& pi) {
  const double u = s - last_tick_.time;
  Vector f = intensity_.transpose() * pi;
  CorrectionTerms terms = correction_terms(*profile_, *table_, anchor_.pi, u);
  if (!terms.active) {
    if (!correction_warned_) {
      warnings_.push_back({s, "next-arrival tail mass vanished; continuing with Kolmogorov terms only"});
      correction_warned_ = true;
    }
    return f;
  }
  const double dsum = terms.d.sum();
  const double residual = std::abs(dsum + terms.dbar);
  const double scale = std::abs(terms.dbar);
  const double rel = (scale < kConservationFloor && std::abs(dsum) < kConservationFloor)
                         ? residual
                         : residual / scale;
  diagnostics_.max_conservation_residual = std::max(diagnostics_.max_conservation_residual, rel);
  if (!(rel <= kConservationTolerance)) {
    throw NumericError("correction terms violate sum_i D_i = -Dbar at t = " + std::to_string(s));
  }
  f += terms.dbar * pi + terms.d;
  diagnostics_.max_field_sum = std::max(diagnostics_.max_field_sum, std::abs(f.sum()));
  return f;
}

Posterior FilterState::propagate(double t) {
  if (!std::isfinite(t) || t < clock_) throw InvalidInput("cannot propagate backwards in time");
  const double u_end = t - last_tick_.time;
  if (u_end > table_->grid().t_max * (1.0 + 1e-12)) {
    throw HorizonExceeded("propagation " + std::to_string(u_end) +
                          " past the last tick exceeds the table horizon");
  }
  if (t == clock_) return posterior_;

  if (policy_.kind() != PolicyKind::kCox) {
    posterior_ = Posterior::normalized(transition_matrix(intensity_, u_end).transpose() * anchor_.pi);
    clock_ = t;
    return posterior_;
  }

  const double span = t - clock_;
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(span / rk4_step_ - 1e-9)));
  const double h = span / static_cast<double>(steps);
  Vector pi = posterior_.pi;
  for (std::size_t n = 0; n < steps; ++n) {
    const double s = clock_ + static_cast<double>(n) * h;
    const Vector k1 = field(s, pi);
    const Vector k2 = field(s + 0.5 * h, pi + 0.5 * h * k1);
    const Vector k3 = field(s + 0.5 * h, pi + 0.5 * h * k2);
    const Vector k4 = field(s + h, pi + h * k3);
    pi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  diagnostics_.rk4_steps += steps;
  posterior_ = Posterior::normalized(std::move(pi));
  clock_ = t;
  return posterior_;
}

Trajectory run(FilterState& state, std::span<const Tick> ticks, std::span<const double> probe_times) {
  for (std::size_t k = 1; k < ticks.size(); ++k) {
    if (!(ticks[k].time > ticks[k - 1].time)) throw InvalidInput("ticks must be time-sorted");
  }
  for (std::size_t k = 1; k < probe_times.size(); ++k) {
    if (!(probe_times[k] >= probe_times[k - 1])) throw InvalidInput("probe times must be sorted");
  }
  Trajectory out;
  std::size_t next = 0;
  if (!ticks.empty() && ticks[0].time == state.last_tick().time && state.clock() == ticks[0].time) {
    state.reanchor_logprice(ticks[0].logprice);
    next = 1;
  }
  out.push_back({state.clock(), PointKind::kTick, state.posterior().pi});

  std::size_t p = 0;
  while (p < probe_times.size() && probe_times[p] <= state.clock()) ++p;
  for (; next < ticks.size(); ++next) {
    const Tick& tick = ticks[next];
    for (; p < probe_times.size() && probe_times[p] < tick.time; ++p) {
      out.push_back({probe_times[p], PointKind::kProbe, state.propagate(probe_times[p]).pi});
    }
    while (p < probe_times.size() && probe_times[p] == tick.time) ++p;
    out.push_back({tick.time, PointKind::kTick, state.tick_update(tick).pi});
  }
  for (; p < probe_times.size(); ++p) {
    out.push_back({probe_times[p], PointKind::kProbe, state.propagate(probe_times[p]).pi});
  }
  return out;
}

}  // namespace volfilter
