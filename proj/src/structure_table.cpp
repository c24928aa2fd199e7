#include "volfilter/structure_table.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "volfilter/errors.hpp"
#include "volfilter/parallel.hpp"
#include "volfilter/rng.hpp"
#include "volfilter/simulator.hpp"

namespace volfilter {

namespace {

constexpr double kWindowSigmas = 8.0;

// Per start-state accumulators, laid out [i][k][l] / [i][k].
struct Accumulators {
  Accumulators(std::size_t m, std::size_t n_t, std::size_t n_z)
      : n_t(n_t),
        n_z(n_z),
        sum(m * n_t * n_z, 0.0),
        sumsq(m * n_t * n_z, 0.0),
        outside(m * n_t, 0.0),
        counts(m * n_t, 0) {}

  std::size_t n_t;
  std::size_t n_z;
  std::vector<double> sum;
  std::vector<double> sumsq;
  std::vector<double> outside;
  std::vector<std::uint64_t> counts;  // paths that jumped at least once
};

double outside_mass(const GridSpec& grid, double m, double s2) {
  const double scale = std::sqrt(2.0 * s2);
  return 0.5 * std::erfc((m - grid.z_min) / scale) + 0.5 * std::erfc((grid.z_max - m) / scale);
}

// Adds mult * w * rho(z_l; m, s2) and its square on the z grid, restricted to
// m +/- 8 sigma. Neighbouring values come from the exact ratio recurrence of
// a Gaussian sampled on a uniform grid.
void add_gaussian(const GridSpec& grid, double* sum, double* sumsq, double m, double s2, double w,
                  double mult) {
  const double dz = grid.z_step();
  const double sigma = std::sqrt(s2);
  const auto last = static_cast<std::ptrdiff_t>(grid.n_z) - 1;
  const auto half = static_cast<std::ptrdiff_t>(std::ceil(kWindowSigmas * sigma / dz)) + 1;
  const double pos = (m - grid.z_min) / dz;
  if (pos < -static_cast<double>(half) || pos > static_cast<double>(last + half)) return;
  const auto center = static_cast<std::ptrdiff_t>(std::lround(pos));
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, center - half);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(last, center + half);
  if (lo > hi) return;
  const std::ptrdiff_t start = std::clamp(center, lo, hi);

  const double amp = w / std::sqrt(2.0 * std::numbers::pi * s2);
  const double d = grid.z_at(static_cast<std::size_t>(start)) - m;
  const double g0 = amp * std::exp(-0.5 * d * d / s2);
  const double c = std::exp(-dz * dz / s2);

  sum[start] += mult * g0;
  sumsq[start] += mult * g0 * g0;
  double g = g0;
  double r = std::exp(-(d * dz + 0.5 * dz * dz) / s2);
  for (std::ptrdiff_t l = start + 1; l <= hi; ++l) {
    g *= r;
    r *= c;
    sum[l] += mult * g;
    sumsq[l] += mult * g * g;
  }
  g = g0;
  r = std::exp((d * dz - 0.5 * dz * dz) / s2);
  for (std::ptrdiff_t l = start - 1; l >= lo; --l) {
    g *= r;
    r *= c;
    sum[l] += mult * g;
    sumsq[l] += mult * g * g;
  }
}

// Accumulates paths started in `start` for grid nodes [k_lo, k_hi). Every
// quantity is computed from prefix sums at jump times, so the result for a
// node does not depend on how nodes are split between threads.
void accumulate_nodes(const ChainSampler& sampler, const SegmentRates& rates,
                      const GridSpec& grid, int start, std::size_t k_lo, std::size_t k_hi,
                      Accumulators& acc) {
  std::vector<double> jumps;
  std::vector<int> states;
  std::vector<double> pm, ps2, ph;
  const std::size_t n_z = grid.n_z;
  const std::size_t n_t = grid.n_t;

  for (std::size_t path = 0; path < grid.n_paths; ++path) {
    Rng rng(derive_seed(grid.seed, stream::kTablePaths, static_cast<std::uint64_t>(start), path));
    jumps.clear();
    states.assign(1, start);
    double t = 0.0;
    int state = start;
    for (;;) {
      t += sampler.holding_time(state, rng);
      if (!(t < grid.t_max)) break;
      state = sampler.next(state, rng);
      jumps.push_back(t);
      states.push_back(state);
    }
    pm.assign(1, 0.0);
    ps2.assign(1, 0.0);
    ph.assign(1, 0.0);
    for (std::size_t s = 0; s < jumps.size(); ++s) {
      const double len = jumps[s] - (s == 0 ? 0.0 : jumps[s - 1]);
      pm.push_back(pm[s] + rates.mean[states[s]] * len);
      ps2.push_back(ps2[s] + rates.variance[states[s]] * len);
      ph.push_back(ph[s] + rates.survival[states[s]] * len);
    }

    std::size_t seg = 0;
    for (std::size_t k = k_lo; k < k_hi; ++k) {
      const double tk = grid.t_at(k);
      while (seg < jumps.size() && jumps[seg] <= tk) ++seg;
      if (seg == 0) continue;  // no jump yet: handled exactly at finalization
      const int here = states[seg];
      const double len = tk - jumps[seg - 1];
      const double m = pm[seg] + rates.mean[here] * len;
      const double s2 = ps2[seg] + rates.variance[here] * len;
      const double w = std::exp(-(ph[seg] + rates.survival[here] * len));
      const std::size_t row = static_cast<std::size_t>(here) * n_t + k;
      add_gaussian(grid, acc.sum.data() + row * n_z, acc.sumsq.data() + row * n_z, m, s2, w, 1.0);
      ++acc.counts[row];
      acc.outside[row] += w * outside_mass(grid, m, s2);
    }
  }

}

// exp(A) for the short steps between a node and its neighbour: Taylor when
// the norm is small, Eigen's scaling and squaring otherwise.
Matrix short_exp(const Matrix& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  if (norm > 1.0) return a.exp();
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix out = term;
  for (int p = 1; p < 30; ++p) {
    term = term * a / static_cast<double>(p);
    out += term;
    if (term.cwiseAbs().maxCoeff() <= 1e-17 * out.cwiseAbs().maxCoeff()) break;
  }
  return out;
}

struct Bracket {
  std::size_t k;
  double frac;
};

Bracket bracket_time(const GridSpec& grid, double dt) {
  if (!(dt >= 0.0) || !std::isfinite(dt)) throw InvalidInput("time offset must be >= 0");
  if (dt > grid.t_max * (1.0 + 1e-12)) {
    throw HorizonExceeded("time gap " + std::to_string(dt) + " exceeds table horizon " +
                          std::to_string(grid.t_max));
  }
  const double pos = dt / grid.t_step();
  const std::size_t k = std::min(static_cast<std::size_t>(pos), grid.n_t - 2);
  return {k, std::clamp(pos - static_cast<double>(k), 0.0, 1.0)};
}

}  // namespace

void GridSpec::validate() const {
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw InvalidInput("grid t_max must be positive");
  if (n_t < 2) throw InvalidInput("grid n_t must be at least 2");
  if (!(z_min < z_max) || !std::isfinite(z_min) || !std::isfinite(z_max)) {
    throw InvalidInput("grid needs z_min < z_max");
  }
  if (n_z < 2) throw InvalidInput("grid n_z must be at least 2");
  if (n_paths < 1) throw InvalidInput("grid n_paths must be at least 1");
}

std::pair<double, double> default_z_range(const MarketModel& model, double t_max) {
  const double sigma = model.vol().maxCoeff() * std::sqrt(t_max);
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    lo = std::min(lo, model.mean_rate(i) * t_max);
    hi = std::max(hi, model.mean_rate(i) * t_max);
  }
  return {lo - 8.0 * sigma, hi + 8.0 * sigma};
}

StructureTable::StructureTable(GridSpec grid, PolicyKind policy, std::uint64_t model_hash,
                               Matrix intensity, Vector survival_rates, Vector mean_rates,
                               std::vector<double> q,
                               std::vector<double> q_stderr, std::vector<double> qbar,
                               std::vector<double> qbar_stderr, std::vector<double> p,
                               std::vector<double> tail_budget)
    : grid_(grid),
      policy_(policy),
      model_hash_(model_hash),
      m_(static_cast<std::size_t>(intensity.rows())),
      intensity_(std::move(intensity)),
      survival_rates_(std::move(survival_rates)),
      mean_rates_(std::move(mean_rates)),
      q_(std::move(q)),
      q_stderr_(std::move(q_stderr)),
      qbar_(std::move(qbar)),
      qbar_stderr_(std::move(qbar_stderr)),
      p_(std::move(p)),
      tail_budget_(std::move(tail_budget)) {
  grid_.validate();
  const std::size_t n3 = m_ * m_ * grid_.n_t;
  const std::size_t n4 = n3 * grid_.n_z;
  if (m_ < 1 || intensity_.cols() != intensity_.rows() ||
      survival_rates_.size() != intensity_.rows() || mean_rates_.size() != intensity_.rows()) {
    throw InvalidInput("structure table generator has inconsistent dimensions");
  }
  if (q_.size() != n4 || q_stderr_.size() != n4 || qbar_.size() != n3 ||
      qbar_stderr_.size() != n3 || p_.size() != n3 || tail_budget_.size() != n3) {
    throw InvalidInput("structure table arrays do not match the grid");
  }
  killed_generator_ = intensity_;
  killed_generator_.diagonal() -= survival_rates_;
}

StructureTable build_table(const VolatilityChain& chain, const MarketModel& model,
                           const ObservationPolicy& policy, const GridSpec& grid,
                           const BuildOptions& options) {
  grid.validate();
  const std::size_t m = chain.size();
  if (model.size() != m) throw InvalidModel("market model and chain sizes differ");
  policy.check_dimension(m);
  const double entries = static_cast<double>(m) * static_cast<double>(m) *
                         static_cast<double>(grid.n_t) * static_cast<double>(grid.n_z);
  if (entries > static_cast<double>(options.max_entries)) {
    throw TableTooLarge("table needs " + std::to_string(static_cast<std::uint64_t>(entries)) +
                        " entries per array, cap is " + std::to_string(options.max_entries));
  }

  const std::size_t n_t = grid.n_t;
  const std::size_t n_z = grid.n_z;
  const std::size_t n3 = m * m * n_t;
  const Vector survival = policy.survival_rates(m);
  const SegmentRates rates(model, policy);
  const ChainSampler sampler(chain);

  std::vector<double> p(n3), qbar(n3), qbar_stderr(n3, 0.0), tail_budget(n3, 0.0);
  std::vector<double> q(n3 * n_z, 0.0), q_stderr(n3 * n_z, 0.0);
  auto i3 = [&](std::size_t j, std::size_t i, std::size_t k) { return (j * m + i) * n_t + k; };

  for (std::size_t k = 0; k < n_t; ++k) {
    const Matrix pk = transition_matrix(chain.intensity(), grid.t_at(k));
    const Matrix qk = killed_transition_matrix(chain.intensity(), survival, grid.t_at(k));
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < m; ++i) {
        const auto jj = static_cast<Eigen::Index>(j);
        const auto ii = static_cast<Eigen::Index>(i);
        p[i3(j, i, k)] = pk(jj, ii);
        qbar[i3(j, i, k)] = qk(jj, ii);
      }
    }
  }

  const double min_var_rate = rates.variance.minCoeff();
  for (std::size_t j = 0; j < m; ++j) {
    Accumulators acc(m, n_t, n_z);
    // Node 0 holds a point mass and is left at zero.
    parallel_for(n_t - 1, options.threads, [&](std::size_t b, std::size_t e) {
      accumulate_nodes(sampler, rates, grid, static_cast<int>(j), b + 1, e + 1, acc);
    });

    std::vector<double> stay_density(n_z);
    std::vector<double> unused(n_z);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 1; k < n_t; ++k) {
        const std::size_t row = i * n_t + k;
        const double tk = grid.t_at(k);
        // Paths that never left a_j have known probability and stats; only
        // the paths that jumped are estimated.
        double stay_prob = 0.0;
        double stay_budget = 0.0;
        std::fill(stay_density.begin(), stay_density.end(), 0.0);
        if (i == j) {
          const double sm = rates.mean[static_cast<Eigen::Index>(j)] * tk;
          const double ss2 = rates.variance[static_cast<Eigen::Index>(j)] * tk;
          const double sw = std::exp(-rates.survival[static_cast<Eigen::Index>(j)] * tk);
          stay_prob = std::min(std::exp(-chain.exit_rate(j) * tk), p[i3(j, i, k)]);
          add_gaussian(grid, stay_density.data(), unused.data(), sm, ss2, sw, 1.0);
          stay_budget = sw * outside_mass(grid, sm, ss2);
        }
        const double pk = std::max(0.0, p[i3(j, i, k)] - stay_prob);
        const std::uint64_t count = acc.counts[row];
        const double* s = acc.sum.data() + row * n_z;
        const double* ss = acc.sumsq.data() + row * n_z;
        double* qo = q.data() + i3(j, i, k) * n_z;
        double* se = q_stderr.data() + i3(j, i, k) * n_z;
        if (count >= 2) {
          const double n = static_cast<double>(count);
          for (std::size_t l = 0; l < n_z; ++l) {
            const double mean = s[l] / n;
            const double var = std::max(0.0, (ss[l] / n - mean * mean) * n / (n - 1.0));
            qo[l] = stay_prob * stay_density[l] + pk * mean;
            se[l] = pk * std::sqrt(var / n);
          }
          tail_budget[i3(j, i, k)] = stay_prob * stay_budget + pk * acc.outside[row] / n;
        } else {
          // Too few jumping paths to estimate anything: stand in a path that
          // spends half the gap in a_j and half in a_i, and report the largest
          // density any real path could contribute as the error.
          const auto ej = static_cast<Eigen::Index>(j);
          const auto ei = static_cast<Eigen::Index>(i);
          const double fm = 0.5 * (rates.mean[ej] + rates.mean[ei]) * tk;
          const double fs2 = 0.5 * (rates.variance[ej] + rates.variance[ei]) * tk;
          const double fw = std::exp(-0.5 * (rates.survival[ej] + rates.survival[ei]) * tk);
          std::vector<double> fallback(n_z, 0.0);
          add_gaussian(grid, fallback.data(), unused.data(), fm, fs2, fw, 1.0);
          const double bound = 1.0 / std::sqrt(2.0 * std::numbers::pi * min_var_rate * tk);
          for (std::size_t l = 0; l < n_z; ++l) {
            qo[l] = stay_prob * stay_density[l] + pk * fallback[l];
            se[l] = pk * bound;
          }
          tail_budget[i3(j, i, k)] = stay_prob * stay_budget + pk;
        }
      }
    }
  }

  return StructureTable(grid, policy.kind(), model_fingerprint(chain, model, policy),
                        chain.intensity(), survival, rates.mean, std::move(q), std::move(q_stderr),
                        std::move(qbar), std::move(qbar_stderr), std::move(p),
                        std::move(tail_budget));
}

Matrix eval_q_matrix(const StructureTable& table, double dt, double dz) {
  const GridSpec& grid = table.grid();
  if (!(dt > 0.0)) throw InvalidInput("q is only defined for positive time gaps");
  const Bracket tb = bracket_time(grid, dt);
  const std::size_t m = table.size();
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix out = Matrix::Zero(mm, mm);
  if (!std::isfinite(dz) || dz < grid.z_min || dz > grid.z_max) return out;

  // Node weights in t; node 0 (a point mass) is never read.
  std::size_t nodes[2] = {tb.k, tb.k + 1};
  double weights[2] = {1.0 - tb.frac, tb.frac};
  if (tb.k == 0) {
    weights[0] = 0.0;
    weights[1] = 1.0;
  }

  const double dz_step = grid.z_step();
  const Matrix qbar_dt = killed_transition_matrix(table.intensity(), table.survival_rates(), dt);
  for (std::size_t j = 0; j < m; ++j) {
    const double mu = table.mean_rates()[static_cast<Eigen::Index>(j)];
    for (int n = 0; n < 2; ++n) {
      if (weights[n] == 0.0) continue;
      const std::size_t k = nodes[n];
      const double tk = grid.t_at(k);
      const double scale = std::sqrt(tk / dt);
      const double zk = mu * tk + (dz - mu * dt) * scale;
      if (!(zk >= grid.z_min && zk <= grid.z_max)) continue;
      const double zpos = (zk - grid.z_min) / dz_step;
      const std::size_t l = std::min(static_cast<std::size_t>(zpos), grid.n_z - 2);
      const double b = std::clamp(zpos - static_cast<double>(l), 0.0, 1.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double qb = table.qbar(j, i, k);
        if (!(qb > 0.0)) continue;
        double q = (1.0 - b) * table.q(j, i, k, l);
        if (b > 0.0) q += b * table.q(j, i, k, l + 1);
        out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) += weights[n] * scale * q / qb;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) *=
          qbar_dt(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

double eval_q(const StructureTable& table, std::size_t j, std::size_t i, double dt, double dz) {
  if (j >= table.size() || i >= table.size()) throw InvalidInput("state index out of range");
  return eval_q_matrix(table, dt, dz)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
}

Matrix eval_qbar_matrix(const StructureTable& table, double dt) {
  const GridSpec& grid = table.grid();
  bracket_time(grid, dt);
  const std::size_t k = std::min(static_cast<std::size_t>(std::lround(dt / grid.t_step())), grid.n_t - 1);
  const std::size_t m = table.size();
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix node(mm, mm);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) {
      node(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = table.qbar(j, i, k);
    }
  }
  const double s = dt - grid.t_at(k);
  if (s == 0.0) return node;
  return (node * short_exp(s * table.killed_generator())).cwiseMax(0.0);
}

double eval_qbar(const StructureTable& table, std::size_t j, std::size_t i, double dt) {
  if (j >= table.size() || i >= table.size()) throw InvalidInput("state index out of range");
  return eval_qbar_matrix(table, dt)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
}

ArrivalProfile::ArrivalProfile(const StructureTable& table, const Vector& anchor)
    : table_(&table), anchor_(anchor) {
  if (table.policy() != PolicyKind::kCox) {
    throw InvalidInput("arrival tail mass is only defined for Cox tables");
  }
  if (anchor_.size() != static_cast<Eigen::Index>(table.size())) {
    throw InvalidInput("posterior length does not match the table");
  }
  mean_wait_ = (-table.killed_generator()).partialPivLu().solve(table.survival_rates());
}

Vector ArrivalProfile::occupation(double u) const {
  return eval_qbar_matrix(*table_, u).transpose() * anchor_;
}

double ArrivalProfile::tail(double u) const { return tail_given(occupation(u)); }

double tail_mass(const StructureTable& table, const Vector& pi, double t) {
  const double mass = ArrivalProfile(table, pi).tail(t);
  if (!(mass > 0.0)) {
    throw DegenerateDenominator("next-arrival tail mass is not positive at t = " + std::to_string(t));
  }
  return mass;
}

}  // namespace volfilter
