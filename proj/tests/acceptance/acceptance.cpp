// One line per acceptance criterion; exit status is the number of failures.
// Tolerances are fixed here and never read from the configs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "volfilter/cli.hpp"
#include "volfilter/config.hpp"
#include "volfilter/errors.hpp"
#include "volfilter/filter.hpp"
#include "volfilter/io.hpp"
#include "volfilter/oracle.hpp"
#include "volfilter/simulator.hpp"
#include "volfilter/structure_table.hpp"

using namespace volfilter;

namespace {

constexpr double kSimplexTolerance = 1e-9;
constexpr double kSimplexSeconds = 10.0;
constexpr double kConservationTolerance = 1e-10;
constexpr double kPoissonTolerance = 1e-4;
constexpr double kPoissonStep = 1e-3;
constexpr double kPoissonHorizon = 1.0;
constexpr double kSeparationTolerance = 1e-8;
constexpr std::size_t kSeparationTicks = 200;
constexpr double kOracleMeanTv = 0.02;
constexpr double kOracleMaxTv = 0.06;
constexpr std::size_t kOracleMinTicks = 50;
constexpr std::size_t kOracleSize = 200000;
constexpr double kOracleSeconds = 300.0;
constexpr double kInvarianceTolerance = 1e-6;
constexpr double kMarginalSigmas = 3.0;
constexpr std::size_t kMarginalTimes = 10;
constexpr double kTrackingMargin = 0.1;
constexpr double kStationaryMass = 0.5;
constexpr std::size_t kTrackingReplications = 20;
constexpr std::size_t kSimplexTicks = 500;
constexpr double kProbeInterval = 0.05;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, x);
  return buf;
}

RunConfig load(const char* name) {
  return parse_config(read_text_file(std::filesystem::path(VOLFILTER_CONFIG_DIR) / name));
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("criterion %d %-24s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
}

std::shared_ptr<const StructureTable> table_for(const RunConfig& c) {
  return std::make_shared<const StructureTable>(
      build_table(c.chain(), c.market(), c.observation_policy(), c.grid_spec(), c.build_options()));
}

std::shared_ptr<const StructureTable> table_for(const VolatilityChain& chain, const MarketModel& model,
                                                const ObservationPolicy& policy, GridSpec grid) {
  return std::make_shared<const StructureTable>(build_table(chain, model, policy, grid));
}

GridSpec auto_grid(const MarketModel& model, double t_max, std::size_t n_t, std::size_t n_z,
                   std::size_t n_paths, std::uint64_t seed) {
  const auto [lo, hi] = default_z_range(model, t_max);
  return GridSpec{t_max, n_t, lo, hi, n_z, n_paths, seed};
}

std::vector<Tick> first_ticks(std::vector<Tick> ticks, std::size_t count) {
  if (ticks.size() < count) {
    throw InvalidInput("simulation produced " + std::to_string(ticks.size()) + " ticks, need " +
                       std::to_string(count));
  }
  ticks.resize(count);
  return ticks;
}

struct RunResult {
  Trajectory trajectory;
  FilterDiagnostics diagnostics;
};

RunResult filter_ticks(const VolatilityChain& chain, const MarketModel& model, const ObservationPolicy& policy,
                       std::shared_ptr<const StructureTable> table, const std::vector<Tick>& ticks,
                       const std::vector<double>& probes, double rk4_step = 0.0) {
  FilterOptions options;
  options.rk4_step = rk4_step;
  FilterState state = FilterState::init(chain, model, policy, std::move(table), options);
  RunResult r;
  r.trajectory = run(state, ticks, probes);
  r.diagnostics = state.diagnostics();
  return r;
}

double tick_sup_distance(const Trajectory& a, const Trajectory& b) {
  std::vector<const Vector*> ta;
  std::vector<const Vector*> tb;
  for (const auto& p : a) {
    if (p.kind == PointKind::kTick) ta.push_back(&p.pi);
  }
  for (const auto& p : b) {
    if (p.kind == PointKind::kTick) tb.push_back(&p.pi);
  }
  if (ta.size() != tb.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t k = 0; k < ta.size(); ++k) worst = std::max(worst, (*ta[k] - *tb[k]).cwiseAbs().maxCoeff());
  return worst;
}

double trapezoid(const StructureTable& t, std::size_t j, std::size_t i, std::size_t k, bool stderr_row) {
  const GridSpec& g = t.grid();
  double sum = 0.0;
  for (std::size_t l = 0; l < g.n_z; ++l) {
    const double w = (l == 0 || l + 1 == g.n_z) ? 0.5 : 1.0;
    sum += w * (stderr_row ? t.q_stderr(j, i, k, l) : t.q(j, i, k, l));
  }
  return sum * g.z_step();
}

// Worst ratio of |trapezoid - qbar| to its allowance; <= 1 passes.
double marginal_ratio(const StructureTable& t) {
  const std::size_t n_t = t.grid().n_t;
  double worst = 0.0;
  for (std::size_t s = 1; s <= kMarginalTimes; ++s) {
    const std::size_t k = s * (n_t - 1) / kMarginalTimes;
    for (std::size_t j = 0; j < t.size(); ++j) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double diff = std::abs(trapezoid(t, j, i, k, false) - t.qbar(j, i, k));
        const double allowance =
            kMarginalSigmas * std::hypot(trapezoid(t, j, i, k, true), t.qbar_stderr(j, i, k)) +
            t.tail_budget(j, i, k) + 1e-14;
        worst = std::max(worst, diff / allowance);
      }
    }
  }
  return worst;
}

Matrix uninformative_intensity() {
  Matrix lam(3, 3);
  lam << -0.8, 0.5, 0.3, 0.2, -0.4, 0.2, 0.6, 0.6, -1.2;
  return lam;
}

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "volfilter");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli(args, out, err);
  if (code != exit_code::kOk) {
    throw InvalidInput("cli " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
  }
  return code;
}

}  // namespace

int main() {
  const RunConfig three = load("three_state.conf");
  const RunConfig two = load("two_state.conf");

  double conservation_worst = 0.0;
  std::size_t conservation_steps = 0;

  std::printf("building structure tables\n");
  std::fflush(stdout);
  const auto three_table = table_for(three);
  const auto two_table = table_for(two);

  report(1, "simplex preservation", [&] {
    const auto ticks = first_ticks(simulate(three.chain(), three.market(), three.observation_policy(),
                                            three.simulate.horizon, three.seed)
                                       .ticks,
                                   kSimplexTicks);
    const auto probes = probe_grid(kProbeInterval, ticks.back().time);
    const auto start = Clock::now();
    const RunResult r = filter_ticks(three.chain(), three.market(), three.observation_policy(), three_table,
                                     ticks, probes);
    const double elapsed = seconds_since(start);
    conservation_worst = std::max(conservation_worst, r.diagnostics.max_conservation_residual);
    conservation_steps += r.diagnostics.rk4_steps;
    double worst_sum = 0.0;
    double min_entry = INFINITY;
    for (const auto& p : r.trajectory) {
      worst_sum = std::max(worst_sum, std::abs(p.pi.sum() - 1.0));
      min_entry = std::min(min_entry, p.pi.minCoeff());
    }
    const bool pass = min_entry >= 0.0 && worst_sum <= kSimplexTolerance && elapsed < kSimplexSeconds;
    return Outcome{pass, std::to_string(r.trajectory.size()) + " rows, min pi " + fmt("%.3g", min_entry) +
                             ", max |sum-1| " + fmt("%.3g", worst_sum) + ", " + fmt("%.2f", elapsed) + " s"};
  });

  report(2, "conservation identity", [&] {
    // Also run the two-state Cox model with probes so both bundled models
    // contribute RK4 steps.
    const auto sim = simulate(two.chain(), two.market(), two.observation_policy(), two.simulate.horizon, two.seed);
    const auto probes = probe_grid(kProbeInterval, sim.ticks.back().time);
    const RunResult r = filter_ticks(two.chain(), two.market(), two.observation_policy(), two_table, sim.ticks,
                                     probes);
    conservation_worst = std::max(conservation_worst, r.diagnostics.max_conservation_residual);
    conservation_steps += r.diagnostics.rk4_steps;
    const bool pass = conservation_steps > 0 && conservation_worst <= kConservationTolerance;
    return Outcome{pass, std::to_string(conservation_steps) + " RK4 steps, worst relative residual " +
                             fmt("%.3g", conservation_worst)};
  });

  report(3, "poisson reduction", [&] {
    const VolatilityChain chain = three.chain();
    const MarketModel model = three.market();
    const auto policy = ObservationPolicy::cox(Vector::Constant(3, 8.0));
    const auto table = table_for(chain, model, policy, auto_grid(model, 1.5, 61, 201, 2000, 11));
    FilterOptions options;
    options.rk4_step = kPoissonStep;
    FilterState state = FilterState::init(chain, model, policy, table, options);
    const Vector prior = chain.initial_law();
    double worst = 0.0;
    for (int s = 1; s <= 20; ++s) {
      const double delta = kPoissonHorizon * s / 20.0;
      const Vector expected = transition_matrix(chain, delta).transpose() * prior;
      worst = std::max(worst, (state.propagate(delta).pi - expected).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= kPoissonTolerance, "sup-norm " + fmt("%.3g", worst) + " over 20 gaps up to 1.0"};
  });

  report(4, "separation principle", [&] {
    const auto cox_ticks = first_ticks(
        simulate(two.chain(), two.market(), two.observation_policy(), 40.0, two.seed + 4).ticks, kSeparationTicks);
    const auto cox_probes = probe_grid(kProbeInterval, cox_ticks.back().time);
    const double cox = tick_sup_distance(
        filter_ticks(two.chain(), two.market(), two.observation_policy(), two_table, cox_ticks, {}).trajectory,
        filter_ticks(two.chain(), two.market(), two.observation_policy(), two_table, cox_ticks, cox_probes)
            .trajectory);

    const auto grid_policy = ObservationPolicy::fixed_grid(0.1);
    const auto grid_table = table_for(two.chain(), two.market(), grid_policy,
                                      auto_grid(two.market(), 0.2, 21, 401, 20000, 5));
    const auto grid_ticks = first_ticks(
        simulate(two.chain(), two.market(), grid_policy, 0.1 * (kSeparationTicks + 1), two.seed + 4).ticks,
        kSeparationTicks);
    const auto grid_probes = probe_grid(kProbeInterval, grid_ticks.back().time);
    const double fixed = tick_sup_distance(
        filter_ticks(two.chain(), two.market(), grid_policy, grid_table, grid_ticks, {}).trajectory,
        filter_ticks(two.chain(), two.market(), grid_policy, grid_table, grid_ticks, grid_probes).trajectory);
    const bool pass = cox <= kSeparationTolerance && fixed <= kSeparationTolerance;
    return Outcome{pass, "cox " + fmt("%.3g", cox) + ", fixed grid " + fmt("%.3g", fixed) + " over " +
                             std::to_string(kSeparationTicks) + " ticks"};
  });

  report(5, "oracle equivalence", [&] {
    if (two.grid.n_paths != kOracleSize || two.oracle.particles != kOracleSize) {
      throw InvalidInput("bundled two-state config does not use 2e5 paths and particles");
    }
    const auto start = Clock::now();
    const auto table = table_for(two);
    const auto ticks = simulate(two.chain(), two.market(), two.observation_policy(), two.simulate.horizon,
                                two.seed)
                           .ticks;
    const RunResult r = filter_ticks(two.chain(), two.market(), two.observation_policy(), table, ticks, {});
    OracleOptions oo;
    oo.particles = kOracleSize;
    oo.seed = two.seed;
    oo.threads = two.threads;
    const OracleResult oracle = pf_run(two.chain(), two.market(), two.observation_policy(), ticks, {}, oo);
    const ValidationSummary s = compare_ticks(r.trajectory, oracle.trajectory);
    const double elapsed = seconds_since(start);
    const bool pass = s.tv.size() >= kOracleMinTicks && s.mean_tv < kOracleMeanTv && s.max_tv < kOracleMaxTv &&
                      elapsed < kOracleSeconds;
    return Outcome{pass, std::to_string(s.tv.size()) + " ticks, mean TV " + fmt("%.4f", s.mean_tv) + ", max TV " +
                             fmt("%.4f", s.max_tv) + ", " + fmt("%.1f", elapsed) + " s with precompute"};
  });

  report(6, "uninformative invariance", [&] {
    const Matrix lam = uninformative_intensity();
    const VolatilityChain chain(Vector::Constant(3, 0.2), lam, (Vector(3) << 0.7, 0.2, 0.1).finished());
    const MarketModel model(Vector::Constant(3, 0.01), Vector::Constant(3, 0.2), 0.0);
    std::string detail;
    bool pass = true;
    for (const auto& [name, policy] : {std::pair{"cox", ObservationPolicy::cox(Vector::Constant(3, 6.0))},
                                       std::pair{"poisson", ObservationPolicy::poisson(6.0)},
                                       std::pair{"fixed grid", ObservationPolicy::fixed_grid(0.1)}}) {
      const double t_max = policy.kind() == PolicyKind::kFixedGrid ? 0.2 : 2.0;
      const std::size_t n_t = policy.kind() == PolicyKind::kFixedGrid ? 21 : 201;
      const auto table = table_for(chain, model, policy, auto_grid(model, t_max, n_t, 801, 20000, 13));
      const auto ticks = simulate(chain, model, policy, 20.0, 17).ticks;
      const auto probes = probe_grid(kProbeInterval, ticks.back().time);
      const Trajectory traj = filter_ticks(chain, model, policy, table, ticks, probes).trajectory;
      double worst = 0.0;
      for (const auto& p : traj) {
        const Vector expected = transition_matrix(lam, p.time).transpose() * chain.initial_law();
        worst = std::max(worst, (p.pi - expected).cwiseAbs().maxCoeff());
      }
      pass = pass && worst <= kInvarianceTolerance;
      detail += std::string(detail.empty() ? "" : ", ") + name + " " + fmt("%.3g", worst);
    }
    return Outcome{pass, detail};
  });

  report(7, "table marginalization", [&] {
    const double r2 = marginal_ratio(*two_table);
    const double r3 = marginal_ratio(*three_table);
    return Outcome{r2 <= 1.0 && r3 <= 1.0,
                   "worst error / allowance: two-state " + fmt("%.3f", r2) + ", three-state " + fmt("%.3f", r3)};
  });

  report(8, "tracking power", [&] {
    double total = 0.0;
    for (std::size_t rep = 0; rep < kTrackingReplications; ++rep) {
      const auto sim = simulate(two.chain(), two.market(), two.observation_policy(), two.simulate.horizon,
                                two.seed + 1000 + rep);
      const Trajectory traj =
          filter_ticks(two.chain(), two.market(), two.observation_policy(), two_table, sim.ticks, {}).trajectory;
      // Trajectory row 0 is the prior, or the tick at time 0 when there is one.
      const std::size_t offset = traj.size() - sim.ticks.size();
      double mass = 0.0;
      std::size_t count = 0;
      for (std::size_t k = 0; k < sim.ticks.size(); ++k) {
        if (sim.ticks[k].time == 0.0) continue;
        mass += traj[k + offset].pi[sim.true_states_at_ticks[k]];
        ++count;
      }
      total += count == 0 ? 0.0 : mass / static_cast<double>(count);
    }
    const double average = total / static_cast<double>(kTrackingReplications);
    return Outcome{average >= kStationaryMass + kTrackingMargin,
                   "mean mass on the true state " + fmt("%.4f", average) + " over " +
                       std::to_string(kTrackingReplications) + " replications"};
  });

  report(9, "determinism", [&] {
    const auto dir = std::filesystem::temp_directory_path() / "volfilter_acceptance";
    std::filesystem::create_directories(dir);
    const std::string conf = (std::filesystem::path(VOLFILTER_CONFIG_DIR) / "two_state.conf").string();
    auto file = [&](const std::string& name, int run) { return (dir / (name + std::to_string(run))).string(); };
    const std::vector<int> threads = {1, 4, 1};
    for (std::size_t run = 0; run < threads.size(); ++run) {
      const std::string t = std::to_string(threads[run]);
      const int id = static_cast<int>(run);
      run_cli({"simulate", "-c", conf, "--threads", t, "--ticks", file("ticks", id), "--truth", file("truth", id)});
      run_cli({"precompute", "-c", conf, "--threads", t, "--table", file("table", id)});
      run_cli({"filter", "-c", conf, "--threads", t, "--table", file("table", id), "--ticks", file("ticks", id),
               "--probe-every", "0.05", "-o", file("trajectory", id)});
      run_cli({"validate", "-c", conf, "--threads", t, "--table", file("table", id), "--ticks", file("ticks", id),
               "-o", file("validation", id), "--oracle-output", file("oracle", id)});
    }
    std::string differing;
    for (const char* name : {"ticks", "truth", "table", "trajectory", "validation", "oracle"}) {
      const std::string reference = slurp(file(name, 0));
      for (std::size_t run = 1; run < threads.size(); ++run) {
        if (slurp(file(name, static_cast<int>(run))) != reference) {
          differing += std::string(" ") + name + "@threads=" + std::to_string(threads[run]);
        }
      }
    }
    std::filesystem::remove_all(dir);
    return Outcome{differing.empty(), differing.empty() ? "runs at threads 1, 4, 1 are byte-identical"
                                                        : "differs:" + differing};
  });

  std::printf("%d criteria failed\n", failures);
  return failures;
}
