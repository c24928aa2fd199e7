#include "volfilter/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>

#include "volfilter/config.hpp"
#include "volfilter/errors.hpp"
#include "volfilter/io.hpp"
#include "volfilter/oracle.hpp"
#include "volfilter/simulator.hpp"
#include "volfilter/structure_table.hpp"

namespace volfilter {

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> rk4_step;

  RunConfig load() const {
    RunConfig c = parse_config(read_text_file(config));
    if (seed) c.seed = *seed;
    if (threads) {
      if (*threads < 1) throw InvalidInput("--threads must be at least 1");
      c.threads = *threads;
    }
    if (rk4_step) {
      if (!(*rk4_step > 0.0)) throw InvalidInput("--rk4-step must be positive");
      c.filter.rk4_step = *rk4_step;
    }
    return c;
  }
};

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("-c,--config", common.config, "run configuration file")->required();
  sub->add_option("--seed", common.seed, "override run.seed");
  sub->add_option("--threads", common.threads, "override run.threads");
  sub->add_option("--rk4-step", common.rk4_step, "override filter.rk4_step");
}

std::string pick(const std::string& flag, const std::string& from_config) {
  return flag.empty() ? from_config : flag;
}

class UsageError : public std::runtime_error {
 public:
  UsageError(const CLI::App* app, const std::string& what)
      : std::runtime_error(what), help(app->help()) {}
  std::string help;
};

Trajectory filter_run(const RunConfig& c, std::shared_ptr<const StructureTable> table,
                      std::span<const Tick> ticks, std::span<const double> probes,
                      std::ostream& err) {
  FilterOptions options;
  options.rk4_step = c.filter.rk4_step;
  options.degenerate_fallback = c.filter.fallback;
  FilterState state = FilterState::init(c.chain(), c.market(), c.observation_policy(), std::move(table), options);
  Trajectory out = run(state, ticks, probes);
  for (const auto& w : state.warnings()) err << "warning: t = " << number(w.time) << ": " << w.message << '\n';
  return out;
}

SimOutput simulate_run(const RunConfig& c) {
  return simulate(c.chain(), c.market(), c.observation_policy(), c.simulate.horizon, c.seed);
}

}  // namespace

std::vector<double> probe_grid(double interval, double end) {
  std::vector<double> out;
  if (!(interval > 0.0)) return out;
  for (std::size_t k = 1;; ++k) {
    const double t = static_cast<double>(k) * interval;
    if (t > end) break;
    out.push_back(t);
  }
  return out;
}

ValidationSummary compare_ticks(const Trajectory& filter, const Trajectory& oracle) {
  std::vector<const TrajectoryPoint*> a;
  std::vector<const TrajectoryPoint*> b;
  for (std::size_t k = 1; k < filter.size(); ++k) {
    if (filter[k].kind == PointKind::kTick) a.push_back(&filter[k]);
  }
  for (std::size_t k = 1; k < oracle.size(); ++k) {
    if (oracle[k].kind == PointKind::kTick) b.push_back(&oracle[k]);
  }
  if (a.size() != b.size()) throw InvalidInput("trajectories have different tick counts");
  ValidationSummary s;
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k]->time != b[k]->time) throw InvalidInput("trajectories disagree on tick times");
    const double tv = total_variation(a[k]->pi, b[k]->pi);
    s.times.push_back(a[k]->time);
    s.tv.push_back(tv);
    sum += tv;
    s.max_tv = std::max(s.max_tv, tv);
  }
  s.mean_tv = a.empty() ? 0.0 : sum / static_cast<double>(a.size());
  return s;
}

std::string format_validation(const ValidationSummary& summary) {
  std::string out = "time,tv\n";
  for (std::size_t k = 0; k < summary.times.size(); ++k) {
    out += number(summary.times[k]) + "," + number(summary.tv[k]) + "\n";
  }
  return out;
}

int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hidden volatility state filter for tick data", "volfilter"};
  app.require_subcommand(1);

  Common common;
  std::string ticks_path;
  std::string truth_path;
  std::string table_path;
  std::string output_path;
  std::string oracle_output;
  bool ticks_only = false;
  std::optional<double> probe_every;
  std::optional<std::size_t> particles;

  auto* simulate = app.add_subcommand("simulate", "simulate a chain path and its ticks");
  add_common(simulate, common);
  simulate->add_option("--ticks", ticks_path, "tick CSV to write");
  simulate->add_option("--truth", truth_path, "ground-truth CSV to write");

  auto* precompute = app.add_subcommand("precompute", "build the structure table");
  add_common(precompute, common);
  precompute->add_option("--table", table_path, "table file to write");

  auto* filter = app.add_subcommand("filter", "run the filter over a tick file");
  add_common(filter, common);
  filter->add_option("--table", table_path, "structure table file");
  filter->add_option("--ticks", ticks_path, "tick CSV");
  filter->add_option("-o,--output", output_path, "trajectory CSV (stdout if omitted)");
  filter->add_flag("--ticks-only", ticks_only, "posteriors at ticks only");
  filter->add_option("--probe-every", probe_every, "probe interval between ticks");

  auto* validate = app.add_subcommand("validate", "compare the filter with the particle oracle");
  add_common(validate, common);
  validate->add_option("--table", table_path, "structure table file (built in memory if omitted)");
  validate->add_option("--ticks", ticks_path, "tick CSV (simulated from the config if omitted)");
  validate->add_option("-o,--output", output_path, "per-tick TV CSV");
  validate->add_option("--oracle-output", oracle_output, "oracle trajectory CSV");
  validate->add_option("--particles", particles, "override oracle.particles");

  auto* dump = app.add_subcommand("dump", "print the canonical configuration");
  add_common(dump, common);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  try {
    RunConfig c = common.load();

    if (*dump) {
      out << dump_config(c);
      return exit_code::kOk;
    }

    if (*simulate) {
      const std::string tpath = pick(ticks_path, c.paths.ticks);
      if (tpath.empty()) throw UsageError(simulate, "no tick output path (--ticks or paths.ticks)");
      const SimOutput sim = simulate_run(c);
      write_ticks(tpath, sim.ticks);
      const std::string truth = pick(truth_path, c.paths.truth);
      if (!truth.empty()) write_truth(truth, sim.ticks, sim.true_states_at_ticks);
      out << "ticks " << sim.ticks.size() << " horizon " << short_number(c.simulate.horizon) << '\n';
      return exit_code::kOk;
    }

    if (*precompute) {
      const std::string path = pick(table_path, c.paths.table);
      if (path.empty()) throw UsageError(precompute, "no table path (--table or paths.table)");
      const StructureTable table = build_table(c.chain(), c.market(), c.observation_policy(),
                                               c.grid_spec(), c.build_options());
      save_table(table, path);
      out << "table " << path << " states " << table.size() << " n_t " << table.grid().n_t << " n_z "
          << table.grid().n_z << " paths " << table.grid().n_paths << '\n';
      return exit_code::kOk;
    }

    if (*filter) {
      const std::string tpath = pick(table_path, c.paths.table);
      if (tpath.empty()) throw UsageError(filter, "filter needs a structure table (--table or paths.table)");
      const std::string kpath = pick(ticks_path, c.paths.ticks);
      if (kpath.empty()) throw UsageError(filter, "filter needs a tick file (--ticks or paths.ticks)");
      if (ticks_only && probe_every) throw UsageError(filter, "--ticks-only and --probe-every exclude each other");
      auto table = std::make_shared<const StructureTable>(
          load_table(tpath, model_fingerprint(c.chain(), c.market(), c.observation_policy())));
      const TickFile ticks = read_ticks(kpath);
      if (ticks.from_price) err << "note: price column converted to log prices\n";
      const double interval = ticks_only ? 0.0 : probe_every.value_or(c.filter.probe_interval);
      if (interval < 0.0) throw InvalidInput("probe interval must be >= 0");
      const double end = ticks.ticks.empty() ? 0.0 : ticks.ticks.back().time;
      const std::vector<double> probes = probe_grid(interval, end);
      const Trajectory traj = filter_run(c, std::move(table), ticks.ticks, probes, err);
      const std::string opath = pick(output_path, c.paths.output);
      if (opath.empty()) {
        out << format_trajectory(traj);
      } else {
        write_trajectory(opath, traj);
      }
      return exit_code::kOk;
    }

    if (*validate) {
      if (particles) c.oracle.particles = *particles;
      std::vector<Tick> ticks;
      const std::string kpath = pick(ticks_path, c.paths.ticks);
      if (!kpath.empty()) {
        ticks = read_ticks(kpath).ticks;
      } else {
        ticks = simulate_run(c).ticks;
      }
      const std::string tpath = pick(table_path, c.paths.table);
      const auto policy = c.observation_policy();
      auto table = std::make_shared<const StructureTable>(
          tpath.empty() ? build_table(c.chain(), c.market(), policy, c.grid_spec(), c.build_options())
                        : load_table(tpath, model_fingerprint(c.chain(), c.market(), policy)));
      const Trajectory traj = filter_run(c, std::move(table), ticks, {}, err);
      OracleOptions oo;
      oo.particles = c.oracle.particles;
      oo.seed = c.seed;
      oo.threads = c.threads;
      const OracleResult oracle = pf_run(c.chain(), c.market(), policy, ticks, {}, oo);
      const ValidationSummary s = compare_ticks(traj, oracle.trajectory);
      const std::string opath = pick(output_path, c.paths.output);
      if (!opath.empty()) write_text_file(opath, format_validation(s));
      if (!oracle_output.empty()) write_trajectory(oracle_output, oracle.trajectory);
      const bool pass = s.mean_tv < c.oracle.max_mean_tv && s.max_tv < c.oracle.max_tv;
      out << "ticks " << s.tv.size() << " mean_tv " << short_number(s.mean_tv) << " max_tv "
          << short_number(s.max_tv) << " particles " << c.oracle.particles << " resamples "
          << oracle.diagnostics.resamples << (pass ? " PASS" : " FAIL") << '\n';
      return pass ? exit_code::kOk : exit_code::kValidation;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << e.help;
    return exit_code::kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return exit_code::kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::kData;
  }
  return exit_code::kUsage;
}

}  // namespace volfilter
