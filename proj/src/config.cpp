#include "volfilter/config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

namespace volfilter {

namespace {

constexpr std::array<std::string_view, 31> kKnownKeys = {
    "model.states",     "model.intensity",   "model.prior",        "model.drift",
    "model.vol",        "model.x0",          "model.vol_floor",    "policy.kind",
    "policy.intensity", "policy.rate",       "policy.step",        "grid.t_max",
    "grid.n_t",         "grid.z_min",        "grid.z_max",         "grid.n_z",
    "grid.n_paths",     "grid.max_entries",  "filter.rk4_step",    "filter.probe_interval",
    "filter.fallback",  "simulate.horizon",  "oracle.particles",   "oracle.max_mean_tv",
    "oracle.max_tv",    "paths.table",       "paths.ticks",        "paths.truth",
    "paths.output",     "run.seed",          "run.threads"};

struct Entry {
  std::string value;
  std::size_t line;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string format_list(const Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += format_number(v[i]);
  }
  return out;
}

class Entries {
 public:
  explicit Entries(std::string_view text) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = text.find('\n', start);
      const std::string_view raw =
          text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
      ++line_no;
      const std::string_view line = trim(raw);
      if (!line.empty() && line.front() != '#') {
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected `section.key = value`");
        const std::string key(trim(line.substr(0, eq)));
        if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end()) {
          throw ConfigError(line_no, "unknown key `" + key + "`");
        }
        if (entries_.count(key) != 0) throw ConfigError(line_no, "duplicate key `" + key + "`");
        entries_[key] = Entry{std::string(trim(line.substr(eq + 1))), line_no};
      }
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::size_t line(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  const Entry& require(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError(0, "missing mandatory key `" + key + "`");
    return it->second;
  }

  double number(const std::string& key) const { return parse_number(require(key), key); }
  double number(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  std::size_t count(const std::string& key) const {
    const Entry& e = require(key);
    std::size_t v = 0;
    const auto res = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (res.ec != std::errc() || res.ptr != e.value.data() + e.value.size()) {
      throw ConfigError(e.line, "`" + key + "` must be a non-negative integer");
    }
    return v;
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  Vector list(const std::string& key) const {
    const Entry& e = require(key);
    const auto items = split(e.value, ',');
    Vector v(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) {
      v[static_cast<Eigen::Index>(i)] = parse_number(Entry{std::string(items[i]), e.line}, key);
    }
    return v;
  }

  Matrix matrix(const std::string& key) const {
    const Entry& e = require(key);
    const auto rows = split(e.value, ';');
    Matrix out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto items = split(rows[r], ',');
      if (r == 0) out.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(items.size()));
      if (static_cast<Eigen::Index>(items.size()) != out.cols()) {
        throw ConfigError(e.line, "`" + key + "` row " + std::to_string(r + 1) + " has " +
                                      std::to_string(items.size()) + " entries, expected " +
                                      std::to_string(out.cols()));
      }
      for (std::size_t c = 0; c < items.size(); ++c) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            parse_number(Entry{std::string(items[c]), e.line}, key);
      }
    }
    return out;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Entry& e = require(key);
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ConfigError(e.line, "`" + key + "` must be true or false");
  }

  std::string text(const std::string& key) const { return has(key) ? require(key).value : ""; }

 private:
  static double parse_number(const Entry& e, const std::string& key) {
    double v = 0.0;
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
      throw ConfigError(e.line, "`" + key + "` has an invalid number `" + e.value + "`");
    }
    return v;
  }

  std::map<std::string, Entry> entries_;
};

void reject_if_present(const Entries& entries, const std::string& key, std::string_view kind) {
  if (entries.has(key)) {
    throw ConfigError(entries.line(key), "`" + key + "` does not apply to policy " + std::string(kind));
  }
}

}  // namespace

ConfigError::ConfigError(std::size_t line, const std::string& message)
    : InvalidInput(line == 0 ? "config: " + message
                             : "config line " + std::to_string(line) + ": " + message),
      line_(line) {}

VolatilityChain RunConfig::chain() const { return VolatilityChain(model.states, model.intensity, model.prior); }

MarketModel RunConfig::market() const {
  return MarketModel(model.drift, model.vol, model.x0, model.vol_floor);
}

ObservationPolicy RunConfig::observation_policy() const {
  switch (policy.kind) {
    case PolicyKind::kCox:
      return ObservationPolicy::cox(policy.intensity);
    case PolicyKind::kPoisson:
      return ObservationPolicy::poisson(policy.rate);
    case PolicyKind::kFixedGrid:
      return ObservationPolicy::fixed_grid(policy.step);
  }
  throw InvalidInput("unknown policy");
}

GridSpec RunConfig::grid_spec() const {
  GridSpec g;
  g.t_max = grid.t_max;
  g.n_t = grid.n_t;
  if (grid.auto_z) {
    const auto [lo, hi] = default_z_range(market(), grid.t_max);
    g.z_min = lo;
    g.z_max = hi;
  } else {
    g.z_min = grid.z_min;
    g.z_max = grid.z_max;
  }
  g.n_z = grid.n_z;
  g.n_paths = grid.n_paths;
  g.seed = seed;
  return g;
}

BuildOptions RunConfig::build_options() const {
  BuildOptions o;
  o.threads = threads;
  o.max_entries = grid.max_entries;
  return o;
}

RunConfig parse_config(std::string_view text) {
  const Entries e(text);
  RunConfig c;

  c.model.states = e.list("model.states");
  const auto m = c.model.states.size();
  auto check_len = [&](const std::string& key, Eigen::Index len) {
    if (len != m) {
      throw ConfigError(e.line(key), "`" + key + "` has " + std::to_string(len) +
                                         " entries, expected " + std::to_string(m));
    }
  };
  c.model.intensity = e.matrix("model.intensity");
  if (c.model.intensity.rows() != m || c.model.intensity.cols() != m) {
    throw ConfigError(e.line("model.intensity"),
                      "`model.intensity` must be " + std::to_string(m) + "x" + std::to_string(m));
  }
  for (Eigen::Index r = 0; r < m; ++r) {
    const double sum = c.model.intensity.row(r).sum();
    if (std::abs(sum) > 1e-12) {
      throw ConfigError(e.line("model.intensity"), "intensity row " + std::to_string(r + 1) +
                                                       " sums to " + format_number(sum) +
                                                       ", expected 0");
    }
  }
  c.model.prior = e.list("model.prior");
  check_len("model.prior", c.model.prior.size());
  c.model.drift = e.list("model.drift");
  check_len("model.drift", c.model.drift.size());
  c.model.vol = e.list("model.vol");
  check_len("model.vol", c.model.vol.size());
  c.model.x0 = e.number("model.x0", 0.0);
  c.model.vol_floor = e.number("model.vol_floor", MarketModel::kDefaultVolFloor);

  try {
    c.chain();
  } catch (const InvalidModel& err) {
    const bool prior = std::string_view(err.what()).find("initial law") != std::string_view::npos;
    throw ConfigError(e.line(prior ? "model.prior" : "model.intensity"), err.what());
  }
  try {
    c.market();
  } catch (const InvalidModel& err) {
    throw ConfigError(e.line("model.vol"), std::string("floor violation: ") + err.what());
  }

  const std::string kind = e.require("policy.kind").value;
  if (kind == "cox") {
    c.policy.kind = PolicyKind::kCox;
    c.policy.intensity = e.list("policy.intensity");
    check_len("policy.intensity", c.policy.intensity.size());
    reject_if_present(e, "policy.rate", kind);
    reject_if_present(e, "policy.step", kind);
  } else if (kind == "poisson") {
    c.policy.kind = PolicyKind::kPoisson;
    c.policy.rate = e.number("policy.rate");
    reject_if_present(e, "policy.intensity", kind);
    reject_if_present(e, "policy.step", kind);
  } else if (kind == "fixed_grid") {
    c.policy.kind = PolicyKind::kFixedGrid;
    c.policy.step = e.number("policy.step");
    reject_if_present(e, "policy.intensity", kind);
    reject_if_present(e, "policy.rate", kind);
  } else {
    throw ConfigError(e.line("policy.kind"), "policy.kind must be cox, poisson or fixed_grid");
  }
  try {
    c.observation_policy();
  } catch (const InvalidModel& err) {
    throw ConfigError(e.line("policy.kind"), err.what());
  }

  c.grid.t_max = e.number("grid.t_max");
  c.grid.n_t = e.count("grid.n_t");
  c.grid.n_z = e.count("grid.n_z");
  c.grid.n_paths = e.count("grid.n_paths");
  c.grid.max_entries = e.count("grid.max_entries", c.grid.max_entries);
  if (e.has("grid.z_min") != e.has("grid.z_max")) {
    throw ConfigError(e.line(e.has("grid.z_min") ? "grid.z_min" : "grid.z_max"),
                      "grid.z_min and grid.z_max must be given together");
  }
  if (e.has("grid.z_min")) {
    c.grid.auto_z = false;
    c.grid.z_min = e.number("grid.z_min");
    c.grid.z_max = e.number("grid.z_max");
  }
  try {
    c.grid_spec().validate();
  } catch (const InvalidInput& err) {
    throw ConfigError(e.line("grid.t_max"), err.what());
  }

  c.filter.rk4_step = e.number("filter.rk4_step", 0.0);
  if (c.filter.rk4_step < 0.0) throw ConfigError(e.line("filter.rk4_step"), "RK4 step must be >= 0");
  c.filter.probe_interval = e.number("filter.probe_interval", 0.0);
  if (c.filter.probe_interval < 0.0) {
    throw ConfigError(e.line("filter.probe_interval"), "probe interval must be >= 0");
  }
  c.filter.fallback = e.flag("filter.fallback", true);

  c.simulate.horizon = e.number("simulate.horizon", 10.0);
  if (!(c.simulate.horizon > 0.0)) {
    throw ConfigError(e.line("simulate.horizon"), "simulation horizon must be positive");
  }

  c.oracle.particles = e.count("oracle.particles", c.oracle.particles);
  if (c.oracle.particles < 100) throw ConfigError(e.line("oracle.particles"), "need at least 100 particles");
  c.oracle.max_mean_tv = e.number("oracle.max_mean_tv", c.oracle.max_mean_tv);
  c.oracle.max_tv = e.number("oracle.max_tv", c.oracle.max_tv);

  c.paths.table = e.text("paths.table");
  c.paths.ticks = e.text("paths.ticks");
  c.paths.truth = e.text("paths.truth");
  c.paths.output = e.text("paths.output");

  c.seed = e.has("run.seed") ? e.count("run.seed") : 1;
  c.threads = static_cast<int>(e.count("run.threads", 1));
  if (c.threads < 1) throw ConfigError(e.line("run.threads"), "run.threads must be at least 1");
  return c;
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream out;
  auto kv = [&out](std::string_view key, const std::string& value) {
    out << key << " = " << value << '\n';
  };
  kv("model.states", format_list(c.model.states));
  std::string rows;
  for (Eigen::Index r = 0; r < c.model.intensity.rows(); ++r) {
    if (r > 0) rows += "; ";
    rows += format_list(c.model.intensity.row(r).transpose());
  }
  kv("model.intensity", rows);
  kv("model.prior", format_list(c.model.prior));
  kv("model.drift", format_list(c.model.drift));
  kv("model.vol", format_list(c.model.vol));
  kv("model.x0", format_number(c.model.x0));
  kv("model.vol_floor", format_number(c.model.vol_floor));
  switch (c.policy.kind) {
    case PolicyKind::kCox:
      kv("policy.kind", "cox");
      kv("policy.intensity", format_list(c.policy.intensity));
      break;
    case PolicyKind::kPoisson:
      kv("policy.kind", "poisson");
      kv("policy.rate", format_number(c.policy.rate));
      break;
    case PolicyKind::kFixedGrid:
      kv("policy.kind", "fixed_grid");
      kv("policy.step", format_number(c.policy.step));
      break;
  }
  kv("grid.t_max", format_number(c.grid.t_max));
  kv("grid.n_t", std::to_string(c.grid.n_t));
  if (!c.grid.auto_z) {
    kv("grid.z_min", format_number(c.grid.z_min));
    kv("grid.z_max", format_number(c.grid.z_max));
  }
  kv("grid.n_z", std::to_string(c.grid.n_z));
  kv("grid.n_paths", std::to_string(c.grid.n_paths));
  kv("grid.max_entries", std::to_string(c.grid.max_entries));
  kv("filter.rk4_step", format_number(c.filter.rk4_step));
  kv("filter.probe_interval", format_number(c.filter.probe_interval));
  kv("filter.fallback", c.filter.fallback ? "true" : "false");
  kv("simulate.horizon", format_number(c.simulate.horizon));
  kv("oracle.particles", std::to_string(c.oracle.particles));
  kv("oracle.max_mean_tv", format_number(c.oracle.max_mean_tv));
  kv("oracle.max_tv", format_number(c.oracle.max_tv));
  if (!c.paths.table.empty()) kv("paths.table", c.paths.table);
  if (!c.paths.ticks.empty()) kv("paths.ticks", c.paths.ticks);
  if (!c.paths.truth.empty()) kv("paths.truth", c.paths.truth);
  if (!c.paths.output.empty()) kv("paths.output", c.paths.output);
  kv("run.seed", std::to_string(c.seed));
  kv("run.threads", std::to_string(c.threads));
  return out.str();
}

}  // namespace volfilter
