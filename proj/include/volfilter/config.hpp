#pragma once

// Flat `section.key = value` run configuration. Lists are comma-separated;
// matrix rows are separated by ';'. Lines starting with '#' are comments.
//
//   model.states    = 0.1, 0.4
//   model.intensity = -0.5, 0.5; 0.5, -0.5
//   model.prior     = 0.5, 0.5
//   model.drift     = 0, 0
//   model.vol       = 0.1, 0.4
//   policy.kind     = cox
//   policy.intensity = 5, 15
//   grid.t_max = 2 ...

#include <cstdint>
#include <string>
#include <string_view>

#include "volfilter/errors.hpp"
#include "volfilter/model.hpp"
#include "volfilter/structure_table.hpp"

namespace volfilter {

/// Config problem; `line()` is 0 when the problem is a missing key.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RunConfig {
  struct Model {
    Vector states;
    Matrix intensity;
    Vector prior;
    Vector drift;
    Vector vol;
    double x0 = 0.0;
    double vol_floor = MarketModel::kDefaultVolFloor;
  } model;

  struct Policy {
    PolicyKind kind = PolicyKind::kCox;
    Vector intensity;
    double rate = 0.0;
    double step = 0.0;
  } policy;

  struct Grid {
    double t_max = 0.0;
    std::size_t n_t = 0;
    bool auto_z = true;
    double z_min = 0.0;
    double z_max = 0.0;
    std::size_t n_z = 0;
    std::size_t n_paths = 0;
    std::size_t max_entries = BuildOptions{}.max_entries;
  } grid;

  struct Filter {
    double rk4_step = 0.0;
    double probe_interval = 0.0;
    bool fallback = true;
  } filter;

  struct Simulate {
    double horizon = 10.0;
  } simulate;

  struct Oracle {
    std::size_t particles = 10000;
    double max_mean_tv = 0.02;
    double max_tv = 0.06;
  } oracle;

  struct Paths {
    std::string table;
    std::string ticks;
    std::string truth;
    std::string output;
  } paths;

  std::uint64_t seed = 1;
  int threads = 1;

  VolatilityChain chain() const;
  MarketModel market() const;
  ObservationPolicy observation_policy() const;
  GridSpec grid_spec() const;
  BuildOptions build_options() const;
};

/// Parses and validates; every violation is reported with its line number.
RunConfig parse_config(std::string_view text);

/// Canonical text form; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& config);

}  // namespace volfilter
