#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "volfilter/filter.hpp"

namespace volfilter {

namespace exit_code {
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;
constexpr int kValidation = 4;
}  // namespace exit_code

/// Probe times interval, 2*interval, ... strictly before `end`.
std::vector<double> probe_grid(double interval, double end);

struct ValidationSummary {
  std::vector<double> times;
  std::vector<double> tv;  // per tick row
  double mean_tv = 0.0;
  double max_tv = 0.0;
};

/// Compares the tick rows of two trajectories (the initial row excluded).
ValidationSummary compare_ticks(const Trajectory& filter, const Trajectory& oracle);

/// `time,tv` rows followed by nothing else; deterministic text.
std::string format_validation(const ValidationSummary& summary);

/// Entry point of the command line tool. argv[0] is the program name.
int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace volfilter
