#pragma once

// CSV formats.
//   ticks:       time,log_price   (or time,price; the log is taken on read)
//   truth:       time,state       (1-based state index)
//   trajectory:  time,kind,pi_1,...,pi_M   with kind in {tick, probe}
// Numbers are written with 17 significant digits.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "volfilter/filter.hpp"
#include "volfilter/model.hpp"

namespace volfilter {

struct TickFile {
  std::vector<Tick> ticks;
  bool from_price = false;  // input had a price column
};

TickFile parse_ticks(std::string_view text);
TickFile read_ticks(const std::filesystem::path& path);

std::string format_ticks(std::span<const Tick> ticks);
void write_ticks(const std::filesystem::path& path, std::span<const Tick> ticks);

std::string format_truth(std::span<const Tick> ticks, std::span<const int> states);
void write_truth(const std::filesystem::path& path, std::span<const Tick> ticks,
                 std::span<const int> states);

std::string format_trajectory(const Trajectory& trajectory);
void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory parse_trajectory(std::string_view text);
Trajectory read_trajectory(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace volfilter
