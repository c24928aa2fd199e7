#include "volfilter/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "volfilter/errors.hpp"

namespace volfilter {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

// Non-empty lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> lines(std::string_view text) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t start = 0;
  std::size_t no = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    ++no;
    const auto line = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!line.empty()) out.emplace_back(no, line);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

double parse_field(std::string_view s, std::size_t line, std::string_view what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw InvalidInput("line " + std::to_string(line) + ": cannot parse " + std::string(what) + " `" +
                       std::string(s) + "`");
  }
  if (!std::isfinite(v)) {
    throw InvalidInput("line " + std::to_string(line) + ": " + std::string(what) + " is not finite");
  }
  return v;
}

void append_number(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

TickFile parse_ticks(std::string_view text) {
  const auto rows = lines(text);
  if (rows.empty()) throw InvalidInput("tick file has no header");
  const auto header = fields(rows[0].second);
  TickFile out;
  if (header.size() != 2 || header[0] != "time" || (header[1] != "log_price" && header[1] != "price")) {
    throw InvalidInput("tick header must be `time,log_price` or `time,price`");
  }
  out.from_price = header[1] == "price";
  out.ticks.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto [no, line] = rows[r];
    const auto f = fields(line);
    if (f.size() != 2) throw InvalidInput("line " + std::to_string(no) + ": expected 2 fields");
    Tick t{parse_field(f[0], no, "time"), parse_field(f[1], no, out.from_price ? "price" : "log_price")};
    if (out.from_price) {
      if (!(t.logprice > 0.0)) throw InvalidInput("line " + std::to_string(no) + ": price must be positive");
      t.logprice = std::log(t.logprice);
    }
    if (!out.ticks.empty() && !(t.time > out.ticks.back().time)) {
      throw InvalidInput("line " + std::to_string(no) + ": tick times must be strictly increasing");
    }
    out.ticks.push_back(t);
  }
  return out;
}

TickFile read_ticks(const std::filesystem::path& path) { return parse_ticks(read_text_file(path)); }

std::string format_ticks(std::span<const Tick> ticks) {
  std::string out = "time,log_price\n";
  for (const Tick& t : ticks) {
    append_number(out, t.time);
    out += ',';
    append_number(out, t.logprice);
    out += '\n';
  }
  return out;
}

void write_ticks(const std::filesystem::path& path, std::span<const Tick> ticks) {
  write_text_file(path, format_ticks(ticks));
}

std::string format_truth(std::span<const Tick> ticks, std::span<const int> states) {
  if (ticks.size() != states.size()) throw InvalidInput("truth and tick counts differ");
  std::string out = "time,state\n";
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    append_number(out, ticks[k].time);
    out += ',';
    out += std::to_string(states[k] + 1);
    out += '\n';
  }
  return out;
}

void write_truth(const std::filesystem::path& path, std::span<const Tick> ticks,
                 std::span<const int> states) {
  write_text_file(path, format_truth(ticks, states));
}

std::string format_trajectory(const Trajectory& trajectory) {
  const Eigen::Index m = trajectory.empty() ? 0 : trajectory.front().pi.size();
  std::string out = "time,kind";
  for (Eigen::Index i = 0; i < m; ++i) out += ",pi_" + std::to_string(i + 1);
  out += '\n';
  for (const auto& row : trajectory) {
    if (row.pi.size() != m) throw InvalidInput("trajectory rows differ in dimension");
    append_number(out, row.time);
    out += row.kind == PointKind::kTick ? ",tick" : ",probe";
    for (Eigen::Index i = 0; i < m; ++i) {
      out += ',';
      append_number(out, row.pi[i]);
    }
    out += '\n';
  }
  return out;
}

void write_trajectory(const std::filesystem::path& path, const Trajectory& trajectory) {
  write_text_file(path, format_trajectory(trajectory));
}

Trajectory parse_trajectory(std::string_view text) {
  const auto rows = lines(text);
  if (rows.empty()) throw InvalidInput("trajectory file has no header");
  const auto header = fields(rows[0].second);
  if (header.size() < 2 || header[0] != "time" || header[1] != "kind") {
    throw InvalidInput("trajectory header must start with `time,kind`");
  }
  const std::size_t m = header.size() - 2;
  Trajectory out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto [no, line] = rows[r];
    const auto f = fields(line);
    if (f.size() != m + 2) throw InvalidInput("line " + std::to_string(no) + ": wrong field count");
    TrajectoryPoint p;
    p.time = parse_field(f[0], no, "time");
    if (f[1] == "tick") {
      p.kind = PointKind::kTick;
    } else if (f[1] == "probe") {
      p.kind = PointKind::kProbe;
    } else {
      throw InvalidInput("line " + std::to_string(no) + ": kind must be tick or probe");
    }
    p.pi.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) p.pi[static_cast<Eigen::Index>(i)] = parse_field(f[i + 2], no, "pi");
    out.push_back(std::move(p));
  }
  return out;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(read_text_file(path));
}

}  // namespace volfilter
