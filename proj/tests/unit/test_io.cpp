#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "volfilter/errors.hpp"
#include "volfilter/io.hpp"

using namespace volfilter;

TEST_CASE("empty tick body is valid") {
  const TickFile t = parse_ticks("time,log_price\n");
  CHECK(t.ticks.empty());
  CHECK_FALSE(t.from_price);
}

TEST_CASE("price column is log transformed") {
  const TickFile t = parse_ticks("time,price\n0,100\n0.5,101.5\n");
  REQUIRE(t.ticks.size() == 2);
  CHECK(t.from_price);
  CHECK(t.ticks[0].logprice == std::log(100.0));
  CHECK(t.ticks[1].logprice == std::log(101.5));
}

TEST_CASE("tick parsing errors name the row") {
  auto message = [](const char* text) -> std::string {
    try {
      parse_ticks(text);
    } catch (const InvalidInput& e) {
      return e.what();
    }
    return "";
  };
  CHECK(message("time,log_price\n0,1\n0.5,1\n0.5,2\n").find("line 4") != std::string::npos);
  CHECK(message("time,log_price\n0,1\n0.5,nan\n").find("line 3") != std::string::npos);
  CHECK(message("time,log_price\n0,1\ninf,1\n").find("line 3") != std::string::npos);
  CHECK(message("time,log_price\n0,1,3\n").find("line 2") != std::string::npos);
  CHECK(message("time,price\n0,-1\n").find("line 2") != std::string::npos);
  CHECK_FALSE(message("t,x\n").empty());
  CHECK_FALSE(message("").empty());
}

TEST_CASE("tick and truth files") {
  const std::vector<Tick> ticks{{0.0, 0.0}, {0.1, 0.0123456789012345678}, {0.35, -1e-9}};
  const TickFile back = parse_ticks(format_ticks(ticks));
  REQUIRE(back.ticks.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.ticks[k].time == ticks[k].time);
    CHECK(back.ticks[k].logprice == ticks[k].logprice);
  }
  const std::vector<int> states{0, 1, 1};
  CHECK(format_truth(ticks, states) == "time,state\n0,1\n0.10000000000000001,2\n0.34999999999999998,2\n");
}

TEST_CASE("trajectory write then read is lossless") {
  Trajectory traj;
  Eigen::VectorXd a(3), b(3);
  a << 0.1, 0.2, 0.7;
  b << 1.0 / 3.0, 2.0 / 3.0 - 1e-17, 1e-300;
  traj.push_back({0.0, PointKind::kTick, a});
  traj.push_back({0.123456789, PointKind::kProbe, b});
  const auto path = std::filesystem::temp_directory_path() / "volfilter_traj.csv";
  write_trajectory(path, traj);
  const Trajectory back = read_trajectory(path);
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].time == traj[k].time);
    CHECK(back[k].kind == traj[k].kind);
    for (Eigen::Index i = 0; i < 3; ++i) {
      CHECK(std::abs(back[k].pi[i] - traj[k].pi[i]) <= 1e-15 * std::abs(traj[k].pi[i]));
    }
  }
  CHECK(format_trajectory(traj).substr(0, 25) == "time,kind,pi_1,pi_2,pi_3\n");
  std::filesystem::remove(path);
}
