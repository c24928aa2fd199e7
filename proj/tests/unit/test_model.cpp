#include <doctest.h>

#include <string>

#include "support.hpp"
#include "volfilter/errors.hpp"

using namespace vt;

TEST_CASE("chain rejects a generator row that does not sum to zero") {
  Matrix lam(2, 2);
  lam << -0.5, 0.5, 0.5, -0.4;
  try {
    VolatilityChain(vec({1, 2}), lam, vec({0.5, 0.5}));
    FAIL("expected InvalidModel");
  } catch (const InvalidModel& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("chain rejects negative rates and bad initial laws") {
  Matrix lam(2, 2);
  lam << 0.5, -0.5, 0.5, -0.5;
  CHECK_THROWS_AS(VolatilityChain(vec({1, 2}), lam, vec({0.5, 0.5})), InvalidModel);
  CHECK_THROWS_AS(VolatilityChain(vec({1, 2}), symmetric_generator(2, 1), vec({0.6, 0.6})), InvalidModel);
  CHECK_THROWS_AS(VolatilityChain(vec({1, 2}), symmetric_generator(2, 1), vec({1.2, -0.2})), InvalidModel);
  CHECK_THROWS_AS(VolatilityChain(vec({1, 2}), symmetric_generator(3, 1), vec({0.5, 0.5})), InvalidModel);
}

TEST_CASE("market model enforces the volatility floor") {
  CHECK_THROWS_AS(MarketModel(vec({0, 0}), vec({0.1, 0.0}), 0.0), InvalidModel);
  CHECK_THROWS_AS(MarketModel(vec({0, 0}), vec({0.1, 1e-3}), 0.0, 1e-2), InvalidModel);
  const MarketModel m(vec({0.05, 0.0}), vec({0.2, 0.4}), 1.0);
  CHECK(m.mean_rate(0) == doctest::Approx(0.05 - 0.02));
  CHECK(m.variance_rate(1) == doctest::Approx(0.16));
}

TEST_CASE("policies") {
  CHECK(ObservationPolicy::cox(vec({1, 2})).name() == "cox");
  CHECK(ObservationPolicy::poisson(3).name() == "poisson");
  CHECK(ObservationPolicy::fixed_grid(0.1).name() == "fixed_grid");
  CHECK_THROWS_AS(ObservationPolicy::cox(vec({1, 0})), InvalidModel);
  CHECK_THROWS_AS(ObservationPolicy::poisson(0), InvalidModel);
  CHECK_THROWS_AS(ObservationPolicy::fixed_grid(-1), InvalidModel);
  CHECK_THROWS_AS(ObservationPolicy::cox(vec({1, 2})).check_dimension(3), InvalidModel);
  CHECK(ObservationPolicy::poisson(3).survival_rates(2).isZero());
}

TEST_CASE("transition matrix matches a power-series exponential") {
  const Setup s = three_state_cox();
  for (double t : {0.0, 0.01, 0.3, 2.0, 25.0}) {
    const Matrix p = transition_matrix(s.chain, t);
    const Matrix ref = series_expm(s.chain.intensity() * t);
    CHECK((p - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-14);
    CHECK(p.minCoeff() >= 0.0);
  }
  CHECK(transition_matrix(s.chain, 0.0).isIdentity(0.0));
}

TEST_CASE("transition matrices form a semigroup") {
  const Setup s = three_state_cox();
  for (auto [a, b] : {std::pair{0.1, 0.2}, std::pair{0.7, 1.3}, std::pair{3.0, 0.05}}) {
    const Matrix lhs = transition_matrix(s.chain, a + b);
    const Matrix rhs = transition_matrix(s.chain, a) * transition_matrix(s.chain, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("killed transition matrix") {
  Matrix one(1, 1);
  one << 0.0;
  for (double t : {0.1, 1.0, 3.0}) {
    CHECK(killed_transition_matrix(one, vec({2.0}), t)(0, 0) == doctest::Approx(std::exp(-2.0 * t)).epsilon(1e-14));
  }
  const Setup s = three_state_cox();
  const Vector n = s.policy.survival_rates(3);
  Matrix lam_n = s.chain.intensity();
  lam_n.diagonal() -= n;
  double prev = 3.0;
  for (double t : {0.05, 0.2, 0.5, 1.0}) {
    const Matrix q = killed_transition_matrix(s.chain.intensity(), n, t);
    CHECK((q - series_expm(lam_n * t)).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(q.sum() < prev);
    prev = q.sum();
  }
  const Matrix free = killed_transition_matrix(s.chain.intensity(), Vector::Zero(3), 0.4);
  CHECK((free - transition_matrix(s.chain, 0.4)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("log increment density is a normalized Gaussian") {
  const PathSegmentStats st{-0.01, 0.04, 1.0};
  const double mass = simpson([&](double z) { return log_increment_density(st, z); }, -2.0, 2.0, 4000);
  const double mean = simpson([&](double z) { return z * log_increment_density(st, z); }, -2.0, 2.0, 4000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(mean == doctest::Approx(-0.01).epsilon(1e-8));
  CHECK(log_increment_log_density(st, 0.3) == doctest::Approx(std::log(log_increment_density(st, 0.3))));
  CHECK_THROWS_AS(log_increment_density({0.0, 0.0, 1.0}, 0.1), InvalidStats);
  CHECK_THROWS_AS(log_increment_density({0.0, -1.0, 1.0}, 0.1), InvalidStats);
}

TEST_CASE("segment stats match a Riemann sum over the path") {
  const Setup s = three_state_cox();
  const ChainPath path({0.3, 0.9, 1.4}, {0, 2, 1, 0}, 2.0);
  const SegmentRates rates(s.model, s.policy);
  for (auto [a, b] : {std::pair{0.0, 2.0}, std::pair{0.25, 1.1}, std::pair{1.5, 1.9}}) {
    const PathSegmentStats st = segment_stats(path, a, b, s.model, s.policy);
    const std::size_t steps = 200000;
    const double h = (b - a) / static_cast<double>(steps);
    double m = 0, s2 = 0, haz = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      const int state = path.state_at(a + (static_cast<double>(k) + 0.5) * h);
      m += rates.mean[state] * h;
      s2 += rates.variance[state] * h;
      haz += rates.survival[state] * h;
    }
    CHECK(st.m == doctest::Approx(m).epsilon(1e-5));
    CHECK(st.s2 == doctest::Approx(s2).epsilon(1e-5));
    CHECK(st.w == doctest::Approx(std::exp(-haz)).epsilon(1e-5));
  }
  const auto whole = segment_stats(path, 0.2, 1.7, s.model, s.policy);
  const auto split = segment_stats(path, 0.2, 1.0, s.model, s.policy)
                         .then(segment_stats(path, 1.0, 1.7, s.model, s.policy));
  CHECK(whole.m == doctest::Approx(split.m).epsilon(1e-14));
  CHECK(whole.s2 == doctest::Approx(split.s2).epsilon(1e-14));
  CHECK(whole.w == doctest::Approx(split.w).epsilon(1e-14));
  CHECK_THROWS_AS(segment_stats(path, 1.0, 2.5, s.model, s.policy), InvalidPath);
}

TEST_CASE("chain path validation and lookup") {
  const ChainPath path({0.5, 1.0}, {1, 0, 1}, 2.0);
  CHECK(path.state_at(0.0) == 1);
  CHECK(path.state_at(0.5) == 0);
  CHECK(path.state_at(0.99) == 0);
  CHECK(path.state_at(2.0) == 1);
  CHECK_THROWS_AS(ChainPath({1.0, 0.5}, {0, 1, 0}, 2.0), InvalidPath);
  CHECK_THROWS_AS(ChainPath({0.5}, {0, 0}, 2.0), InvalidPath);
  CHECK_THROWS_AS(ChainPath({0.5}, {0}, 2.0), InvalidPath);
}

TEST_CASE("model fingerprint covers what the tables depend on") {
  const Setup s = two_state_cox();
  const auto base = model_fingerprint(s.chain, s.model, s.policy);
  const VolatilityChain other_prior(s.chain.states(), s.chain.intensity(), vec({0.9, 0.1}));
  CHECK(model_fingerprint(other_prior, s.model, s.policy) == base);
  const MarketModel other_vol(vec({0, 0}), vec({0.1, 0.41}), 0.0);
  CHECK(model_fingerprint(s.chain, other_vol, s.policy) != base);
  CHECK(model_fingerprint(s.chain, s.model, ObservationPolicy::cox(vec({5, 16}))) != base);
  CHECK(model_fingerprint(s.chain, s.model, ObservationPolicy::poisson(10)) != base);
}
