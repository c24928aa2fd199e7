#pragma once

// Shared fixtures and independent reference computations for the unit tests.

#include <cmath>
#include <numbers>
#include <vector>

#include "volfilter/filter.hpp"
#include "volfilter/model.hpp"
#include "volfilter/simulator.hpp"
#include "volfilter/structure_table.hpp"

namespace vt {

using namespace volfilter;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Matrix symmetric_generator(std::size_t m, double rate) {
  const auto n = static_cast<Eigen::Index>(m);
  Matrix lam = Matrix::Constant(n, n, rate / static_cast<double>(m - 1));
  lam.diagonal().setConstant(-rate);
  return lam;
}

struct Setup {
  VolatilityChain chain;
  MarketModel model;
  ObservationPolicy policy;
};

// The reference two-regime example.
inline Setup two_state_cox() {
  return {VolatilityChain(vec({0.1, 0.4}), symmetric_generator(2, 0.5), vec({0.5, 0.5})),
          MarketModel(vec({0.0, 0.0}), vec({0.1, 0.4}), 0.0),
          ObservationPolicy::cox(vec({5.0, 15.0}))};
}

inline Setup three_state_cox() {
  Matrix lam(3, 3);
  lam << -0.6, 0.4, 0.2,
          0.3, -0.5, 0.2,
          0.1, 0.5, -0.6;
  return {VolatilityChain(vec({0.1, 0.25, 0.5}), lam, vec({0.3, 0.4, 0.3})),
          MarketModel(vec({0.02, 0.0, -0.05}), vec({0.1, 0.25, 0.5}), 0.0),
          ObservationPolicy::cox(vec({4.0, 8.0, 16.0}))};
}

// All states share drift, vol and arrival rate.
inline Setup uninformative(ObservationPolicy policy) {
  Matrix lam(3, 3);
  lam << -0.8, 0.5, 0.3,
          0.2, -0.4, 0.2,
          0.6, 0.6, -1.2;
  return {VolatilityChain(vec({1.0, 2.0, 3.0}), lam, vec({0.7, 0.2, 0.1})),
          MarketModel(vec({0.01, 0.01, 0.01}), vec({0.2, 0.2, 0.2}), 0.0), std::move(policy)};
}

// exp(A) by scaling and squaring of a long Taylor series.
inline Matrix series_expm(const Matrix& a) {
  int squarings = 0;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.1) {
    norm /= 2.0;
    ++squarings;
  }
  const Matrix b = a / std::pow(2.0, squarings);
  Matrix term = Matrix::Identity(a.rows(), a.cols());
  Matrix sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * b / static_cast<double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum;
}

inline double gaussian(double z, double m, double s2) {
  return std::exp(-0.5 * (z - m) * (z - m) / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
}

// Composite Simpson rule with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, std::size_t panels) {
  const double h = (b - a) / static_cast<double>(panels);
  double s = f(a) + f(b);
  for (std::size_t k = 1; k < panels; ++k) s += (k % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(k));
  return s * h / 3.0;
}

inline double sup_norm(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline GridSpec grid(double t_max, std::size_t n_t, double z_min, double z_max, std::size_t n_z,
                     std::size_t n_paths, std::uint64_t seed = 7) {
  GridSpec g;
  g.t_max = t_max;
  g.n_t = n_t;
  g.z_min = z_min;
  g.z_max = z_max;
  g.n_z = n_z;
  g.n_paths = n_paths;
  g.seed = seed;
  return g;
}

}  // namespace vt
