#pragma once

// Offline structure functions for the chain filter.
//
//   q_ji(t, z)  = E[ 1{theta_t = a_i} w rho_{0,t}(z) | theta_0 = a_j ]
//   qbar_ji(t)  = E[ 1{theta_t = a_i} w | theta_0 = a_j ]
//   p_ji(t)     = P(theta_t = a_i | theta_0 = a_j)
//
// with w = exp(-int_0^t n(theta_u) du) for Cox arrivals and w = 1 otherwise.
// q is estimated by Monte Carlo, post-stratified on the end state with the
// exact p as stratum weights. Within the a_j -> a_j stratum the paths without
// a jump (probability exp(-t |lambda_jj|)) contribute their exact density and
// only the remaining paths are sampled. qbar and p are exact matrix exponentials
// (qbar is the Feynman-Kac semigroup of the killed generator Lambda - diag n).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "volfilter/model.hpp"

namespace volfilter {

struct GridSpec {
  double t_max = 1.0;
  std::size_t n_t = 101;
  double z_min = -1.0;
  double z_max = 1.0;
  std::size_t n_z = 201;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;

  void validate() const;
  double t_step() const { return t_max / static_cast<double>(n_t - 1); }
  double z_step() const { return (z_max - z_min) / static_cast<double>(n_z - 1); }
  double t_at(std::size_t k) const { return static_cast<double>(k) * t_step(); }
  double z_at(std::size_t l) const { return z_min + static_cast<double>(l) * z_step(); }
};

/// Default z range: worst-case segment mean at t_max plus or minus eight
/// worst-case standard deviations.
std::pair<double, double> default_z_range(const MarketModel& model, double t_max);

struct BuildOptions {
  int threads = 1;
  std::size_t max_entries = std::size_t{1} << 25;  // per q array
};

class StructureTable {
 public:
  StructureTable(GridSpec grid, PolicyKind policy, std::uint64_t model_hash, Matrix intensity,
                 Vector survival_rates, Vector mean_rates, std::vector<double> q, std::vector<double> q_stderr,
                 std::vector<double> qbar, std::vector<double> qbar_stderr, std::vector<double> p,
                 std::vector<double> tail_budget);

  const GridSpec& grid() const { return grid_; }
  PolicyKind policy() const { return policy_; }
  std::uint64_t model_hash() const { return model_hash_; }
  std::size_t size() const { return m_; }
  const Matrix& intensity() const { return intensity_; }
  const Vector& survival_rates() const { return survival_rates_; }
  /// Log-price drift rate r_i - v_i^2 / 2 per state.
  const Vector& mean_rates() const { return mean_rates_; }
  /// intensity - diag(survival_rates); qbar(t) = exp(t G).
  const Matrix& killed_generator() const { return killed_generator_; }

  double q(std::size_t j, std::size_t i, std::size_t k, std::size_t l) const {
    return q_[idx4(j, i, k, l)];
  }
  double q_stderr(std::size_t j, std::size_t i, std::size_t k, std::size_t l) const {
    return q_stderr_[idx4(j, i, k, l)];
  }
  double qbar(std::size_t j, std::size_t i, std::size_t k) const { return qbar_[idx3(j, i, k)]; }
  double qbar_stderr(std::size_t j, std::size_t i, std::size_t k) const {
    return qbar_stderr_[idx3(j, i, k)];
  }
  double p(std::size_t j, std::size_t i, std::size_t k) const { return p_[idx3(j, i, k)]; }
  /// Estimated density mass of q_ji(t_k, .) falling outside [z_min, z_max].
  double tail_budget(std::size_t j, std::size_t i, std::size_t k) const {
    return tail_budget_[idx3(j, i, k)];
  }

  const std::vector<double>& q_data() const { return q_; }
  const std::vector<double>& q_stderr_data() const { return q_stderr_; }
  const std::vector<double>& qbar_data() const { return qbar_; }
  const std::vector<double>& qbar_stderr_data() const { return qbar_stderr_; }
  const std::vector<double>& p_data() const { return p_; }
  const std::vector<double>& tail_budget_data() const { return tail_budget_; }

 private:
  std::size_t idx3(std::size_t j, std::size_t i, std::size_t k) const {
    return (j * m_ + i) * grid_.n_t + k;
  }
  std::size_t idx4(std::size_t j, std::size_t i, std::size_t k, std::size_t l) const {
    return idx3(j, i, k) * grid_.n_z + l;
  }

  GridSpec grid_;
  PolicyKind policy_;
  std::uint64_t model_hash_;
  std::size_t m_;
  Matrix intensity_;
  Vector survival_rates_;
  Vector mean_rates_;
  Matrix killed_generator_;
  std::vector<double> q_;
  std::vector<double> q_stderr_;
  std::vector<double> qbar_;
  std::vector<double> qbar_stderr_;
  std::vector<double> p_;
  std::vector<double> tail_budget_;
};

StructureTable build_table(const VolatilityChain& chain, const MarketModel& model,
                           const ObservationPolicy& policy, const GridSpec& grid,
                           const BuildOptions& options = {});

/// Structure function q_ji(dt, dz). The normalized density q / qbar is
/// interpolated on the (t, z) grid and multiplied by the exact qbar_ji(dt).
/// Interpolation is linear in z; in t each bracketing node t_k is read at the
/// diffusively rescaled increment
///   z_k = mu_j t_k + (dz - mu_j dt) sqrt(t_k / dt),  weight sqrt(t_k / dt),
/// which is exact for paths that stay in a_j and reduces to bilinear
/// interpolation on the nodes. Gaps below the first node use t_1 alone.
/// Returns 0 for dz outside [z_min, z_max]; throws HorizonExceeded for
/// dt > t_max.
double eval_q(const StructureTable& table, std::size_t j, std::size_t i, double dt, double dz);

/// All q_ji(dt, dz) at once, entry (j, i).
Matrix eval_q_matrix(const StructureTable& table, double dt, double dz);

/// qbar_ji(dt), carried from the nearest node by the killed semigroup:
/// qbar(t_k + s) = qbar(t_k) exp(s G).
double eval_qbar(const StructureTable& table, std::size_t j, std::size_t i, double dt);
Matrix eval_qbar_matrix(const StructureTable& table, double dt);

/// Next-arrival profile seen from a tick with posterior `anchor`:
///   occupation(u)_i = sum_j anchor_j qbar_ji(u)
///   tail(u)         = int_u^inf sum_i n_i occupation(s)_i ds
/// Since qbar(s) = qbar(u) exp((s - u) G) and G is a nonsingular M-matrix when
/// every n_i > 0, the integral closes: tail(u) = occupation(u) . (-G)^{-1} n.
class ArrivalProfile {
 public:
  ArrivalProfile(const StructureTable& table, const Vector& anchor);

  Vector occupation(double u) const;
  /// Tail mass; may be zero, callers decide how to handle degeneracy.
  double tail(double u) const;
  /// Same, given occupation(u).
  double tail_given(const Vector& occupation) const { return occupation.dot(mean_wait_); }

 private:
  const StructureTable* table_;
  Vector anchor_;
  Vector mean_wait_;  // (-G)^{-1} n
};

/// Denominator of the between-tick correction. Throws DegenerateDenominator
/// when it is not positive and InvalidInput for non-Cox tables.
double tail_mass(const StructureTable& table, const Vector& pi, double t);

void save_table(const StructureTable& table, const std::filesystem::path& path);
StructureTable load_table(const std::filesystem::path& path);
/// Load and check that the table was built for the given model.
StructureTable load_table(const std::filesystem::path& path, std::uint64_t expected_hash);

}  // namespace volfilter
