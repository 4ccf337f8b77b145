#pragma once

// Event-driven simulation of the environment process with the tagged
// particle lifted to Z^d, and replica estimators for drift and diffusion.
//
// Reproducibility contract:
//   replica_seed(master, i) = splitmix64(master + 0x9E3779B97F4A7C15 * (i + 1))
//   each replica runs std::mt19937_64 seeded with its replica seed;
//   uniforms on [0,1) are (draw >> 11) * 2^-53, bounded integers use
//   rejection on the full 64-bit draw.
// Jump rates are quantised to multiples of 2^-40 so that event selection is
// exact integer arithmetic, independent of summation order.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sepdiff/generator.hpp"
#include "sepdiff/kernel.hpp"
#include "sepdiff/statespace.hpp"

namespace sepdiff {

inline constexpr int kRateBits = 40;

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica);

using Rng = std::mt19937_64;

double uniform01(Rng& rng);
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

struct TrajectoryState {
  Configuration config;
  std::vector<long long> position;        ///< lifted tagged position X
  double time = 0.0;
  std::vector<std::uint64_t> jump_counts;  ///< N^z per support entry
  std::uint64_t events = 0;
};

/// One enabled transition.  `channel` is the canonical slot:
/// x * J + j for an exchange from env site x along entry j, env_sites * J + j
/// for a tagged jump along entry j.
struct Transition {
  std::size_t channel = 0;
  bool tagged = false;
  int entry = 0;
  int from = -1;
  int to = -1;
  std::uint64_t rate = 0;  ///< quantised
};

/// Shared immutable tables for one (space, kernel) pair.
class Simulator {
 public:
  Simulator(const StateSpace& space, const JumpKernel& kernel);

  const StateSpace& space() const noexcept { return *space_; }
  const KernelTables& tables() const noexcept { return tables_; }
  std::size_t channels() const noexcept { return channels_; }
  std::uint64_t quantised_rate(int entry) const noexcept { return qrates_[entry]; }

  /// Stationary start: uniform draw from the state space.
  TrajectoryState initial_state(Rng& rng) const;

  /// Enabled transitions in channel order.
  std::vector<Transition> enabled(const Configuration& config) const;

  void apply(TrajectoryState& state, const Transition& t) const;

  std::uint64_t channel_rate(const Configuration& config, std::size_t channel) const;
  Transition channel_transition(std::size_t channel) const;

  /// Channels whose rate can change after an exchange touching env site e.
  const std::vector<std::size_t>& channels_near(int e) const { return near_[e]; }

 private:
  const StateSpace* space_;
  KernelTables tables_;
  std::vector<std::uint64_t> qrates_;
  std::size_t channels_ = 0;
  std::vector<std::vector<std::size_t>> near_;
};

enum class StepResult { Moved, Frozen };

/// A single replica: owns its state, RNG and (on the fast path) a Fenwick
/// tree of channel rates.  Both paths produce identical trajectories.
class Trajectory {
 public:
  Trajectory(const Simulator& sim, std::uint64_t seed, bool fast_path = false);

  const TrajectoryState& state() const noexcept { return state_; }

  /// One event at an exponential holding time; Frozen leaves the state
  /// untouched when nothing is enabled.
  StepResult step();

  /// Advances to time T; an event that would land beyond T is discarded.
  void run_until(double horizon);

 private:
  std::uint64_t total_rate() const;
  Transition select(std::uint64_t target) const;
  void rebuild();
  void update(std::size_t channel);

  const Simulator* sim_;
  Rng rng_;
  bool fast_;
  TrajectoryState state_;
  std::vector<std::uint64_t> weights_;
  std::vector<std::uint64_t> fenwick_;
};

TrajectoryState simulate(const StateSpace& space, const JumpKernel& kernel, double horizon, std::uint64_t seed,
                         bool fast_path = false);

struct HorizonEstimate {
  double horizon = 0.0;
  std::vector<double> drift;           ///< mean(X_T) / T
  std::vector<double> drift_se;
  Eigen::MatrixXd covariance;          ///< mean of y y^T, y = (X_T - m(1-alpha) T) / sqrt(T)
  Eigen::MatrixXd covariance_se;
};

struct MCEstimate {
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  std::vector<double> expected_drift;  ///< m (1 - alpha_{N,K})
  HorizonEstimate first;               ///< horizon T
  HorizonEstimate second;              ///< horizon 2T
  /// Per replica positions at T and 2T and event counts, replica order.
  std::vector<std::vector<long long>> positions_t, positions_2t;
  std::vector<std::uint64_t> events_t, events_2t;

  /// a^t C a at horizon T with its standard error.
  std::pair<double, double> quadratic(std::span<const double> a, bool second_horizon = false) const;
};

struct MCOptions {
  double horizon = 100.0;
  std::size_t replicas = 10000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool fast_path = false;
};

MCEstimate estimate_diffusion(const StateSpace& space, const JumpKernel& kernel, const MCOptions& options);

struct CalibrationSystem {
  TorusGeometry geometry;
  int total_particles = 0;
  JumpKernel kernel;
};

struct ArbitrationRow {
  std::size_t system = 0;
  std::size_t replicas = 0;
  double horizon = 0.0;
  std::vector<double> direction;
  double pairing = 0.0;
  double d_plus = 0.0;
  double d_minus = 0.0;
  double mc = 0.0;
  double se = 0.0;
  bool pass_plus = false;
  bool pass_minus = false;
};

struct ArbitrationReport {
  int sign = 0;
  std::vector<ArbitrationRow> rows;
};

struct ArbitrationOptions {
  MCOptions mc;
  /// Horizon is max(mc.horizon, relaxation_factor / gap).
  double relaxation_factor = 10.0;
  std::size_t max_replicas = 160000;
  double bands = 3.0;
};

/// Finds the correction sign under which exact and simulated a^t D a agree
/// within `bands` standard errors on every direction.  Systems where both
/// signs agree trivially (zero correction) are skipped; throws Inconclusive
/// if no system discriminates.
ArbitrationReport arbitrate_sign(const std::vector<CalibrationSystem>& systems, const ArbitrationOptions& options);

}  // namespace sepdiff
