#pragma once

// Canonical state space of the environment seen from the tagged particle:
// K-1 particles on the punctured torus, densely ranked.

#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "sepdiff/kernel.hpp"

namespace sepdiff {

inline constexpr int kMaxEnvSites = 256;
inline constexpr std::uint64_t kDefaultStateCap = 500'000;

/// Occupancy of the environment sites, one bit per site in environment order.
class Configuration {
 public:
  static constexpr int kWords = kMaxEnvSites / 64;

  bool test(int env) const noexcept { return (words_[env >> 6] >> (env & 63)) & 1U; }
  void set(int env) noexcept { words_[env >> 6] |= (std::uint64_t{1} << (env & 63)); }
  void reset(int env) noexcept { words_[env >> 6] &= ~(std::uint64_t{1} << (env & 63)); }
  void assign(int env, bool value) noexcept { value ? set(env) : reset(env); }

  int count() const noexcept {
    int c = 0;
    for (auto w : words_) c += std::popcount(w);
    return c;
  }

  /// Occupied environment indices in increasing order.
  std::vector<int> occupied() const;

  static Configuration from_occupied(std::span<const int> envs);

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::array<std::uint64_t, kWords> words_{};
};

/// Per-kernel lookup tables on a fixed torus.  For support entry j with
/// displacement z_j:
///   exchange_target[j][x]  environment index of x + z_j, or -1 if that is the origin
///   tagged_target[j]       environment index of z_j
///   shift_source[j][x]     environment index of x + z_j (the site read by tau_z
///                          at x), or -1 when x = -z_j
struct KernelTables {
  std::vector<double> rates;
  std::vector<Site> displacements;
  std::vector<std::vector<int>> exchange_target;
  std::vector<int> tagged_target;
  std::vector<std::vector<int>> shift_source;

  KernelTables(const TorusGeometry& geometry, const JumpKernel& kernel);
};

class StateSpace {
 public:
  /// Throws GeometryTooSmall unless N > kernel_range, OutOfRange unless
  /// 1 <= K <= (2N)^d, SizeCapExceeded when C((2N)^d - 1, K - 1) > size_cap.
  StateSpace(TorusGeometry geometry, int total_particles, int kernel_range,
             std::uint64_t size_cap = kDefaultStateCap);

  const TorusGeometry& geometry() const noexcept { return geometry_; }
  /// K, including the tagged particle.
  int total_particles() const noexcept { return total_particles_; }
  int env_particles() const noexcept { return total_particles_ - 1; }
  int env_sites() const noexcept { return geometry_.env_site_count(); }
  std::uint64_t size() const noexcept { return size_; }

  /// alpha_{N,K} = (K-1) / ((2N)^d - 1).
  double density() const noexcept;

  std::uint64_t rank(const Configuration& config) const;
  Configuration unrank(std::uint64_t index) const;

  /// sigma^{xy}: swap occupancies at x and y.
  Configuration exchange(const Configuration& config, std::span<const int> x,
                         std::span<const int> y) const;
  Configuration exchange_env(Configuration config, int x, int y) const noexcept;

  /// tau_z: tagged particle jumps to z, frame recentred.
  Configuration shift(const Configuration& config, std::span<const int> z) const;
  static Configuration shift_with(const Configuration& config, std::span<const int> source,
                                  int env_sites) noexcept;

  bool occupied(const Configuration& config, std::span<const int> site) const;

  std::uint64_t binomial(int n, int k) const noexcept;

 private:
  TorusGeometry geometry_;
  int total_particles_;
  std::uint64_t size_ = 0;
  // binom_[n][k] for n <= env_sites, k <= env_particles, saturating.
  std::vector<std::vector<std::uint64_t>> binom_;
};

}  // namespace sepdiff
