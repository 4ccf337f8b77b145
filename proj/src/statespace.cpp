#include "sepdiff/statespace.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

std::vector<int> Configuration::occupied() const {
  std::vector<int> out;
  for (int w = 0; w < kWords; ++w) {
    std::uint64_t bits = words_[w];
    while (bits) {
      out.push_back(w * 64 + std::countr_zero(bits));
      bits &= bits - 1;
    }
  }
  return out;
}

Configuration Configuration::from_occupied(std::span<const int> envs) {
  Configuration c;
  for (int e : envs) c.set(e);
  return c;
}

KernelTables::KernelTables(const TorusGeometry& geometry, const JumpKernel& kernel) {
  const int env = geometry.env_site_count();
  for (const auto& entry : kernel.entries()) {
    rates.push_back(entry.p);
    displacements.push_back(entry.z);
    std::vector<int> target(static_cast<std::size_t>(env));
    for (int x = 0; x < env; ++x) target[x] = geometry.env_index(geometry.add(geometry.env_site(x), entry.z));
    // x + z and the site read by tau_z at x coincide.
    shift_source.push_back(target);
    exchange_target.push_back(std::move(target));
    tagged_target.push_back(geometry.env_index(entry.z));
  }
}

StateSpace::StateSpace(TorusGeometry geometry, int total_particles, int kernel_range,
                       std::uint64_t size_cap)
    : geometry_(std::move(geometry)), total_particles_(total_particles) {
  if (geometry_.half_width() <= kernel_range)
    throw Error(ErrorKind::GeometryTooSmall,
                "torus side 2N = " + std::to_string(geometry_.side()) +
                    " must exceed twice the kernel range " + std::to_string(kernel_range));
  if (total_particles < 1 || total_particles > geometry_.site_count())
    throw Error(ErrorKind::OutOfRange, "K = " + std::to_string(total_particles) +
                                           " outside [1, " + std::to_string(geometry_.site_count()) + "]");
  const int n = geometry_.env_site_count();
  if (n > kMaxEnvSites)
    throw Error(ErrorKind::SizeCapExceeded,
                std::to_string(n) + " environment sites exceeds the supported " + std::to_string(kMaxEnvSites));
  const int k = env_particles();

  constexpr auto kSat = std::numeric_limits<std::uint64_t>::max();
  binom_.assign(static_cast<std::size_t>(n) + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(k) + 1, 0));
  for (int a = 0; a <= n; ++a) {
    binom_[a][0] = 1;
    for (int b = 1; b <= k && b <= a; ++b) {
      const std::uint64_t lhs = binom_[a - 1][b - 1];
      const std::uint64_t rhs = b <= a - 1 ? binom_[a - 1][b] : 0;
      binom_[a][b] = (lhs > kSat - rhs) ? kSat : lhs + rhs;
    }
  }
  size_ = binom_[n][k];
  if (size_ == kSat || size_ > size_cap)
    throw Error(ErrorKind::SizeCapExceeded,
                "state space C(" + std::to_string(n) + "," + std::to_string(k) + ") exceeds cap " +
                    std::to_string(size_cap));
}

double StateSpace::density() const noexcept {
  return static_cast<double>(env_particles()) / static_cast<double>(env_sites());
}

std::uint64_t StateSpace::binomial(int n, int k) const noexcept {
  if (n < 0 || k < 0 || k > n) return 0;
  if (n < static_cast<int>(binom_.size()) && k < static_cast<int>(binom_[n].size())) return binom_[n][k];
  // Outside the table: multiplicative formula, saturating.
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (r >= std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

std::uint64_t StateSpace::rank(const Configuration& config) const {
  const int n = env_sites();
  const int k = env_particles();
  if (config.count() != k)
    throw Error(ErrorKind::WrongCount, "configuration has " + std::to_string(config.count()) +
                                           " particles, expected " + std::to_string(k));
  // Lexicographic rank of the sorted index list via the hockey-stick identity.
  std::uint64_t r = 0;
  int prev = -1;
  int i = 1;
  for (int c : config.occupied()) {
    if (c >= n) throw Error(ErrorKind::OutOfRange, "occupied index beyond environment");
    const int top = k - i + 1;
    r += binomial(n - 1 - prev, top) - binomial(n - c, top);
    prev = c;
    ++i;
  }
  return r;
}

Configuration StateSpace::unrank(std::uint64_t index) const {
  if (index >= size_)
    throw Error(ErrorKind::OutOfRange, "rank " + std::to_string(index) + " >= " + std::to_string(size_));
  const int n = env_sites();
  const int k = env_particles();
  Configuration c;
  int j = 0;
  for (int i = 1; i <= k; ++i) {
    while (true) {
      const std::uint64_t block = binomial(n - 1 - j, k - i);
      if (index < block) break;
      index -= block;
      ++j;
    }
    c.set(j);
    ++j;
  }
  return c;
}

Configuration StateSpace::exchange(const Configuration& config, std::span<const int> x,
                                   std::span<const int> y) const {
  const int ex = geometry_.env_index(x);
  const int ey = geometry_.env_index(y);
  if (ex < 0 || ey < 0) throw Error(ErrorKind::SiteIsOrigin, "exchange involves the origin");
  if (ex == ey) throw Error(ErrorKind::InvalidArgument, "exchange needs two distinct sites");
  return exchange_env(config, ex, ey);
}

Configuration StateSpace::exchange_env(Configuration config, int x, int y) const noexcept {
  const bool bx = config.test(x);
  config.assign(x, config.test(y));
  config.assign(y, bx);
  return config;
}

Configuration StateSpace::shift(const Configuration& config, std::span<const int> z) const {
  const int target = geometry_.env_index(z);
  if (target < 0) throw Error(ErrorKind::TargetIsOrigin, "shift displacement wraps onto the origin");
  if (config.test(target)) throw Error(ErrorKind::TargetOccupied, "shift target is occupied");
  const int n = env_sites();
  std::vector<int> source(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) source[x] = geometry_.env_index(geometry_.add(geometry_.env_site(x), z));
  return shift_with(config, source, n);
}

Configuration StateSpace::shift_with(const Configuration& config, std::span<const int> source,
                                     int env_sites) noexcept {
  Configuration out;
  for (int x = 0; x < env_sites; ++x) {
    const int s = source[x];
    if (s >= 0 && config.test(s)) out.set(x);
  }
  return out;
}

bool StateSpace::occupied(const Configuration& config, std::span<const int> site) const {
  const int e = geometry_.env_index(site);
  return e >= 0 && config.test(e);
}

}  // namespace sepdiff
