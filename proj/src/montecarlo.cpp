#include "sepdiff/montecarlo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "sepdiff/diffusion.hpp"
#include "sepdiff/error.hpp"
#include "sepdiff/parallel.hpp"
#include "sepdiff/sobolev.hpp"

namespace sepdiff {

namespace {

constexpr double kRateUnit = 0x1.0p-40;
static_assert(kRateBits == 40);

std::vector<std::vector<double>> unit_and_pair_directions(int d) {
  std::vector<std::vector<double>> dirs;
  for (int i = 0; i < d; ++i) {
    std::vector<double> e(static_cast<std::size_t>(d), 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      std::vector<double> e(static_cast<std::size_t>(d), 0.0);
      e[i] = e[j] = 1.0;
      dirs.push_back(e);
    }
  return dirs;
}

HorizonEstimate summarise(const std::vector<std::vector<long long>>& positions, double horizon,
                          std::span<const double> expected_drift) {
  const std::size_t m = positions.size();
  const std::size_t d = expected_drift.size();
  HorizonEstimate est;
  est.horizon = horizon;
  est.drift.assign(d, 0.0);
  est.drift_se.assign(d, 0.0);
  est.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  est.covariance_se = est.covariance;
  if (m == 0) return est;
  const double md = static_cast<double>(m);

  for (std::size_t a = 0; a < d; ++a) {
    double s = 0.0, s2 = 0.0;
    for (const auto& x : positions) {
      const double v = static_cast<double>(x[a]) / horizon;
      s += v;
      s2 += v * v;
    }
    est.drift[a] = s / md;
    const double var = m > 1 ? std::max(0.0, (s2 - s * s / md) / (md - 1.0)) : 0.0;
    est.drift_se[a] = std::sqrt(var / md);
  }

  const double root_t = std::sqrt(horizon);
  std::vector<double> y(d);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::MatrixXd sum2 = sum;
  for (const auto& x : positions) {
    for (std::size_t a = 0; a < d; ++a)
      y[a] = (static_cast<double>(x[a]) - expected_drift[a] * horizon) / root_t;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        const double p = y[a] * y[b];
        sum(a, b) += p;
        sum2(a, b) += p * p;
      }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) {
      const double mu = sum(a, b) / md;
      est.covariance(a, b) = mu;
      const double var = m > 1 ? std::max(0.0, (sum2(a, b) - md * mu * mu) / (md - 1.0)) : 0.0;
      est.covariance_se(a, b) = std::sqrt(var / md);
    }
  return est;
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t replica_seed(std::uint64_t master, std::uint64_t replica) {
  return splitmix64(master + 0x9E3779B97F4A7C15ULL * (replica + 1));
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  // Rejection on the largest multiple of bound.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  while (true) {
    const std::uint64_t r = rng();
    if (r < limit) return r % bound;
  }
}

Simulator::Simulator(const StateSpace& space, const JumpKernel& kernel)
    : space_(&space), tables_(space.geometry(), kernel) {
  for (double p : tables_.rates) qrates_.push_back(static_cast<std::uint64_t>(std::llround(std::ldexp(p, kRateBits))));
  const int env = space.env_sites();
  const std::size_t j_count = tables_.rates.size();
  channels_ = static_cast<std::size_t>(env) * j_count + j_count;
  near_.assign(static_cast<std::size_t>(env), {});
  for (int x = 0; x < env; ++x)
    for (std::size_t j = 0; j < j_count; ++j) {
      const std::size_t c = static_cast<std::size_t>(x) * j_count + j;
      near_[x].push_back(c);
      const int y = tables_.exchange_target[j][x];
      if (y >= 0) near_[y].push_back(c);
    }
  for (std::size_t j = 0; j < j_count; ++j)
    near_[tables_.tagged_target[j]].push_back(static_cast<std::size_t>(env) * j_count + j);
  for (auto& v : near_) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
}

TrajectoryState Simulator::initial_state(Rng& rng) const {
  TrajectoryState s;
  s.config = space_->unrank(uniform_below(rng, space_->size()));
  s.position.assign(static_cast<std::size_t>(space_->geometry().dimension()), 0);
  s.jump_counts.assign(tables_.rates.size(), 0);
  return s;
}

std::uint64_t Simulator::channel_rate(const Configuration& config, std::size_t channel) const {
  const std::size_t j_count = tables_.rates.size();
  const std::size_t exchange_slots = static_cast<std::size_t>(space_->env_sites()) * j_count;
  if (channel < exchange_slots) {
    const int x = static_cast<int>(channel / j_count);
    const std::size_t j = channel % j_count;
    const int y = tables_.exchange_target[j][x];
    return (config.test(x) && y >= 0 && !config.test(y)) ? qrates_[j] : 0;
  }
  const std::size_t j = channel - exchange_slots;
  return config.test(tables_.tagged_target[j]) ? 0 : qrates_[j];
}

Transition Simulator::channel_transition(std::size_t channel) const {
  const std::size_t j_count = tables_.rates.size();
  const std::size_t exchange_slots = static_cast<std::size_t>(space_->env_sites()) * j_count;
  Transition t;
  t.channel = channel;
  if (channel < exchange_slots) {
    t.entry = static_cast<int>(channel % j_count);
    t.from = static_cast<int>(channel / j_count);
    t.to = tables_.exchange_target[t.entry][t.from];
  } else {
    t.tagged = true;
    t.entry = static_cast<int>(channel - exchange_slots);
    t.to = tables_.tagged_target[t.entry];
  }
  t.rate = qrates_[t.entry];
  return t;
}

std::vector<Transition> Simulator::enabled(const Configuration& config) const {
  std::vector<Transition> out;
  for (std::size_t c = 0; c < channels_; ++c)
    if (channel_rate(config, c) > 0) out.push_back(channel_transition(c));
  return out;
}

void Simulator::apply(TrajectoryState& state, const Transition& t) const {
  if (t.tagged) {
    const auto& z = tables_.displacements[t.entry];
    for (std::size_t i = 0; i < z.size(); ++i) state.position[i] += z[i];
    ++state.jump_counts[t.entry];
    state.config = StateSpace::shift_with(state.config, tables_.shift_source[t.entry], space_->env_sites());
  } else {
    state.config = space_->exchange_env(state.config, t.from, t.to);
  }
  ++state.events;
}

Trajectory::Trajectory(const Simulator& sim, std::uint64_t seed, bool fast_path)
    : sim_(&sim), rng_(seed), fast_(fast_path) {
  state_ = sim.initial_state(rng_);
  if (fast_) rebuild();
}

void Trajectory::rebuild() {
  const std::size_t n = sim_->channels();
  weights_.assign(n, 0);
  fenwick_.assign(n + 1, 0);
  for (std::size_t c = 0; c < n; ++c) weights_[c] = sim_->channel_rate(state_.config, c);
  for (std::size_t i = 1; i <= n; ++i) {
    fenwick_[i] += weights_[i - 1];
    const std::size_t parent = i + (i & (~i + 1));
    if (parent <= n) fenwick_[parent] += fenwick_[i];
  }
}

void Trajectory::update(std::size_t channel) {
  const std::uint64_t w = sim_->channel_rate(state_.config, channel);
  const std::uint64_t delta = w - weights_[channel];  // modular arithmetic
  if (delta == 0) return;
  weights_[channel] = w;
  for (std::size_t i = channel + 1; i < fenwick_.size(); i += i & (~i + 1)) fenwick_[i] += delta;
}

std::uint64_t Trajectory::total_rate() const {
  if (fast_) {
    std::uint64_t s = 0;
    for (std::size_t i = fenwick_.size() - 1; i > 0; i -= i & (~i + 1)) s += fenwick_[i];
    return s;
  }
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < sim_->channels(); ++c) s += sim_->channel_rate(state_.config, c);
  return s;
}

Transition Trajectory::select(std::uint64_t target) const {
  if (fast_) {
    const std::size_t n = sim_->channels();
    std::size_t pos = 0;
    for (std::size_t bit = std::bit_floor(n); bit > 0; bit >>= 1) {
      if (pos + bit <= n && fenwick_[pos + bit] <= target) {
        pos += bit;
        target -= fenwick_[pos];
      }
    }
    return sim_->channel_transition(pos);
  }
  std::uint64_t cumulative = 0;
  for (std::size_t c = 0; c < sim_->channels(); ++c) {
    cumulative += sim_->channel_rate(state_.config, c);
    if (cumulative > target) return sim_->channel_transition(c);
  }
  throw Error(ErrorKind::NotConverged, "event selection overran the total rate");
}

StepResult Trajectory::step() {
  const std::uint64_t total = total_rate();
  if (total == 0) return StepResult::Frozen;
  const double u = uniform01(rng_);
  state_.time += -std::log1p(-u) / (static_cast<double>(total) * kRateUnit);
  const Transition t = select(uniform_below(rng_, total));
  sim_->apply(state_, t);
  if (fast_) {
    if (t.tagged) {
      rebuild();
    } else {
      for (int e : {t.from, t.to})
        for (std::size_t c : sim_->channels_near(e)) update(c);
    }
  }
  return StepResult::Moved;
}

void Trajectory::run_until(double horizon) {
  while (state_.time < horizon) {
    const std::uint64_t total = total_rate();
    if (total == 0) {
      state_.time = horizon;
      return;
    }
    const double u = uniform01(rng_);
    const double next = state_.time + -std::log1p(-u) / (static_cast<double>(total) * kRateUnit);
    if (next > horizon) {
      state_.time = horizon;
      return;
    }
    state_.time = next;
    const Transition t = select(uniform_below(rng_, total));
    sim_->apply(state_, t);
    if (fast_) {
      if (t.tagged) {
        rebuild();
      } else {
        for (int e : {t.from, t.to})
          for (std::size_t c : sim_->channels_near(e)) update(c);
      }
    }
  }
}

TrajectoryState simulate(const StateSpace& space, const JumpKernel& kernel, double horizon, std::uint64_t seed,
                         bool fast_path) {
  if (!(horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
  const Simulator sim(space, kernel);
  Trajectory traj(sim, seed, fast_path);
  traj.run_until(horizon);
  return traj.state();
}

std::pair<double, double> MCEstimate::quadratic(std::span<const double> a, bool second_horizon) const {
  const auto& positions = second_horizon ? positions_2t : positions_t;
  const double horizon = second_horizon ? second.horizon : first.horizon;
  const std::size_t m = positions.size();
  if (m == 0) return {0.0, 0.0};
  const double root_t = std::sqrt(horizon);
  double s = 0.0, s2 = 0.0;
  for (const auto& x : positions) {
    double y = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      y += a[i] * (static_cast<double>(x[i]) - expected_drift[i] * horizon) / root_t;
    s += y * y;
    s2 += y * y * y * y;
  }
  const double md = static_cast<double>(m);
  const double mu = s / md;
  const double var = m > 1 ? std::max(0.0, (s2 - md * mu * mu) / (md - 1.0)) : 0.0;
  return {mu, std::sqrt(var / md)};
}

MCEstimate estimate_diffusion(const StateSpace& space, const JumpKernel& kernel, const MCOptions& options) {
  if (!(options.horizon > 0.0)) throw Error(ErrorKind::InvalidArgument, "horizon must be positive");
  if (options.replicas == 0) throw Error(ErrorKind::InvalidArgument, "need at least one replica");
  const Simulator sim(space, kernel);
  const std::size_t m = options.replicas;

  MCEstimate est;
  est.seed = options.seed;
  est.replicas = m;
  est.expected_drift = kernel.mean();
  for (double& v : est.expected_drift) v *= (1.0 - space.density());
  est.positions_t.resize(m);
  est.positions_2t.resize(m);
  est.events_t.resize(m);
  est.events_2t.resize(m);

  parallel_for(m, options.threads, [&](std::size_t i) {
    Trajectory traj(sim, replica_seed(options.seed, i), options.fast_path);
    traj.run_until(options.horizon);
    est.positions_t[i] = traj.state().position;
    est.events_t[i] = traj.state().events;
    traj.run_until(2.0 * options.horizon);
    est.positions_2t[i] = traj.state().position;
    est.events_2t[i] = traj.state().events;
  });

  est.first = summarise(est.positions_t, options.horizon, est.expected_drift);
  est.second = summarise(est.positions_2t, 2.0 * options.horizon, est.expected_drift);
  return est;
}

ArbitrationReport arbitrate_sign(const std::vector<CalibrationSystem>& systems, const ArbitrationOptions& options) {
  ArbitrationReport rep;
  for (std::size_t s = 0; s < systems.size(); ++s) {
    const auto& sys = systems[s];
    validate(sys.kernel);
    StateSpace space(sys.geometry, sys.total_particles, sys.kernel.range());
    const auto generator = full_generator(space, sys.kernel);
    const auto dirs = unit_and_pair_directions(sys.geometry.dimension());

    std::vector<double> free(dirs.size(), 0.0), pairing(dirs.size(), 0.0);
    bool degenerate = true;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      free[k] = (1.0 - space.density()) * sys.kernel.second_moment(dirs[k]);
      if (space.size() > 1) {
        const auto drift = local_drift_functions(space, sys.kernel, dirs[k]);
        pairing[k] = inner(drift.w, solve_general(generator, drift.v).solution);
      }
      if (std::abs(2.0 * pairing[k]) > 1e-12 * std::max(1.0, free[k])) degenerate = false;
    }

    double horizon = options.mc.horizon;
    if (space.size() > 1) {
      check_ergodicity(generator);
      horizon = std::max(horizon, options.relaxation_factor / spectral_gap(generator));
    }

    std::size_t replicas = options.mc.replicas;
    for (int round = 0;; ++round) {
      MCOptions mc = options.mc;
      mc.horizon = horizon;
      mc.replicas = replicas;
      mc.seed = replica_seed(options.mc.seed, 1000 * s + static_cast<std::uint64_t>(round));
      const auto est = estimate_diffusion(space, sys.kernel, mc);
      bool plus_ok = true, minus_ok = true;
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        const auto [q, se] = est.quadratic(dirs[k]);
        ArbitrationRow row;
        row.system = s;
        row.replicas = replicas;
        row.horizon = horizon;
        row.direction = dirs[k];
        row.pairing = pairing[k];
        row.d_plus = free[k] - 2.0 * pairing[k];
        row.d_minus = free[k] + 2.0 * pairing[k];
        row.mc = q;
        row.se = se;
        row.pass_plus = std::abs(row.d_plus - q) <= options.bands * se;
        row.pass_minus = std::abs(row.d_minus - q) <= options.bands * se;
        plus_ok = plus_ok && row.pass_plus;
        minus_ok = minus_ok && row.pass_minus;
        rep.rows.push_back(row);
      }
      if (degenerate) break;
      if (plus_ok != minus_ok) {
        rep.sign = plus_ok ? 1 : -1;
        return rep;
      }
      if (replicas * 2 > options.max_replicas) break;
      replicas *= 2;
    }
  }
  throw Error(ErrorKind::Inconclusive, "no calibration system singled out a correction sign");
}

}  // namespace sepdiff
