#include "sepdiff/diffusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "sepdiff/error.hpp"
#include "sepdiff/parallel.hpp"

namespace sepdiff {

namespace {

double dot_int(std::span<const double> a, std::span<const int> z) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * z[i];
  return s;
}

std::vector<std::vector<double>> polarization_directions(int d) {
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

SparseOperator connected_generator(const StateSpace& space, const JumpKernel& kernel, const AssemblyOptions& opts) {
  auto op = full_generator(space, kernel, opts);
  if (op.size() > 1) check_ergodicity(op);
  return op;
}

}  // namespace

DriftFunctions local_drift_functions(const StateSpace& space, const JumpKernel& kernel,
                                     std::span<const double> direction, std::optional<double> density) {
  const auto& geo = space.geometry();
  if (static_cast<int>(direction.size()) != geo.dimension())
    throw Error(ErrorKind::InvalidArgument, "direction has wrong dimension");
  const double alpha = density.value_or(space.density());

  struct Term {
    double weight;
    int forward;   // env index of z
    int backward;  // env index of -z
  };
  std::vector<Term> terms;
  for (const auto& e : kernel.entries()) {
    Site minus = e.z;
    for (int& c : minus) c = -c;
    terms.push_back({dot_int(direction, e.z) * e.p, geo.env_index(e.z), geo.env_index(minus)});
  }

  DriftFunctions out;
  out.v.resize(space.size());
  out.w.resize(space.size());
  for (std::uint64_t r = 0; r < space.size(); ++r) {
    const auto config = space.unrank(r);
    double v = 0.0, w = 0.0;
    for (const auto& t : terms) {
      v += t.weight * (alpha - (config.test(t.forward) ? 1.0 : 0.0));
      w += t.weight * (alpha - (config.test(t.backward) ? 1.0 : 0.0));
    }
    out.v[r] = v;
    out.w[r] = w;
  }
  out.v = centered(out.v);
  out.w = centered(out.w);
  return out;
}

DirectionReport compute_D_with(const StateSpace& space, const JumpKernel& kernel, const SparseOperator& generator,
                               std::span<const double> direction, const DiffusionOptions& options) {
  if (options.correction_sign != 1 && options.correction_sign != -1)
    throw Error(ErrorKind::InvalidArgument, "correction sign must be +1 or -1");
  DirectionReport rep;
  rep.direction.assign(direction.begin(), direction.end());
  rep.sign = options.correction_sign;
  rep.free_term = (1.0 - space.density()) * kernel.second_moment(direction);
  if (space.size() > 1) {
    const auto drift = local_drift_functions(space, kernel, direction, options.drift_density);
    const auto solve = solve_general(generator, drift.v, options.solver);
    rep.pairing = inner(drift.w, solve.solution);
    rep.residual = solve.residual;
    rep.method = solve.method;
  }
  rep.correction = -rep.sign * 2.0 * rep.pairing;
  rep.value = rep.free_term + rep.correction;
  rep.alternate_value = rep.free_term - rep.correction;
  if (rep.value < -1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << "a^t D a = " << rep.value << " under sign " << rep.sign;
    throw Error(ErrorKind::NonPositiveD, os.str());
  }
  return rep;
}

DiffusionReport compute_D(const StateSpace& space, const JumpKernel& kernel, std::span<const double> direction,
                          const DiffusionOptions& options) {
  const auto generator = connected_generator(space, kernel, options.assembly);
  DiffusionReport rep;
  rep.dimension = space.geometry().dimension();
  rep.half_width = space.geometry().half_width();
  rep.total_particles = space.total_particles();
  rep.density = space.density();
  rep.sign = options.correction_sign;
  rep.directions.push_back(compute_D_with(space, kernel, generator, direction, options));
  rep.min_eigenvalue = rep.directions.front().value;
  return rep;
}

DiffusionReport compute_D_matrix(const StateSpace& space, const JumpKernel& kernel, const DiffusionOptions& options) {
  const int d = space.geometry().dimension();
  const auto generator = connected_generator(space, kernel, options.assembly);
  const auto dirs = polarization_directions(d);

  DiffusionReport rep;
  rep.dimension = d;
  rep.half_width = space.geometry().half_width();
  rep.total_particles = space.total_particles();
  rep.density = space.density();
  rep.sign = options.correction_sign;
  rep.directions.resize(dirs.size());
  parallel_for(dirs.size(), options.assembly.threads, [&](std::size_t i) {
    rep.directions[i] = compute_D_with(space, kernel, generator, dirs[i], options);
  });

  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) m(i, i) = rep.directions[i].value;
  std::size_t k = static_cast<std::size_t>(d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j, ++k) {
      const double q = rep.directions[k].value;
      m(i, j) = m(j, i) = 0.5 * (q - m(i, i) - m(j, j));
    }
  rep.matrix = m;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  rep.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (rep.min_eigenvalue < -1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << "D has minimum eigenvalue " << rep.min_eigenvalue;
    throw Error(ErrorKind::NonPositiveD, os.str());
  }
  return rep;
}

int particles_for_density(double alpha, const TorusGeometry& geometry) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "density must lie in [0, 1]");
  const auto k = static_cast<long long>(std::llround(alpha * geometry.site_count()));
  return static_cast<int>(std::clamp<long long>(k, 1, geometry.site_count()));
}

SweepReport sweep(const JumpKernel& kernel, double alpha, std::span<const int> half_widths,
                  const DiffusionOptions& options, double plateau_rtol, std::uint64_t size_cap) {
  SweepReport rep;
  rep.target_density = alpha;
  rep.plateau_rtol = plateau_rtol;
  for (int n : half_widths) {
    TorusGeometry geo(kernel.dimension(), n);
    const int k = particles_for_density(alpha, geo);
    StateSpace space(geo, k, kernel.range(), size_cap);
    const auto d = compute_D_matrix(space, kernel, options);
    SweepEntry entry{n, k, space.density(), d.matrix, std::nullopt};
    if (!rep.entries.empty()) entry.difference = (d.matrix - rep.entries.back().matrix).cwiseAbs().maxCoeff();
    rep.entries.push_back(std::move(entry));
  }
  if (rep.entries.size() >= 2) {
    const auto& last = rep.entries.back();
    rep.plateau = *last.difference < plateau_rtol * last.matrix.cwiseAbs().maxCoeff();
  }
  return rep;
}

std::vector<int> block_sites(const TorusGeometry& geometry, int l) {
  if (l < 1 || l > geometry.half_width())
    throw Error(ErrorKind::BlockTooLarge, "block radius " + std::to_string(l) + " does not fit in torus of half-width " +
                                              std::to_string(geometry.half_width()));
  std::vector<int> out;
  for (int idx = 0; idx < geometry.site_count(); ++idx) {
    const Site x = geometry.site(idx);
    const bool inside = std::all_of(x.begin(), x.end(), [l](int c) { return c >= -l + 1 && c <= l; });
    if (inside && idx != geometry.origin_index()) out.push_back(geometry.env_index(x));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Observable conditional_expectation(const StateSpace& space, std::span<const double> v, int l) {
  if (v.size() != space.size()) throw Error(ErrorKind::InvalidArgument, "observable size mismatch");
  const auto block = block_sites(space.geometry(), l);
  if (static_cast<int>(block.size()) > kMaxBlockSites)
    throw Error(ErrorKind::SupportTooLarge,
                "block has " + std::to_string(block.size()) + " sites; at most " + std::to_string(kMaxBlockSites));

  double scale = 1.0;
  for (double x : v) scale = std::max(scale, std::abs(x));

  std::vector<std::uint32_t> pattern(space.size());
  std::unordered_map<std::uint32_t, double> value_of;
  for (std::uint64_t r = 0; r < space.size(); ++r) {
    const auto config = space.unrank(r);
    std::uint32_t p = 0;
    for (std::size_t b = 0; b < block.size(); ++b)
      if (config.test(block[b])) p |= (1U << b);
    pattern[r] = p;
    const auto [it, fresh] = value_of.emplace(p, v[r]);
    if (!fresh && std::abs(it->second - v[r]) > 1e-12 * scale)
      throw Error(ErrorKind::SupportTooLarge, "observable depends on sites outside the block of radius " + std::to_string(l));
  }

  // Average over every arrangement of k particles in the block.  All such
  // arrangements are realised in the state space once one is.
  std::vector<double> sum(block.size() + 1, 0.0);
  std::vector<std::uint64_t> count(block.size() + 1, 0);
  std::vector<std::pair<std::uint32_t, double>> ordered(value_of.begin(), value_of.end());
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [p, val] : ordered) {
    const int k = std::popcount(p);
    sum[k] += val;
    ++count[k];
  }
  Observable out(space.size());
  for (std::uint64_t r = 0; r < space.size(); ++r) {
    const int k = std::popcount(pattern[r]);
    out[r] = sum[k] / static_cast<double>(count[k]);
  }
  return out;
}

MultiscaleReport multiscale_diagnostic(const StateSpace& space, std::span<const double> v, int l, int q, int n_max) {
  if (l < 1 || q < 2 || n_max < 1) throw Error(ErrorKind::InvalidArgument, "need l >= 1, q >= 2, n_max >= 1");
  MultiscaleReport rep;
  rep.l = l;
  rep.q = q;
  std::vector<Observable> g;
  long long scale = l;
  for (int n = 0; n <= n_max; ++n, scale *= q) {
    if (scale > space.geometry().half_width())
      throw Error(ErrorKind::BlockTooLarge, "scale l q^" + std::to_string(n) + " = " + std::to_string(scale) +
                                                " exceeds the half-width");
    g.push_back(conditional_expectation(space, v, static_cast<int>(scale)));
    rep.second_moments.emplace_back(static_cast<int>(scale), inner(g.back(), g.back()));
    if (n > 0) {
      Observable diff(space.size());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = g[n][i] - g[n - 1][i];
      rep.entries.push_back({n, static_cast<int>(scale), inner(diff, diff)});
    }
  }
  std::vector<std::pair<double, double>> pts;
  for (const auto& e : rep.entries)
    if (e.increment_variance > 1e-300) pts.emplace_back(std::log(e.scale), std::log(e.increment_variance));
  if (pts.size() >= 2) {
    double mx = 0, my = 0;
    for (auto [x, y] : pts) mx += x, my += y;
    mx /= pts.size();
    my /= pts.size();
    double sxy = 0, sxx = 0;
    for (auto [x, y] : pts) sxy += (x - mx) * (y - my), sxx += (x - mx) * (x - mx);
    rep.decay_exponent = sxy / sxx;
  }
  return rep;
}

Observable LocalFunction::evaluate(const StateSpace& space) const {
  const auto& geo = space.geometry();
  std::vector<std::pair<double, std::vector<int>>> resolved;
  for (const auto& [c, sites] : terms) {
    std::vector<int> env;
    for (const auto& x : sites) {
      const int e = geo.env_index(x);
      if (e < 0) throw Error(ErrorKind::SiteIsOrigin, "local function refers to the origin");
      env.push_back(e);
    }
    resolved.emplace_back(c, std::move(env));
  }
  Observable out(space.size());
  for (std::uint64_t r = 0; r < space.size(); ++r) {
    const auto config = space.unrank(r);
    double val = constant;
    for (const auto& [c, env] : resolved) {
      bool all = true;
      for (int e : env) all = all && config.test(e);
      if (all) val += c;
    }
    out[r] = val;
  }
  return out;
}

LocalFunction LocalFunction::occupation(Site x, double offset) {
  LocalFunction f;
  f.constant = -offset;
  f.terms.push_back({1.0, {std::move(x)}});
  return f;
}

std::vector<HMinus1Entry> hminus1_convergence_diagnostic(const JumpKernel& kernel, double alpha,
                                                         const LocalFunction& v, std::span<const int> half_widths,
                                                         const DiffusionOptions& options, std::uint64_t size_cap) {
  const auto sym = symmetrize(kernel);
  std::vector<HMinus1Entry> out;
  for (int n : half_widths) {
    TorusGeometry geo(kernel.dimension(), n);
    const int k = particles_for_density(alpha, geo);
    StateSpace space(geo, k, kernel.range(), size_cap);
    HMinus1Entry entry{n, k, space.density(), 0.0, std::nullopt};
    if (space.size() > 1) {
      const auto s0 = assemble_environment(space, sym, options.assembly);
      check_ergodicity(s0);
      entry.norm = hminus1_norm(s0, centered(v.evaluate(space)), options.solver);
    }
    if (!out.empty()) entry.difference = std::abs(entry.norm - out.back().norm);
    out.push_back(entry);
  }
  return out;
}

}  // namespace sepdiff
