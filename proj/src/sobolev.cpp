#include "sepdiff/sobolev.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include "sepdiff/error.hpp"

namespace sepdiff {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void project_mean_zero(std::span<double> v) {
  const double m = mean(v);
  for (double& x : v) x -= m;
}

void require_mean_zero(std::span<const double> b) {
  double scale = 1.0;
  for (double v : b) scale = std::max(scale, std::abs(v));
  const double m = mean(b);
  if (std::abs(m) > 1e-12 * scale) {
    std::ostringstream os;
    os.precision(17);
    os << "right-hand side has mean " << m;
    throw Error(ErrorKind::NotMeanZero, os.str());
  }
}

bool all_zero(std::span<const double> b) {
  return std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; });
}

bool use_dense(std::size_t n, const SolverOptions& o) {
  if (o.choice == SolverChoice::Dense) return true;
  if (o.choice == SolverChoice::Iterative) return false;
  return n <= o.dense_threshold;
}

Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

Observable from_eigen(const Eigen::VectorXd& v) { return Observable(v.data(), v.data() + v.size()); }

/// -G + (1/n) 11^T, invertible on R^n when G is connected and stationary;
/// on mean-zero right-hand sides it returns the mean-zero solution.
Eigen::MatrixXd deflated_negative(const SparseOperator& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd m = -g.to_dense();
  m.array() += 1.0 / static_cast<double>(n);
  return m;
}

/// Operator wrapper: y = shift*x - G x, optionally projected onto mean-zero.
struct ShiftedNegative {
  const SparseOperator& g;
  double shift = 0.0;
  bool project = true;

  void operator()(std::span<const double> x, std::span<double> y) const {
    g.apply(x, y);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = shift * x[i] - y[i];
    if (project) project_mean_zero(y);
  }
};

double replay_residual(const ShiftedNegative& a, std::span<const double> u, std::span<const double> b) {
  Observable r(u.size());
  a(u, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  const double nb = norm2(b);
  return nb > 0 ? norm2(r) / nb : norm2(r);
}

void enforce_residual(double residual, const SolverOptions& o, std::string_view what) {
  if (!(residual <= 2.0 * o.tol)) {
    std::ostringstream os;
    os.precision(6);
    os << what << ": replayed relative residual " << residual << " exceeds 2*tol = " << 2.0 * o.tol;
    throw Error(ErrorKind::NotConverged, os.str());
  }
}

SolveReport conjugate_gradient(const ShiftedNegative& a, std::span<const double> b, const SolverOptions& o) {
  const std::size_t n = b.size();
  SolveReport rep;
  rep.method = SolveMethod::IterativeSymmetric;
  Observable x(n, 0.0), r(b.begin(), b.end()), p(n), ap(n);
  if (a.project) project_mean_zero(r);
  const double nb = norm2(b);
  int it = 0;
  // Outer loop restarts from the true residual if the recursive one drifted.
  for (int restart = 0; restart < 5; ++restart) {
    if (restart > 0) {
      a(x, r);
      for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
      if (a.project) project_mean_zero(r);
    }
    double rr = dot(r, r);
    if (std::sqrt(rr) <= o.tol * nb) break;
    p = r;
    while (it < o.max_iter) {
      ++it;
      a(p, ap);
      const double pap = dot(p, ap);
      if (!(pap > 0.0)) break;
      const double alpha = rr / pap;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      if (a.project) {
        project_mean_zero(x);
        project_mean_zero(r);
      }
      const double rr_new = dot(r, r);
      if (std::sqrt(rr_new) <= o.tol * nb) break;
      const double beta = rr_new / rr;
      rr = rr_new;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    if (replay_residual(a, x, b) <= o.tol || it >= o.max_iter) break;
  }
  rep.iterations = it;
  rep.solution = std::move(x);
  rep.residual = replay_residual(a, rep.solution, b);
  return rep;
}

using Preconditioner = std::function<Observable(std::span<const double>)>;

/// Flexible restarted GMRES; `precond` may be empty.
SolveReport fgmres(const ShiftedNegative& a, std::span<const double> b, const SolverOptions& o,
                   const Preconditioner& precond) {
  const std::size_t n = b.size();
  const int m = std::max(2, o.restart);
  SolveReport rep;
  rep.method = SolveMethod::IterativeNonsymmetric;
  Observable x(n, 0.0), r(n), w(n);
  const double nb = norm2(b);
  int it = 0;
  std::vector<Observable> v(static_cast<std::size_t>(m) + 1, Observable(n)), z(static_cast<std::size_t>(m));
  std::vector<std::vector<double>> h(static_cast<std::size_t>(m) + 1, std::vector<double>(static_cast<std::size_t>(m), 0.0));
  std::vector<double> cs(static_cast<std::size_t>(m)), sn(static_cast<std::size_t>(m)), g(static_cast<std::size_t>(m) + 1);

  while (it < o.max_iter) {
    a(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    if (a.project) project_mean_zero(r);
    const double beta = norm2(r);
    if (beta <= o.tol * nb) break;
    for (std::size_t i = 0; i < n; ++i) v[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int k = 0;
    for (; k < m && it < o.max_iter; ++k) {
      ++it;
      z[k] = precond ? precond(v[k]) : v[k];
      if (a.project) project_mean_zero(z[k]);
      a(z[k], w);
      // Modified Gram-Schmidt with one reorthogonalisation pass.
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= k; ++i) {
          const double hij = dot(w, v[i]);
          if (pass == 0) h[i][k] = hij; else h[i][k] += hij;
          for (std::size_t q = 0; q < n; ++q) w[q] -= hij * v[i][q];
        }
      }
      const double hnext = norm2(w);
      h[k + 1][k] = hnext;
      if (hnext > 0)
        for (std::size_t q = 0; q < n; ++q) v[k + 1][q] = w[q] / hnext;
      for (int i = 0; i < k; ++i) {
        const double t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
        h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
        h[i][k] = t;
      }
      const double denom = std::hypot(h[k][k], h[k + 1][k]);
      cs[k] = denom > 0 ? h[k][k] / denom : 1.0;
      sn[k] = denom > 0 ? h[k + 1][k] / denom : 0.0;
      h[k][k] = denom;
      h[k + 1][k] = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      if (std::abs(g[k + 1]) <= o.tol * nb || hnext == 0.0) {
        ++k;
        break;
      }
    }
    std::vector<double> y(static_cast<std::size_t>(k));
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int j = i + 1; j < k; ++j) s -= h[i][j] * y[j];
      y[i] = h[i][i] != 0.0 ? s / h[i][i] : 0.0;
    }
    for (int i = 0; i < k; ++i)
      for (std::size_t q = 0; q < n; ++q) x[q] += y[i] * z[i][q];
    if (a.project) project_mean_zero(x);
  }
  rep.iterations = it;
  rep.solution = std::move(x);
  rep.residual = replay_residual(a, rep.solution, b);
  return rep;
}

SolveReport dense_solve(const Eigen::MatrixXd& m, std::span<const double> b, bool spd) {
  SolveReport rep;
  rep.method = SolveMethod::Dense;
  Eigen::VectorXd u;
  if (spd) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) u = llt.solve(as_eigen(b));
    else u = m.partialPivLu().solve(as_eigen(b));
  } else {
    u = m.partialPivLu().solve(as_eigen(b));
  }
  rep.solution = from_eigen(u);
  return rep;
}

/// Deterministic start vector: alternating signs plus a small ramp, mean-removed.
Observable start_vector(std::size_t n) {
  Observable x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = ((i % 2 == 0) ? 1.0 : -1.0) + 0.5 * static_cast<double>(i) / static_cast<double>(n);
  project_mean_zero(x);
  return x;
}

void require_connected(const SparseOperator& g) {
  if (g.size() < 2) throw Error(ErrorKind::InvalidArgument, "operator acts on a single state");
  check_ergodicity(g);
}

/// Uniform [-1, 1) from raw 64-bit draws; platform independent.
double uniform_pm1(std::mt19937_64& rng) {
  return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
}

Observable random_mean_zero(std::size_t n, std::mt19937_64& rng) {
  Observable f(n);
  for (double& v : f) v = uniform_pm1(rng);
  project_mean_zero(f);
  return f;
}

}  // namespace

std::string_view to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::Dense: return "dense";
    case SolveMethod::IterativeSymmetric: return "iterative-symmetric";
    case SolveMethod::IterativeNonsymmetric: return "iterative-nonsymmetric";
  }
  return "unknown";
}

SolveReport solve_spd(const SparseOperator& generator, std::span<const double> b, const SolverOptions& options) {
  require_mean_zero(b);
  const ShiftedNegative a{generator, 0.0, true};
  if (all_zero(b)) return {Observable(b.size(), 0.0), 0.0, 0, SolveMethod::Dense};
  SolveReport rep;
  if (use_dense(b.size(), options)) {
    rep = dense_solve(deflated_negative(generator), b, true);
    project_mean_zero(rep.solution);
    rep.residual = replay_residual(a, rep.solution, b);
  } else {
    rep = conjugate_gradient(a, b, options);
  }
  enforce_residual(rep.residual, options, "solve_spd");
  return rep;
}

SolveReport solve_general(const SparseOperator& generator, std::span<const double> b, const SolverOptions& options) {
  require_mean_zero(b);
  const ShiftedNegative a{generator, 0.0, true};
  if (all_zero(b)) return {Observable(b.size(), 0.0), 0.0, 0, SolveMethod::Dense};
  SolveReport rep;
  if (use_dense(b.size(), options)) {
    rep = dense_solve(deflated_negative(generator), b, false);
    project_mean_zero(rep.solution);
    rep.residual = replay_residual(a, rep.solution, b);
  } else {
    Preconditioner precond;
    SparseOperator sym;
    if (options.precondition) {
      sym = symmetric_part(generator);
      precond = [&sym, &options](std::span<const double> v) {
        SolverOptions inner = options;
        inner.tol = 1e-6;
        inner.choice = SolverChoice::Iterative;
        const ShiftedNegative s{sym, 0.0, true};
        return conjugate_gradient(s, v, inner).solution;
      };
    }
    rep = fgmres(a, b, options, precond);
  }
  enforce_residual(rep.residual, options, "solve_general");
  return rep;
}

SolveReport resolvent_solve(const SparseOperator& generator, std::span<const double> h, double lambda,
                            const SolverOptions& options) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::InvalidArgument, "resolvent needs lambda > 0");
  const ShiftedNegative a{generator, lambda, false};
  if (all_zero(h)) return {Observable(h.size(), 0.0), 0.0, 0, SolveMethod::Dense};
  SolveReport rep;
  if (use_dense(h.size(), options)) {
    Eigen::MatrixXd m = -generator.to_dense();
    m.diagonal().array() += lambda;
    rep = dense_solve(m, h, false);
    rep.residual = replay_residual(a, rep.solution, h);
  } else {
    rep = fgmres(a, h, options, {});
  }
  enforce_residual(rep.residual, options, "resolvent_solve");
  return rep;
}

double h1_norm(const SparseOperator& generator, std::span<const double> f) {
  return std::sqrt(std::max(0.0, dirichlet_form(generator, f)));
}

double hminus1_norm(const SparseOperator& generator, std::span<const double> f, const SolverOptions& options) {
  require_mean_zero(f);
  if (all_zero(f)) return 0.0;
  const auto sym = symmetric_part(generator);
  const auto rep = solve_spd(sym, f, options);
  return std::sqrt(std::max(0.0, inner(f, rep.solution)));
}

Prop1Report verify_prop1(const SparseOperator& generator, int trials, std::uint64_t seed,
                         const SolverOptions& options) {
  require_connected(generator);
  constexpr double kSlack = 1e-9;
  const auto sym = symmetric_part(generator);
  const auto anti = antisymmetric_part(generator);
  const std::size_t n = generator.size();
  std::mt19937_64 rng(seed);

  Prop1Report rep;
  rep.trials = trials;
  rep.symmetric = anti.nonzeros() == 0 ||
                  anti.max_abs_difference(SparseOperator(n)) <= 1e-14 * std::max(1.0, generator.max_row_mass());
  rep.min_isometry_ratio = std::numeric_limits<double>::infinity();

  auto fail = [&](int trial, const std::string& what, double value) {
    std::ostringstream os;
    os.precision(17);
    os << what << " violated at trial " << trial << " (seed " << seed << "): value " << value;
    throw Error(ErrorKind::PropertyViolated, os.str());
  };
  auto minus1 = [&](std::span<const double> v) {
    const auto u = solve_spd(sym, v, options).solution;
    return std::pair{std::sqrt(std::max(0.0, inner(v, u))), u};
  };

  for (int t = 0; t < trials; ++t) {
    const auto f = random_mean_zero(n, rng);
    const auto g = random_mean_zero(n, rng);
    const auto h = random_mean_zero(n, rng);
    const auto [g_m1, u] = minus1(g);
    const double f_1 = h1_norm(generator, f);
    const double h_1 = h1_norm(generator, h);
    const double u_1 = h1_norm(generator, u);

    // (i) variational characterisation of |g|_{-1}
    const double dual = inner(h, g) / (h_1 * g_m1);
    rep.max_dual_ratio = std::max(rep.max_dual_ratio, dual);
    if (dual > 1.0 + kSlack) fail(t, "|g|_{-1} >= <h,g>/|h|_1", dual);
    const double attained = inner(u, g) / (u_1 * g_m1);
    rep.max_attainment_gap = std::max(rep.max_attainment_gap, std::abs(1.0 - attained));
    if (std::abs(1.0 - attained) > kSlack) fail(t, "equality at the maximiser", attained);

    // (ii) |<f,g>| <= |f|_1 |g|_{-1}
    const double pairing = std::abs(inner(f, g)) / (f_1 * g_m1);
    rep.max_pairing_ratio = std::max(rep.max_pairing_ratio, pairing);
    if (pairing > 1.0 + kSlack) fail(t, "|<f,g>| <= |f|_1 |g|_{-1}", pairing);

    // (iii) |f|_1 <= |(-G) f|_{-1}
    Observable lf = generator.apply(f);
    for (double& v : lf) v = -v;
    project_mean_zero(lf);
    const double ratio = minus1(lf).first / f_1;
    rep.min_isometry_ratio = std::min(rep.min_isometry_ratio, ratio);
    rep.max_isometry_ratio = std::max(rep.max_isometry_ratio, ratio);
    if (ratio * (1.0 + kSlack) < 1.0) fail(t, "|f|_1 <= |(-G)f|_{-1}", ratio);
    if (rep.symmetric && std::abs(ratio - 1.0) > kSlack) fail(t, "isometry for symmetric generators", ratio);
  }
  if (trials == 0) rep.min_isometry_ratio = 1.0;
  rep.passed = true;
  return rep;
}

double spectral_gap(const SparseOperator& generator, const SolverOptions& options) {
  require_connected(generator);
  const auto sym = symmetric_part(generator);
  const std::size_t n = sym.size();
  if (use_dense(n, options)) {
    Eigen::MatrixXd p = -sym.to_dense();
    // Lift the constant mode above the spectrum (Gershgorin bound).
    const double lift = 2.0 * sym.max_row_mass() + 1.0;
    p.array() += lift / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
  }
  // Inverse iteration on the mean-zero subspace.
  SolverOptions inner_opts = options;
  inner_opts.choice = SolverChoice::Iterative;
  Observable x = start_vector(n);
  const double nx = norm2(x);
  for (double& v : x) v /= nx;
  // Stop on the eigen-residual: for a symmetric operator some eigenvalue lies
  // within |Sy - mu y| of mu, degenerate or not.
  for (int it = 0; it < 5000; ++it) {
    auto y = solve_spd(sym, x, inner_opts).solution;
    project_mean_zero(y);
    const double ny = norm2(y);
    for (double& v : y) v /= ny;
    const Observable sy = sym.apply(y);
    const double next = -dot(y, sy);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += (sy[i] + next * y[i]) * (sy[i] + next * y[i]);
    x = std::move(y);
    if (std::sqrt(res) <= 1e-10 * std::abs(next)) return next;
  }
  throw Error(ErrorKind::NotConverged, "inverse iteration for the spectral gap did not converge");
}

SectorReport sector_constant(const SparseOperator& generator, const SolverOptions& options) {
  require_connected(generator);
  const auto sym = symmetric_part(generator);
  const auto anti = antisymmetric_part(generator);
  const std::size_t n = generator.size();
  SectorReport rep;
  if (anti.nonzeros() == 0) return rep;

  const bool dense = options.choice == SolverChoice::Dense ||
                     (options.choice == SolverChoice::Auto && n <= options.dense_eigen_threshold);
  if (dense) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-sym.to_dense());
    const auto& vals = eig.eigenvalues();
    const auto& vecs = eig.eigenvectors();
    // Eigenvalues ascend; index 0 is the constant mode on a connected system.
    const Eigen::Index r = static_cast<Eigen::Index>(n) - 1;
    Eigen::MatrixXd w = vecs.rightCols(r);
    for (Eigen::Index j = 0; j < r; ++j) w.col(j) /= std::sqrt(vals(j + 1));
    const Eigen::MatrixXd m = w.transpose() * anti.to_dense() * w;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sv(m.transpose() * m, Eigen::EigenvaluesOnly);
    rep.constant = std::max(0.0, sv.eigenvalues().maxCoeff());
    rep.method = SolveMethod::Dense;
    return rep;
  }

  // Power iteration on (-G_s)^{-1} A^T (-G_s)^{-1} A in the (-G_s) inner product.
  SolverOptions inner_opts = options;
  inner_opts.choice = SolverChoice::Iterative;
  const auto anti_t = adjoint(anti);
  Observable g = start_vector(n);
  double c = 0.0;
  for (int it = 1; it <= 2000; ++it) {
    const double g_norm = std::sqrt(std::max(0.0, dirichlet_form(sym, g)));
    for (double& v : g) v /= g_norm;
    auto ag = anti.apply(g);
    project_mean_zero(ag);
    const auto w = solve_spd(sym, ag, inner_opts).solution;
    const double next = dot(ag, w) / static_cast<double>(n);  // |A g|_{-1}^2 with |g|_1 = 1
    auto atw = anti_t.apply(w);
    project_mean_zero(atw);
    g = solve_spd(sym, atw, inner_opts).solution;
    rep.iterations = it;
    if (it > 1 && std::abs(next - c) <= 1e-11 * std::max(next, 1e-300)) {
      rep.constant = next;
      rep.method = SolveMethod::IterativeSymmetric;
      return rep;
    }
    c = next;
    if (all_zero(g)) {
      rep.constant = 0.0;
      return rep;
    }
  }
  throw Error(ErrorKind::NotConverged, "power iteration for the sector constant did not converge");
}

std::vector<ResolventPoint> resolvent_sweep(const SparseOperator& generator, std::span<const double> h,
                                            std::span<const double> lambdas, const SolverOptions& options) {
  const auto u0 = solve_general(generator, h, options).solution;
  std::vector<ResolventPoint> out;
  for (double lambda : lambdas) {
    const auto rep = resolvent_solve(generator, h, lambda, options);
    Observable diff(u0.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = rep.solution[i] - u0[i];
    out.push_back({lambda, h1_norm(generator, diff), h1_norm(generator, rep.solution), rep.residual});
  }
  return out;
}

double range_residual(const SparseOperator& generator, const SparseOperator& reference,
                      std::span<const double> h, const std::vector<Observable>& basis,
                      const SolverOptions& options) {
  require_mean_zero(h);
  const auto ref_sym = symmetric_part(reference);
  const std::size_t n = h.size();
  const auto k = static_cast<Eigen::Index>(basis.size());
  if (k == 0) return hminus1_norm(reference, h, options);

  std::vector<Observable> images, weighted;
  for (const auto& g : basis) {
    Observable b = generator.apply(centered(g));
    for (double& v : b) v = -v;
    project_mean_zero(b);
    weighted.push_back(solve_spd(ref_sym, b, options).solution);
    images.push_back(std::move(b));
  }
  const auto uh = solve_spd(ref_sym, h, options).solution;
  Eigen::MatrixXd gram(k, k);
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    rhs(i) = inner(images[i], uh);
    for (Eigen::Index j = 0; j < k; ++j) gram(i, j) = inner(images[i], weighted[j]);
  }
  const Eigen::VectorXd c = gram.completeOrthogonalDecomposition().solve(rhs);
  Observable r(h.begin(), h.end());
  for (Eigen::Index j = 0; j < k; ++j)
    for (std::size_t q = 0; q < n; ++q) r[q] -= c(j) * images[j][q];
  project_mean_zero(r);
  return hminus1_norm(reference, r, options);
}

}  // namespace sepdiff
