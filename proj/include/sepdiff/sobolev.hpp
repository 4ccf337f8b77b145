#pragma once

// Linear solves against the negated generator on the mean-zero subspace and
// the H_1 / H_{-1} machinery built on them.
//
// Every function here takes a generator G (row sums zero, uniform measure
// stationary) and works with the positive operator -G.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sepdiff/generator.hpp"

namespace sepdiff {

enum class SolveMethod { Dense, IterativeSymmetric, IterativeNonsymmetric };
std::string_view to_string(SolveMethod m);

enum class SolverChoice { Auto, Dense, Iterative };

struct SolverOptions {
  double tol = 1e-10;
  int max_iter = 20000;
  int restart = 80;
  std::size_t dense_threshold = 5000;
  std::size_t dense_eigen_threshold = 2000;
  SolverChoice choice = SolverChoice::Auto;
  /// Right-precondition the nonsymmetric solver by an inner solve against
  /// the symmetric part.
  bool precondition = false;
};

struct SolveReport {
  Observable solution;
  double residual = 0.0;
  int iterations = 0;
  SolveMethod method = SolveMethod::Dense;
};

/// Solves (-G) u = b for symmetric G, b mean-zero.
SolveReport solve_spd(const SparseOperator& generator, std::span<const double> b,
                      const SolverOptions& options = {});

/// Solves (-G) u = b for any stationary generator G, b mean-zero.
SolveReport solve_general(const SparseOperator& generator, std::span<const double> b,
                          const SolverOptions& options = {});

/// Solves (lambda - G) u = h, lambda > 0.
SolveReport resolvent_solve(const SparseOperator& generator, std::span<const double> h, double lambda,
                            const SolverOptions& options = {});

/// sqrt <f, -G f>.
double h1_norm(const SparseOperator& generator, std::span<const double> f);

/// sqrt <f, (-G_s)^{-1} f> with G_s the symmetric part of G; f mean-zero.
double hminus1_norm(const SparseOperator& generator, std::span<const double> f,
                    const SolverOptions& options = {});

struct Prop1Report {
  int trials = 0;
  /// max over trials of <h,g> / (|h|_1 |g|_{-1}) for sampled h; must be <= 1.
  double max_dual_ratio = 0.0;
  /// max over trials of |1 - <u,g>/(|u|_1 |g|_{-1})| at the maximiser u.
  double max_attainment_gap = 0.0;
  /// max of |<f,g>| / (|f|_1 |g|_{-1}); must be <= 1 + 1e-9.
  double max_pairing_ratio = 0.0;
  /// min and max of |(-G)f|_{-1} / |f|_1; min must be >= 1 - 1e-9.
  double min_isometry_ratio = 0.0;
  double max_isometry_ratio = 0.0;
  bool symmetric = false;
  bool passed = false;
};

/// Checks the duality, Cauchy-Schwarz and |f|_1 <= |(-G)f|_{-1} inequalities
/// on random mean-zero pairs; throws PropertyViolated on a failure.
Prop1Report verify_prop1(const SparseOperator& generator, int trials, std::uint64_t seed,
                         const SolverOptions& options = {});

/// Smallest nonzero eigenvalue of -G_s.
double spectral_gap(const SparseOperator& generator, const SolverOptions& options = {});

struct SectorReport {
  double constant = 0.0;
  int iterations = 0;
  SolveMethod method = SolveMethod::Dense;
};

/// Smallest C with <f, A g>^2 <= C <f, -G_s f> <g, -G_s g>, A the
/// antisymmetric part of G.
SectorReport sector_constant(const SparseOperator& generator, const SolverOptions& options = {});

struct ResolventPoint {
  double lambda = 0.0;
  double h1_distance = 0.0;  ///< |u_lambda - u_0|_1
  double h1_norm = 0.0;      ///< |u_lambda|_1
  double residual = 0.0;
};

std::vector<ResolventPoint> resolvent_sweep(const SparseOperator& generator, std::span<const double> h,
                                            std::span<const double> lambdas,
                                            const SolverOptions& options = {});

/// min over c of |h - (-G) sum_j c_j g_j|_{-1}, measured against `reference`.
/// Used to track how well a finite local basis approximates h in the
/// range of the generator.
double range_residual(const SparseOperator& generator, const SparseOperator& reference,
                      std::span<const double> h, const std::vector<Observable>& basis,
                      const SolverOptions& options = {});

}  // namespace sepdiff
