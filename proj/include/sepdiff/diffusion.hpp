#pragma once

// Finite-volume self-diffusion matrix of the tagged particle and the
// ensemble / multiscale diagnostics around it.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sepdiff/generator.hpp"
#include "sepdiff/sobolev.hpp"

namespace sepdiff {

/// D = free - sign * 2 <w, (-L_N)^{-1} v>.  sign = -1 is the convention
/// confirmed by the Monte Carlo arbiter (and implied by the martingale
/// decomposition of the tagged displacement); +1 is kept for comparison.
inline constexpr int kDefaultCorrectionSign = -1;

struct DiffusionOptions {
  int correction_sign = kDefaultCorrectionSign;
  SolverOptions solver;
  AssemblyOptions assembly;
  /// Replaces alpha_{N,K} inside v_a / w_a (irrelevant after centering).
  std::optional<double> drift_density;
};

struct DriftFunctions {
  Observable v;  ///< centred sum_z (z.a) p(z) [alpha - eta(z)]
  Observable w;  ///< centred sum_z (z.a) p(z) [alpha - eta(-z)]
};

DriftFunctions local_drift_functions(const StateSpace& space, const JumpKernel& kernel,
                                     std::span<const double> direction,
                                     std::optional<double> density = std::nullopt);

struct DirectionReport {
  std::vector<double> direction;
  double free_term = 0.0;
  /// <w, (-L_N)^{-1} v>, both centred.
  double pairing = 0.0;
  /// -sign * 2 * pairing.
  double correction = 0.0;
  double value = 0.0;          ///< a^t D a under `sign`
  double alternate_value = 0.0;  ///< a^t D a under -sign
  int sign = kDefaultCorrectionSign;
  double residual = 0.0;
  SolveMethod method = SolveMethod::Dense;
};

struct DiffusionReport {
  int dimension = 0;
  int half_width = 0;
  int total_particles = 0;
  double density = 0.0;
  int sign = kDefaultCorrectionSign;
  std::vector<DirectionReport> directions;
  Eigen::MatrixXd matrix;  ///< empty for single-direction reports
  double min_eigenvalue = 0.0;
};

/// Throws NonPositiveD if a^t D a < -1e-9.
DiffusionReport compute_D(const StateSpace& space, const JumpKernel& kernel, std::span<const double> direction,
                          const DiffusionOptions& options = {});

/// Same, reusing an assembled generator.
DirectionReport compute_D_with(const StateSpace& space, const JumpKernel& kernel, const SparseOperator& generator,
                               std::span<const double> direction, const DiffusionOptions& options = {});

/// Full matrix from the quadratic form on {e_i} and {e_i + e_j}.
DiffusionReport compute_D_matrix(const StateSpace& space, const JumpKernel& kernel,
                                 const DiffusionOptions& options = {});

/// K_N = round(alpha (2N)^d) clamped to [1, (2N)^d].
int particles_for_density(double alpha, const TorusGeometry& geometry);

struct SweepEntry {
  int half_width = 0;
  int total_particles = 0;
  double density = 0.0;
  Eigen::MatrixXd matrix;
  /// max |D_N - D_{previous N}|; absent for the first entry.
  std::optional<double> difference;
};

struct SweepReport {
  double target_density = 0.0;
  std::vector<SweepEntry> entries;
  bool plateau = false;
  double plateau_rtol = 0.05;
};

SweepReport sweep(const JumpKernel& kernel, double alpha, std::span<const int> half_widths,
                  const DiffusionOptions& options = {}, double plateau_rtol = 0.05,
                  std::uint64_t size_cap = kDefaultStateCap);

inline constexpr int kMaxBlockSites = 24;

/// Lambda_l = {-l+1, ..., l}^d minus the origin, environment indices.
std::vector<int> block_sites(const TorusGeometry& geometry, int l);

/// E[v | F_{Lambda_l}] for v measurable w.r.t. the occupations in Lambda_l:
/// the average of v over all arrangements of the block's particle count.
/// Throws BlockTooLarge if l > N, SupportTooLarge if |Lambda_l| > 24 or v
/// depends on sites outside the block.
Observable conditional_expectation(const StateSpace& space, std::span<const double> v, int l);

struct MultiscaleEntry {
  int n = 0;
  int scale = 0;              ///< l q^n
  double increment_variance;  ///< <(g_n - g_{n-1})^2>_{N,K}
};

struct MultiscaleReport {
  int l = 0;
  int q = 0;
  std::vector<MultiscaleEntry> entries;
  /// <g_n^2> for n = 0..n_max, scale l q^n.
  std::vector<std::pair<int, double>> second_moments;
  /// Least-squares slope of log variance against log scale; needs two
  /// positive entries.
  std::optional<double> decay_exponent;
};

MultiscaleReport multiscale_diagnostic(const StateSpace& space, std::span<const double> v, int l, int q, int n_max);

/// c0 + sum_j c_j prod_{x in A_j} eta(x); sites are torus coordinates.
struct LocalFunction {
  double constant = 0.0;
  std::vector<std::pair<double, std::vector<Site>>> terms;

  Observable evaluate(const StateSpace& space) const;
  static LocalFunction occupation(Site x, double offset);
};

struct HMinus1Entry {
  int half_width = 0;
  int total_particles = 0;
  double density = 0.0;
  double norm = 0.0;
  std::optional<double> difference;
};

/// |v - <v>_N|_{-1,N} against the symmetrised environment generator,
/// across the given half-widths at density alpha.
std::vector<HMinus1Entry> hminus1_convergence_diagnostic(const JumpKernel& kernel, double alpha,
                                                         const LocalFunction& v, std::span<const int> half_widths,
                                                         const DiffusionOptions& options = {},
                                                         std::uint64_t size_cap = kDefaultStateCap);

}  // namespace sepdiff
