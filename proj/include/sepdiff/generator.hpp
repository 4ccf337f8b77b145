#pragma once

// Sparse generators of the environment process and their structural checks.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sepdiff/kernel.hpp"
#include "sepdiff/statespace.hpp"

namespace sepdiff {

/// Real function on the state space, indexed by state rank.
using Observable = std::vector<double>;

inline constexpr std::uint64_t kDefaultNonzeroCap = 50'000'000;

struct OffDiagonal {
  std::uint32_t col = 0;
  double value = 0.0;
};

/// Row-compressed square operator: sorted off-diagonal entries per row plus
/// an explicit diagonal.  Assembled generators carry diagonal = -(row sum of
/// off-diagonals); derived operators (symmetric / antisymmetric parts,
/// adjoints) keep whatever diagonal the algebra produces.
class SparseOperator {
 public:
  SparseOperator() = default;
  explicit SparseOperator(std::size_t size);

  /// Rows must hold distinct, sorted, off-diagonal columns.
  static SparseOperator from_rows(std::vector<std::vector<OffDiagonal>> rows,
                                  std::vector<double> diagonal);
  /// Same, with the generator diagonal -(sum of off-diagonals).
  static SparseOperator generator_from_rows(std::vector<std::vector<OffDiagonal>> rows);

  std::size_t size() const noexcept { return diagonal_.size(); }
  std::size_t nonzeros() const noexcept { return cols_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t row) const noexcept {
    return {cols_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
  }
  std::span<const double> row_values(std::size_t row) const noexcept {
    return {vals_.data() + row_ptr_[row], row_ptr_[row + 1] - row_ptr_[row]};
  }
  double diagonal(std::size_t row) const noexcept { return diagonal_[row]; }

  /// Entry (i, j), zero if absent.
  double at(std::size_t i, std::size_t j) const;

  /// y = A x, fixed per-row accumulation order.
  void apply(std::span<const double> x, std::span<double> y) const;
  Observable apply(std::span<const double> x) const;

  /// Largest total off-diagonal mass in a row.
  double max_row_mass() const;

  Eigen::MatrixXd to_dense() const;

  /// Entrywise combination a*this + b*other.
  SparseOperator combine(double a, const SparseOperator& other, double b) const;

  double max_abs_difference(const SparseOperator& other) const;

 private:
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<double> vals_;
  std::vector<double> diagonal_;
};

struct AssemblyOptions {
  int threads = 1;
  std::uint64_t nonzero_cap = kDefaultNonzeroCap;
  /// Verify column sums after assembly (uniform-measure invariance).  Applied
  /// to the full generator always, and to its two parts only when p is
  /// symmetric: for other kernels neither part alone is stationary.
  bool verify_stationarity = true;
};

/// L_{0,N}: exchanges x -> y = x + z with rate p(z), x occupied, y vacant.
SparseOperator assemble_environment(const StateSpace& space, const JumpKernel& kernel,
                                    const AssemblyOptions& options = {});
/// L_{tau,N}: tagged jumps to vacant z with rate p(z).  Self-loops carry no
/// net rate and are dropped.
SparseOperator assemble_tagged(const StateSpace& space, const JumpKernel& kernel,
                               const AssemblyOptions& options = {});
/// L_N = L_{0,N} + L_{tau,N}, assembled in one pass.
SparseOperator full_generator(const StateSpace& space, const JumpKernel& kernel,
                              const AssemblyOptions& options = {});

/// Adjoint in L^2(mu_{N,K}); mu_{N,K} is uniform so this is the transpose.
SparseOperator adjoint(const SparseOperator& op);
/// (op + op*) / 2.
SparseOperator symmetric_part(const SparseOperator& op);
/// (op - op*) / 2.
SparseOperator antisymmetric_part(const SparseOperator& op);

double mean(std::span<const double> f);
/// <f, g> under the uniform measure.
double inner(std::span<const double> f, std::span<const double> g);
Observable centered(std::span<const double> f);

/// <f, -op f>.
double dirichlet_form(const SparseOperator& op, std::span<const double> f);

/// Throws NotStationary unless every column sum is within 1e-10 * max row mass.
void check_stationarity(const SparseOperator& op);
std::size_t connected_components(const SparseOperator& op);
/// Throws NotConnected (with the component count) unless weakly connected.
void check_ergodicity(const SparseOperator& op);

/// Matrix Market coordinate dump, 1-based, 17 significant digits, diagonal included.
void write_matrix_market(std::ostream& os, const SparseOperator& op);

}  // namespace sepdiff
