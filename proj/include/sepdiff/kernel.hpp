#pragma once

// Jump distributions on Z^d and the discrete torus they act on.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sepdiff {

/// Integer vector in Z^d. Used both for displacements and for torus sites.
using Site = std::vector<int>;

struct JumpEntry {
  Site z;
  double p = 0.0;
};

/// Finite-range jump distribution p(.) on Z^d.
///
/// Construction does not validate; call validate() (or use the config
/// loader, which does) before handing a kernel to the rest of the library.
class JumpKernel {
 public:
  JumpKernel() = default;
  JumpKernel(int dimension, std::vector<JumpEntry> entries);

  int dimension() const noexcept { return dimension_; }
  const std::vector<JumpEntry>& entries() const noexcept { return entries_; }
  std::size_t support_size() const noexcept { return entries_.size(); }

  /// Max-norm radius of the support.
  int range() const;

  /// p(z), zero off the support.
  double probability(std::span<const int> z) const;

  /// m = sum_z z p(z).
  std::vector<double> mean() const;

  /// sum_z (a.z)^2 p(z).
  double second_moment(std::span<const double> a) const;

  static JumpKernel symmetric_nearest_neighbor(int dimension);

 private:
  int dimension_ = 0;
  std::vector<JumpEntry> entries_;
};

inline constexpr double kProbabilityTolerance = 1e-12;

/// Throws Error{NotAProbability | OriginMass | Reducible | DuplicateDisplacement}.
void validate(const JumpKernel& kernel);

/// Index of the lattice spanned by `generators` inside Z^d: 1 iff they
/// generate Z^d, 0 when the span is not full rank.
std::int64_t lattice_index(const std::vector<Site>& generators, int dimension);

enum class KernelClass { Symmetric, MeanZero, Asymmetric };

std::string_view to_string(KernelClass c);

struct Classification {
  KernelClass kind = KernelClass::Symmetric;
  std::vector<double> mean;
};

Classification classify(const JumpKernel& kernel);

/// s(x) = (p(x) + p(-x)) / 2, entries sorted lexicographically by z.
JumpKernel symmetrize(const JumpKernel& kernel);

/// Parses "0.25", "1/3", "-2/7"; throws Error{ConfigError} on malformed input.
double parse_probability(std::string_view text);

/// Torus {-N+1, ..., N}^d with -N identified to N.  Sites are enumerated
/// row-major (first coordinate slowest) over these representatives; the
/// environment enumeration is the same order with the origin removed.
class TorusGeometry {
 public:
  TorusGeometry() = default;
  TorusGeometry(int dimension, int half_width);

  int dimension() const noexcept { return dimension_; }
  int half_width() const noexcept { return half_width_; }
  int side() const noexcept { return 2 * half_width_; }
  int site_count() const noexcept { return site_count_; }
  int env_site_count() const noexcept { return site_count_ - 1; }
  int origin_index() const noexcept { return origin_index_; }

  /// Reduce every coordinate into {-N+1, ..., N}.
  Site wrap(std::span<const int> site) const;

  /// x + z, wrapped.
  Site add(std::span<const int> x, std::span<const int> z) const;

  int site_index(std::span<const int> site) const;
  Site site(int index) const;

  /// Environment index of a site (wrapping first); -1 for the origin.
  int env_index(std::span<const int> site) const;
  Site env_site(int env) const;

  bool is_origin(std::span<const int> site) const;

 private:
  int dimension_ = 0;
  int half_width_ = 0;
  int site_count_ = 0;
  int origin_index_ = 0;
};

}  // namespace sepdiff
