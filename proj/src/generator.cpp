#include "sepdiff/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

#include "sepdiff/error.hpp"
#include "sepdiff/parallel.hpp"

namespace sepdiff {

namespace {

void merge_sorted(std::vector<OffDiagonal>& row) {
  std::sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.col < b.col; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (out > 0 && row[out - 1].col == row[i].col)
      row[out - 1].value += row[i].value;
    else
      row[out++] = row[i];
  }
  row.resize(out);
}

enum class Parts { Environment = 1, Tagged = 2, Both = 3 };

SparseOperator assemble(const StateSpace& space, const JumpKernel& kernel, Parts parts,
                        const AssemblyOptions& options) {
  const KernelTables tables(space.geometry(), kernel);
  const std::size_t size = space.size();
  const int env = space.env_sites();
  const bool with_env = static_cast<int>(parts) & static_cast<int>(Parts::Environment);
  const bool with_tag = static_cast<int>(parts) & static_cast<int>(Parts::Tagged);

  std::vector<std::vector<OffDiagonal>> rows(size);
  parallel_for(size, options.threads, [&](std::size_t r) {
    const Configuration config = space.unrank(r);
    auto& row = rows[r];
    if (with_env) {
      for (int x : config.occupied()) {
        for (std::size_t j = 0; j < tables.rates.size(); ++j) {
          const int y = tables.exchange_target[j][x];
          if (y < 0 || config.test(y)) continue;
          const auto target = space.rank(space.exchange_env(config, x, y));
          row.push_back({static_cast<std::uint32_t>(target), tables.rates[j]});
        }
      }
    }
    if (with_tag) {
      for (std::size_t j = 0; j < tables.rates.size(); ++j) {
        if (config.test(tables.tagged_target[j])) continue;
        const auto target = space.rank(StateSpace::shift_with(config, tables.shift_source[j], env));
        if (target == r) continue;
        row.push_back({static_cast<std::uint32_t>(target), tables.rates[j]});
      }
    }
    merge_sorted(row);
  });

  std::uint64_t nnz = 0;
  for (const auto& row : rows) nnz += row.size();
  if (nnz > options.nonzero_cap)
    throw Error(ErrorKind::SizeCapExceeded,
                std::to_string(nnz) + " nonzeros exceeds cap " + std::to_string(options.nonzero_cap));
  auto op = SparseOperator::generator_from_rows(std::move(rows));
  // The parts separately preserve the uniform measure only for symmetric p.
  const bool stationary = parts == Parts::Both || classify(kernel).kind == KernelClass::Symmetric;
  if (options.verify_stationarity && stationary) check_stationarity(op);
  return op;
}

}  // namespace

SparseOperator::SparseOperator(std::size_t size) : row_ptr_(size + 1, 0), diagonal_(size, 0.0) {}

SparseOperator SparseOperator::from_rows(std::vector<std::vector<OffDiagonal>> rows,
                                         std::vector<double> diagonal) {
  SparseOperator op;
  op.diagonal_ = std::move(diagonal);
  op.row_ptr_.assign(rows.size() + 1, 0);
  std::size_t nnz = 0;
  for (const auto& row : rows) nnz += row.size();
  op.cols_.reserve(nnz);
  op.vals_.reserve(nnz);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& e : rows[i]) {
      op.cols_.push_back(e.col);
      op.vals_.push_back(e.value);
    }
    op.row_ptr_[i + 1] = op.cols_.size();
  }
  return op;
}

SparseOperator SparseOperator::generator_from_rows(std::vector<std::vector<OffDiagonal>> rows) {
  std::vector<double> diagonal(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double mass = 0.0;
    for (const auto& e : rows[i]) mass += e.value;
    diagonal[i] = -mass;
  }
  return from_rows(std::move(rows), std::move(diagonal));
}

double SparseOperator::at(std::size_t i, std::size_t j) const {
  if (i == j) return diagonal_[i];
  const auto cols = row_cols(i);
  const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(j));
  if (it == cols.end() || *it != j) return 0.0;
  return row_values(i)[static_cast<std::size_t>(it - cols.begin())];
}

void SparseOperator::apply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = diagonal_[i] * x[i];
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += vals_[k] * x[cols_[k]];
    y[i] = acc;
  }
}

Observable SparseOperator::apply(std::span<const double> x) const {
  Observable y(size());
  apply(x, y);
  return y;
}

double SparseOperator::max_row_mass() const {
  double best = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double mass = 0.0;
    for (double v : row_values(i)) mass += std::abs(v);
    best = std::max(best, mass);
  }
  return best;
}

Eigen::MatrixXd SparseOperator::to_dense() const {
  const auto n = static_cast<Eigen::Index>(size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, i) = diagonal_[i];
    const auto cols = row_cols(i);
    const auto vals = row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) m(i, cols[k]) += vals[k];
  }
  return m;
}

SparseOperator SparseOperator::combine(double a, const SparseOperator& other, double b) const {
  if (other.size() != size()) throw Error(ErrorKind::InvalidArgument, "operator size mismatch");
  std::vector<std::vector<OffDiagonal>> rows(size());
  std::vector<double> diagonal(size());
  for (std::size_t i = 0; i < size(); ++i) {
    auto& row = rows[i];
    const auto ca = row_cols(i), cb = other.row_cols(i);
    const auto va = row_values(i), vb = other.row_values(i);
    for (std::size_t k = 0; k < ca.size(); ++k) row.push_back({ca[k], a * va[k]});
    for (std::size_t k = 0; k < cb.size(); ++k) row.push_back({cb[k], b * vb[k]});
    merge_sorted(row);
    std::erase_if(row, [](const OffDiagonal& e) { return e.value == 0.0; });
    diagonal[i] = a * diagonal_[i] + b * other.diagonal_[i];
  }
  return from_rows(std::move(rows), std::move(diagonal));
}

double SparseOperator::max_abs_difference(const SparseOperator& other) const {
  const auto diff = combine(1.0, other, -1.0);
  double best = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    best = std::max(best, std::abs(diff.diagonal(i)));
    for (double v : diff.row_values(i)) best = std::max(best, std::abs(v));
  }
  return best;
}

SparseOperator assemble_environment(const StateSpace& space, const JumpKernel& kernel,
                                    const AssemblyOptions& options) {
  return assemble(space, kernel, Parts::Environment, options);
}

SparseOperator assemble_tagged(const StateSpace& space, const JumpKernel& kernel,
                               const AssemblyOptions& options) {
  return assemble(space, kernel, Parts::Tagged, options);
}

SparseOperator full_generator(const StateSpace& space, const JumpKernel& kernel,
                              const AssemblyOptions& options) {
  return assemble(space, kernel, Parts::Both, options);
}

SparseOperator adjoint(const SparseOperator& op) {
  std::vector<std::vector<OffDiagonal>> rows(op.size());
  for (std::size_t i = 0; i < op.size(); ++i) {
    const auto cols = op.row_cols(i);
    const auto vals = op.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      rows[cols[k]].push_back({static_cast<std::uint32_t>(i), vals[k]});
  }
  // Rows are filled in increasing i, hence already sorted.
  std::vector<double> diagonal(op.size());
  for (std::size_t i = 0; i < op.size(); ++i) diagonal[i] = op.diagonal(i);
  return SparseOperator::from_rows(std::move(rows), std::move(diagonal));
}

SparseOperator symmetric_part(const SparseOperator& op) {
  return op.combine(0.5, adjoint(op), 0.5);
}

SparseOperator antisymmetric_part(const SparseOperator& op) {
  return op.combine(0.5, adjoint(op), -0.5);
}

double mean(std::span<const double> f) {
  if (f.empty()) return 0.0;
  double s = 0.0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

double inner(std::span<const double> f, std::span<const double> g) {
  if (f.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
  return s / static_cast<double>(f.size());
}

Observable centered(std::span<const double> f) {
  const double m = mean(f);
  Observable out(f.begin(), f.end());
  for (double& v : out) v -= m;
  return out;
}

double dirichlet_form(const SparseOperator& op, std::span<const double> f) {
  const auto lf = op.apply(f);
  return -inner(f, lf);
}

void check_stationarity(const SparseOperator& op) {
  std::vector<double> col(op.size(), 0.0);
  for (std::size_t i = 0; i < op.size(); ++i) {
    col[i] += op.diagonal(i);
    const auto cols = op.row_cols(i);
    const auto vals = op.row_values(i);
    for (std::size_t k = 0; k < cols.size(); ++k) col[cols[k]] += vals[k];
  }
  const double tol = 1e-10 * std::max(op.max_row_mass(), 1e-300);
  for (std::size_t j = 0; j < col.size(); ++j) {
    if (std::abs(col[j]) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "column " << j << " sums to " << col[j];
      throw Error(ErrorKind::NotStationary, os.str());
    }
  }
}

std::size_t connected_components(const SparseOperator& op) {
  const std::size_t n = op.size();
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto j : op.row_cols(i)) {
      adj[i].push_back(j);
      adj[j].push_back(static_cast<std::uint32_t>(i));
    }
  std::vector<char> seen(n, 0);
  std::size_t components = 0;
  std::queue<std::uint32_t> frontier;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    frontier.push(static_cast<std::uint32_t>(s));
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      for (auto v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          frontier.push(v);
        }
    }
  }
  return components;
}

void check_ergodicity(const SparseOperator& op) {
  const auto components = connected_components(op);
  if (components > 1)
    throw Error(ErrorKind::NotConnected, "transition graph has " + std::to_string(components) + " components");
}

void write_matrix_market(std::ostream& os, const SparseOperator& op) {
  const std::size_t n = op.size();
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << n << ' ' << n << ' ' << (op.nonzeros() + n) << '\n';
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = op.row_cols(i);
    const auto vals = op.row_values(i);
    std::size_t k = 0;
    auto emit = [&](std::size_t j, double v) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << (i + 1) << ' ' << (j + 1) << ' ' << buf << '\n';
    };
    for (; k < cols.size() && cols[k] < i; ++k) emit(cols[k], vals[k]);
    emit(i, op.diagonal(i));
    for (; k < cols.size(); ++k) emit(cols[k], vals[k]);
  }
}

}  // namespace sepdiff
