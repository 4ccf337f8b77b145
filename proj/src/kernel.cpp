#include "sepdiff/kernel.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

namespace {

std::string format_site(std::span<const int> z) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < z.size(); ++i) os << (i ? "," : "") << z[i];
  os << ')';
  return os.str();
}

Site negated(std::span<const int> z) {
  Site out(z.begin(), z.end());
  for (int& c : out) c = -c;
  return out;
}

int floor_mod(int a, int m) {
  int r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

JumpKernel::JumpKernel(int dimension, std::vector<JumpEntry> entries)
    : dimension_(dimension), entries_(std::move(entries)) {}

int JumpKernel::range() const {
  int r = 0;
  for (const auto& e : entries_)
    for (int c : e.z) r = std::max(r, std::abs(c));
  return r;
}

double JumpKernel::probability(std::span<const int> z) const {
  for (const auto& e : entries_)
    if (std::equal(e.z.begin(), e.z.end(), z.begin(), z.end())) return e.p;
  return 0.0;
}

std::vector<double> JumpKernel::mean() const {
  std::vector<double> m(static_cast<std::size_t>(dimension_), 0.0);
  for (const auto& e : entries_)
    for (int i = 0; i < dimension_; ++i) m[i] += e.z[i] * e.p;
  return m;
}

double JumpKernel::second_moment(std::span<const double> a) const {
  double total = 0.0;
  for (const auto& e : entries_) {
    double dot = 0.0;
    for (int i = 0; i < dimension_; ++i) dot += a[i] * e.z[i];
    total += dot * dot * e.p;
  }
  return total;
}

JumpKernel JumpKernel::symmetric_nearest_neighbor(int dimension) {
  std::vector<JumpEntry> entries;
  const double p = 1.0 / (2.0 * dimension);
  for (int i = 0; i < dimension; ++i) {
    for (int s : {1, -1}) {
      Site z(static_cast<std::size_t>(dimension), 0);
      z[i] = s;
      entries.push_back({z, p});
    }
  }
  return JumpKernel(dimension, std::move(entries));
}

std::int64_t lattice_index(const std::vector<Site>& generators, int dimension) {
  // Integer row echelon form: the lattice index is the product of pivots.
  std::vector<std::vector<std::int64_t>> rows;
  for (const auto& g : generators) rows.emplace_back(g.begin(), g.end());
  std::int64_t index = 1;
  std::size_t pivot_row = 0;
  for (int col = 0; col < dimension; ++col) {
    while (true) {
      // Smallest nonzero |entry| in this column at or below pivot_row.
      std::size_t best = rows.size();
      for (std::size_t r = pivot_row; r < rows.size(); ++r) {
        if (rows[r][col] != 0 &&
            (best == rows.size() || std::llabs(rows[r][col]) < std::llabs(rows[best][col])))
          best = r;
      }
      if (best == rows.size()) return 0;
      std::swap(rows[pivot_row], rows[best]);
      bool reduced = true;
      for (std::size_t r = pivot_row + 1; r < rows.size(); ++r) {
        const std::int64_t q = rows[r][col] / rows[pivot_row][col];
        if (q != 0)
          for (int c = col; c < dimension; ++c) rows[r][c] -= q * rows[pivot_row][c];
        if (rows[r][col] != 0) reduced = false;
      }
      if (reduced) break;
    }
    index *= std::llabs(rows[pivot_row][col]);
    ++pivot_row;
  }
  return index;
}

void validate(const JumpKernel& kernel) {
  const int d = kernel.dimension();
  if (d <= 0) throw Error(ErrorKind::InvalidArgument, "kernel dimension must be positive");
  if (kernel.entries().empty()) throw Error(ErrorKind::NotAProbability, "kernel has no entries");

  std::map<Site, double> seen;
  double sum = 0.0;
  for (const auto& e : kernel.entries()) {
    if (static_cast<int>(e.z.size()) != d)
      throw Error(ErrorKind::InvalidArgument,
                  "displacement " + format_site(e.z) + " has wrong dimension");
    if (!(e.p > 0.0) || e.p > 1.0 + kProbabilityTolerance)
      throw Error(ErrorKind::NotAProbability,
                  "p" + format_site(e.z) + " must lie in (0, 1]");
    if (std::all_of(e.z.begin(), e.z.end(), [](int c) { return c == 0; }))
      throw Error(ErrorKind::OriginMass, "p(0) must be zero");
    if (!seen.emplace(e.z, e.p).second)
      throw Error(ErrorKind::DuplicateDisplacement, "displacement " + format_site(e.z) + " listed twice");
    sum += e.p;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "probabilities sum to " << sum;
    throw Error(ErrorKind::NotAProbability, os.str());
  }

  std::vector<Site> support;
  for (const auto& e : kernel.entries()) support.push_back(e.z);
  const auto index = lattice_index(support, d);
  if (index != 1) {
    throw Error(ErrorKind::Reducible,
                index == 0 ? "support does not span R^d"
                           : "support generates a sublattice of index " + std::to_string(index));
  }
}

std::string_view to_string(KernelClass c) {
  switch (c) {
    case KernelClass::Symmetric: return "symmetric";
    case KernelClass::MeanZero: return "mean-zero";
    case KernelClass::Asymmetric: return "asymmetric";
  }
  return "unknown";
}

Classification classify(const JumpKernel& kernel) {
  Classification out;
  out.mean = kernel.mean();
  bool symmetric = true;
  for (const auto& e : kernel.entries()) {
    if (std::abs(e.p - kernel.probability(negated(e.z))) > kProbabilityTolerance) {
      symmetric = false;
      break;
    }
  }
  if (symmetric) {
    out.kind = KernelClass::Symmetric;
    std::fill(out.mean.begin(), out.mean.end(), 0.0);
    return out;
  }
  const bool zero_mean = std::all_of(out.mean.begin(), out.mean.end(),
                                     [](double m) { return std::abs(m) <= kProbabilityTolerance; });
  out.kind = zero_mean ? KernelClass::MeanZero : KernelClass::Asymmetric;
  if (zero_mean) std::fill(out.mean.begin(), out.mean.end(), 0.0);
  return out;
}

JumpKernel symmetrize(const JumpKernel& kernel) {
  std::map<Site, double> s;
  for (const auto& e : kernel.entries()) {
    s[e.z] += 0.5 * e.p;
    s[negated(e.z)] += 0.5 * e.p;
  }
  std::vector<JumpEntry> entries;
  entries.reserve(s.size());
  for (auto& [z, p] : s) entries.push_back({z, p});
  return JumpKernel(kernel.dimension(), std::move(entries));
}

double parse_probability(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  const auto slash = text.find('/');
  auto parse_double = [&](std::string_view s) {
    s = trim(s);
    std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (buf.empty() || end != buf.c_str() + buf.size())
      throw Error(ErrorKind::ConfigError, "malformed probability '" + std::string(text) + "'");
    return v;
  };
  if (slash == std::string_view::npos) return parse_double(text);

  auto parse_int = [&](std::string_view s) {
    s = trim(s);
    long long v = 0;
    const auto* first = s.data();
    if (!s.empty() && s.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw Error(ErrorKind::ConfigError, "malformed rational '" + std::string(text) + "'");
    return v;
  };
  const long long num = parse_int(text.substr(0, slash));
  const long long den = parse_int(text.substr(slash + 1));
  if (den == 0) throw Error(ErrorKind::ConfigError, "zero denominator in '" + std::string(text) + "'");
  return static_cast<double>(num) / static_cast<double>(den);
}

TorusGeometry::TorusGeometry(int dimension, int half_width)
    : dimension_(dimension), half_width_(half_width) {
  if (dimension <= 0 || half_width <= 0)
    throw Error(ErrorKind::InvalidArgument, "torus dimension and half-width must be positive");
  long long count = 1;
  for (int i = 0; i < dimension; ++i) {
    count *= 2LL * half_width;
    if (count > (1LL << 30)) throw Error(ErrorKind::SizeCapExceeded, "torus has too many sites");
  }
  site_count_ = static_cast<int>(count);
  origin_index_ = site_index(Site(static_cast<std::size_t>(dimension), 0));
}

Site TorusGeometry::wrap(std::span<const int> site) const {
  Site out(site.begin(), site.end());
  const int side = 2 * half_width_;
  for (int& c : out) c = floor_mod(c + half_width_ - 1, side) - half_width_ + 1;
  return out;
}

Site TorusGeometry::add(std::span<const int> x, std::span<const int> z) const {
  Site out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  return wrap(out);
}

int TorusGeometry::site_index(std::span<const int> site) const {
  const int side = 2 * half_width_;
  int index = 0;
  for (int c : site) index = index * side + floor_mod(c + half_width_ - 1, side);
  return index;
}

Site TorusGeometry::site(int index) const {
  const int side = 2 * half_width_;
  Site out(static_cast<std::size_t>(dimension_));
  for (int i = dimension_ - 1; i >= 0; --i) {
    out[i] = index % side - half_width_ + 1;
    index /= side;
  }
  return out;
}

int TorusGeometry::env_index(std::span<const int> site) const {
  const int idx = site_index(site);
  if (idx == origin_index_) return -1;
  return idx < origin_index_ ? idx : idx - 1;
}

Site TorusGeometry::env_site(int env) const {
  return site(env < origin_index_ ? env : env + 1);
}

bool TorusGeometry::is_origin(std::span<const int> site) const {
  return site_index(site) == origin_index_;
}

}  // namespace sepdiff
