#pragma once

// Brute-force reference for the test suite.  Everything is rebuilt from the
// definitions on explicit sets of lattice coordinates: no ranking tables, no
// bitsets, no shared assembly code.  Only suitable for a few thousand states.

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "sepdiff/kernel.hpp"
#include "sepdiff/statespace.hpp"

namespace oracle {

using Coord = std::vector<int>;
using Occupied = std::set<Coord>;

struct Jump {
  Coord z;
  double p;
};

inline int wrap1(int x, int n) {
  const int side = 2 * n;
  int r = ((x + n - 1) % side + side) % side;
  return r - n + 1;
}

inline Coord wrap(const Coord& x, int n) {
  Coord out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = wrap1(x[i], n);
  return out;
}

inline Coord plus(const Coord& x, const Coord& z, int n) {
  Coord s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] + z[i];
  return wrap(s, n);
}

inline Coord minus(const Coord& x, const Coord& z, int n) {
  Coord s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] - z[i];
  return wrap(s, n);
}

inline bool is_zero(const Coord& x) {
  for (int c : x)
    if (c != 0) return false;
  return true;
}

/// All sites of the punctured torus.
inline std::vector<Coord> punctured_sites(int d, int n) {
  std::vector<Coord> out;
  Coord x(d, -n + 1);
  while (true) {
    if (!is_zero(x)) out.push_back(x);
    int i = d - 1;
    while (i >= 0 && x[i] == n) x[i--] = -n + 1;
    if (i < 0) break;
    ++x[i];
  }
  return out;
}

struct System {
  int d = 1;
  int n = 1;
  int k = 1;
  std::vector<Jump> jumps;
  std::vector<Occupied> states;
  std::map<Occupied, int> index;
  Eigen::MatrixXd env;     ///< exchanges only
  Eigen::MatrixXd tagged;  ///< tagged jumps only
  Eigen::MatrixXd full() const { return env + tagged; }
  double alpha() const {
    return static_cast<double>(k - 1) / (static_cast<double>(punctured_sites(d, n).size()));
  }
};

inline void choose(const std::vector<Coord>& sites, std::size_t from, int left, Occupied& cur,
                   std::vector<Occupied>& out) {
  if (left == 0) {
    out.push_back(cur);
    return;
  }
  for (std::size_t i = from; i + left <= sites.size(); ++i) {
    cur.insert(sites[i]);
    choose(sites, i + 1, left - 1, cur, out);
    cur.erase(sites[i]);
  }
}

inline System build(int d, int n, int k, const std::vector<Jump>& jumps) {
  System s;
  s.d = d;
  s.n = n;
  s.k = k;
  s.jumps = jumps;
  const auto sites = punctured_sites(d, n);
  Occupied cur;
  choose(sites, 0, k - 1, cur, s.states);
  for (std::size_t i = 0; i < s.states.size(); ++i) s.index[s.states[i]] = static_cast<int>(i);
  const auto m = static_cast<Eigen::Index>(s.states.size());
  s.env = Eigen::MatrixXd::Zero(m, m);
  s.tagged = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Occupied& eta = s.states[i];
    for (const auto& x : eta)
      for (const auto& j : jumps) {
        const Coord y = plus(x, j.z, n);
        if (is_zero(y) || eta.count(y)) continue;
        Occupied next = eta;
        next.erase(x);
        next.insert(y);
        const int t = s.index.at(next);
        s.env(i, t) += j.p;
        s.env(i, i) -= j.p;
      }
    for (const auto& j : jumps) {
      const Coord target = wrap(j.z, n);
      if (eta.count(target)) continue;
      Occupied next;
      for (const auto& x : eta) next.insert(minus(x, j.z, n));
      const int t = s.index.at(next);
      s.tagged(i, t) += j.p;
      s.tagged(i, i) -= j.p;
    }
  }
  return s;
}

inline System build(const sepdiff::JumpKernel& kernel, int n, int k) {
  std::vector<Jump> jumps;
  for (const auto& e : kernel.entries()) jumps.push_back({e.z, e.p});
  return build(kernel.dimension(), n, k, jumps);
}

/// Oracle index of each library state.
inline std::vector<int> library_to_oracle(const sepdiff::StateSpace& space, const System& sys) {
  std::vector<int> map(space.size());
  for (std::uint64_t i = 0; i < space.size(); ++i) {
    Occupied occ;
    for (int e : space.unrank(i).occupied()) occ.insert(space.geometry().env_site(e));
    map[i] = sys.index.at(occ);
  }
  return map;
}

/// Reorders a library-indexed dense matrix into oracle order.
inline Eigen::MatrixXd permute(const Eigen::MatrixXd& lib, const std::vector<int>& map) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(lib.rows(), lib.cols());
  for (Eigen::Index i = 0; i < lib.rows(); ++i)
    for (Eigen::Index j = 0; j < lib.cols(); ++j) out(map[i], map[j]) = lib(i, j);
  return out;
}

inline double dot(const Coord& z, const std::vector<double>& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * a[i];
  return s;
}

/// Pseudo-inverse solve of (-L) u = b.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& l, const Eigen::VectorXd& b) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(-l);
  cod.setThreshold(1e-12);
  return cod.solve(b);
}

struct DValue {
  double free_term;
  double pairing;  ///< <w, (-L)^{-1} v>, centred, flat average
  double d;        ///< free_term + 2 * pairing
};

/// a^t D a from the martingale form D = free + 2 <w, (-L)^{-1} v>.
inline DValue diffusion(const System& s, const std::vector<double>& a) {
  const double alpha = s.alpha();
  const auto m = static_cast<Eigen::Index>(s.states.size());
  DValue out{0.0, 0.0, 0.0};
  for (const auto& j : s.jumps) out.free_term += (1.0 - alpha) * dot(j.z, a) * dot(j.z, a) * j.p;
  if (m < 2) {
    out.d = out.free_term;
    return out;
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m), w = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (const auto& j : s.jumps) {
      Coord neg(j.z.size());
      for (std::size_t c = 0; c < j.z.size(); ++c) neg[c] = -j.z[c];
      v(i) += dot(j.z, a) * j.p * (alpha - (s.states[i].count(wrap(j.z, s.n)) ? 1.0 : 0.0));
      w(i) += dot(j.z, a) * j.p * (alpha - (s.states[i].count(wrap(neg, s.n)) ? 1.0 : 0.0));
    }
  v.array() -= v.mean();
  w.array() -= w.mean();
  const Eigen::VectorXd u = pinv_solve(s.full(), v);
  out.pairing = w.dot(u) / static_cast<double>(m);
  out.d = out.free_term + 2.0 * out.pairing;
  return out;
}

/// Second smallest eigenvalue of the symmetrised -L.
inline double gap(const Eigen::MatrixXd& l) {
  const Eigen::MatrixXd s = -0.5 * (l + l.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  return eig.eigenvalues()(1);
}

}  // namespace oracle
