#include <random>
#include <sstream>

#include <doctest.h>

#include "helpers.hpp"
#include "oracle.hpp"
#include "sepdiff/generator.hpp"

using namespace sepdiff;
using testing::expect_error;

namespace {

struct Case {
  JumpKernel kernel;
  int n;
  int k;
};

std::vector<Case> oracle_cases() {
  const JumpKernel skewed2d(2, {{{1, 0}, 0.4}, {{0, 1}, 0.3}, {{-1, -1}, 0.3}});
  return {{testing::nn(), 2, 2},        {testing::nn(), 3, 3},
          {testing::mean_zero(), 3, 3}, {testing::mean_zero(), 3, 4},
          {testing::totally_asymmetric(), 2, 2}, {testing::totally_asymmetric(), 4, 5},
          {testing::nn(2), 2, 4},       {skewed2d, 2, 5}};
}

Observable random_observable(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Observable f(n);
  for (auto& x : f) x = g(rng);
  return f;
}

Eigen::MatrixXd hand_matrix() {
  Eigen::MatrixXd m(3, 3);
  m << -1, 0, 1, 0, -1, 1, 1, 1, -2;
  return m;
}

}  // namespace

TEST_SUITE("generator") {
  TEST_CASE("assembly matches the brute-force oracle") {
    for (const auto& c : oracle_cases()) {
      CAPTURE(c.n);
      CAPTURE(c.k);
      const StateSpace space(TorusGeometry(c.kernel.dimension(), c.n), c.k, c.kernel.range());
      const auto sys = oracle::build(c.kernel, c.n, c.k);
      REQUIRE(sys.states.size() == space.size());
      const auto map = oracle::library_to_oracle(space, sys);
      const auto env = oracle::permute(assemble_environment(space, c.kernel).to_dense(), map);
      const auto tag = oracle::permute(assemble_tagged(space, c.kernel).to_dense(), map);
      const auto full = oracle::permute(full_generator(space, c.kernel).to_dense(), map);
      CHECK((env - sys.env).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((tag - sys.tagged).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((full - sys.full()).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  TEST_CASE("three-state system by hand") {
    // Environment sites {-1, 1, 2}, one environment particle.
    const StateSpace space(TorusGeometry(1, 2), 2, 1);
    std::vector<int> order(3);
    for (std::uint64_t i = 0; i < 3; ++i) {
      const Site x = space.geometry().env_site(space.unrank(i).occupied().front());
      order[i] = x[0] == -1 ? 0 : x[0] == 1 ? 1 : 2;
    }
    const auto sym = oracle::permute(full_generator(space, testing::nn()).to_dense(), order);
    CHECK((sym - hand_matrix()).cwiseAbs().maxCoeff() < 1e-15);

    Eigen::MatrixXd env0(3, 3);
    env0 << -0.5, 0, 0.5, 0, -0.5, 0.5, 0.5, 0.5, -1;
    CHECK((oracle::permute(assemble_environment(space, testing::nn()).to_dense(), order) - env0)
              .cwiseAbs()
              .maxCoeff() < 1e-15);

    const auto asym = oracle::permute(full_generator(space, testing::totally_asymmetric()).to_dense(), order);
    CHECK((asym - hand_matrix()).cwiseAbs().maxCoeff() < 1e-15);
    Eigen::MatrixXd envt(3, 3);
    envt << 0, 0, 0, 0, -1, 1, 1, 0, -1;
    CHECK((oracle::permute(assemble_environment(space, testing::totally_asymmetric()).to_dense(), order) - envt)
              .cwiseAbs()
              .maxCoeff() < 1e-15);
  }

  TEST_CASE("degenerate particle numbers give the zero operator") {
    for (const auto& kernel : {testing::nn(), testing::mean_zero(), testing::totally_asymmetric()}) {
      const StateSpace one(TorusGeometry(1, 3), 1, kernel.range());
      const StateSpace full(TorusGeometry(1, 3), 6, kernel.range());
      for (const auto* s : {&one, &full}) {
        CHECK(assemble_environment(*s, kernel).to_dense().cwiseAbs().maxCoeff() == 0.0);
        CHECK(assemble_tagged(*s, kernel).to_dense().cwiseAbs().maxCoeff() == 0.0);
        CHECK(full_generator(*s, kernel).to_dense().cwiseAbs().maxCoeff() == 0.0);
        CHECK_NOTHROW(check_ergodicity(full_generator(*s, kernel)));
      }
    }
  }

  TEST_CASE("linearity, row sums, column sums") {
    const auto k = testing::mean_zero();
    const StateSpace space(TorusGeometry(1, 4), 4, k.range());
    const auto l = full_generator(space, k);
    const auto sum = assemble_environment(space, k).combine(1.0, assemble_tagged(space, k), 1.0);
    CHECK(l.max_abs_difference(sum) < 1e-15);
    const auto dense = l.to_dense();
    CHECK(dense.rowwise().sum().cwiseAbs().maxCoeff() < 1e-13);
    CHECK(dense.colwise().sum().cwiseAbs().maxCoeff() < 1e-13);
    CHECK_NOTHROW(check_stationarity(l));
  }

  TEST_CASE("adjoint and symmetric parts") {
    const auto sym = testing::nn();
    const StateSpace s(TorusGeometry(1, 3), 3, 1);
    const auto l = full_generator(s, sym);
    CHECK(adjoint(l).max_abs_difference(l) < 1e-15);
    CHECK(symmetric_part(l).max_abs_difference(l) < 1e-15);

    const auto mz = testing::mean_zero();
    const StateSpace t(TorusGeometry(1, 3), 3, mz.range());
    const auto lm = full_generator(t, mz);
    CHECK(adjoint(adjoint(lm)).max_abs_difference(lm) == 0.0);
    CHECK((adjoint(lm).to_dense() - lm.to_dense().transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(symmetric_part(lm).max_abs_difference(full_generator(t, symmetrize(mz))) < 1e-14);

    const auto a = antisymmetric_part(lm);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      const auto f = random_observable(t.size(), rng);
      CHECK(std::abs(inner(f, a.apply(f))) < 1e-13);
    }
  }

  TEST_CASE("transpose involution on random sparse operators") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 5 + trial;
      std::vector<std::vector<OffDiagonal>> rows(n);
      std::vector<double> diag(n);
      for (std::size_t i = 0; i < n; ++i) {
        diag[i] = u(rng);
        for (std::size_t j = 0; j < n; ++j)
          if (j != i && u(rng) > 0.3) rows[i].push_back({static_cast<std::uint32_t>(j), u(rng)});
      }
      const auto op = SparseOperator::from_rows(rows, diag);
      CHECK(adjoint(adjoint(op)).max_abs_difference(op) == 0.0);
    }
  }

  TEST_CASE("dirichlet form") {
    const auto k = testing::mean_zero();
    const StateSpace s(TorusGeometry(1, 3), 3, k.range());
    const auto l = full_generator(s, k);
    const Observable ones(s.size(), 2.5);
    CHECK(std::abs(dirichlet_form(l, ones)) < 1e-14);

    // Edge-sum expression (1/2S) sum r(x,y) (f(y) - f(x))^2.
    std::mt19937_64 rng(5);
    const auto f = random_observable(s.size(), rng);
    double edge = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto cols = l.row_cols(i);
      const auto vals = l.row_values(i);
      for (std::size_t q = 0; q < cols.size(); ++q) edge += vals[q] * (f[cols[q]] - f[i]) * (f[cols[q]] - f[i]);
    }
    edge /= 2.0 * static_cast<double>(s.size());
    CHECK(dirichlet_form(l, f) == doctest::Approx(edge).epsilon(1e-12));

    const StateSpace h(TorusGeometry(1, 2), 2, 1);
    const auto lh = full_generator(h, testing::nn());
    const Observable g{0.3, -1.2, 2.0};
    double hand = 0.0;
    const auto m = lh.to_dense();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) hand += m(i, j) * (g[j] - g[i]) * (g[j] - g[i]);
    CHECK(dirichlet_form(lh, g) == doctest::Approx(hand / 6.0).epsilon(1e-13));
  }

  TEST_CASE("zero Dirichlet form only for constants on connected systems") {
    for (const auto& c : oracle_cases()) {
      const StateSpace space(TorusGeometry(c.kernel.dimension(), c.n), c.k, c.kernel.range());
      const auto l = symmetric_part(full_generator(space, c.kernel));
      REQUIRE(connected_components(l) == 1);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-l.to_dense());
      CHECK(std::abs(eig.eigenvalues()(0)) < 1e-12);
      CHECK(eig.eigenvalues()(1) > 1e-8);
    }
  }

  TEST_CASE("stationarity check") {
    const StateSpace s(TorusGeometry(1, 3), 3, 1);
    const auto l = full_generator(s, testing::nn());
    std::vector<std::vector<OffDiagonal>> rows(l.size());
    for (std::size_t i = 0; i < l.size(); ++i)
      for (std::size_t q = 0; q < l.row_cols(i).size(); ++q)
        rows[i].push_back({l.row_cols(i)[q], l.row_values(i)[q] + (i == 0 && q == 0 ? 1e-3 : 0.0)});
    const auto bad = SparseOperator::generator_from_rows(rows);
    expect_error(ErrorKind::NotStationary, [&] { check_stationarity(bad); });
    CHECK_NOTHROW(check_stationarity(SparseOperator(4)));
  }

  TEST_CASE("ergodicity check") {
    const StateSpace s(TorusGeometry(1, 3), 3, 1);
    CHECK(connected_components(full_generator(s, testing::nn())) == 1);
    std::vector<std::vector<OffDiagonal>> rows(4);
    rows[0] = {{1, 1.0}};
    rows[1] = {{0, 1.0}};
    rows[2] = {{3, 1.0}};
    rows[3] = {{2, 1.0}};
    const auto split = SparseOperator::generator_from_rows(rows);
    CHECK(connected_components(split) == 2);
    expect_error(ErrorKind::NotConnected, [&] { check_ergodicity(split); });
  }

  TEST_CASE("threaded assembly is identical") {
    const auto k = testing::mean_zero();
    const StateSpace s(TorusGeometry(1, 5), 5, k.range());
    AssemblyOptions one, four;
    four.threads = 4;
    CHECK(full_generator(s, k, one).max_abs_difference(full_generator(s, k, four)) == 0.0);
  }

  TEST_CASE("nonzero cap") {
    const StateSpace s(TorusGeometry(1, 4), 4, 1);
    AssemblyOptions o;
    o.nonzero_cap = 10;
    expect_error(ErrorKind::SizeCapExceeded, [&] { full_generator(s, testing::nn(), o); });
  }

  TEST_CASE("matrix market dump") {
    const StateSpace s(TorusGeometry(1, 2), 2, 1);
    std::ostringstream os;
    write_matrix_market(os, full_generator(s, testing::nn()));
    const std::string text = os.str();
    CHECK(text.rfind("%%MatrixMarket matrix coordinate real general", 0) == 0);
    CHECK(text.find("\n3 3 7\n") != std::string::npos);
  }
}
