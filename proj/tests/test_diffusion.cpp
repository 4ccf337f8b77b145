#include <random>

#include <doctest.h>

#include "helpers.hpp"
#include "oracle.hpp"
#include "sepdiff/diffusion.hpp"

using namespace sepdiff;
using testing::expect_error;

namespace {

const std::vector<double> kE1{1.0};

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("drift functions") {
    for (int k : {1, 6}) {
      const StateSpace s(TorusGeometry(1, 3), k, 2);
      const auto f = local_drift_functions(s, testing::mean_zero(), kE1);
      for (double x : f.v) CHECK(x == 0.0);
      for (double x : f.w) CHECK(x == 0.0);
    }
    const StateSpace s(TorusGeometry(1, 3), 3, 1);
    const auto f = local_drift_functions(s, testing::nn(), kE1);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(f.w[i] == doctest::Approx(-f.v[i]).epsilon(1e-14));
    CHECK(std::abs(mean(f.v)) < 1e-15);
  }

  TEST_CASE("free walk") {
    for (const auto& kernel : {testing::nn(), testing::mean_zero(), testing::totally_asymmetric()})
      for (int n : {3, 4}) {
        const StateSpace s(TorusGeometry(1, n), 1, kernel.range());
        const auto r = compute_D(s, kernel, kE1);
        CHECK(std::abs(r.directions[0].value - kernel.second_moment(kE1)) < 1e-12);
        CHECK(r.directions[0].correction == 0.0);
      }
    const StateSpace s(TorusGeometry(1, 2), 1, 1);
    CHECK(compute_D(s, testing::totally_asymmetric(), kE1).directions[0].value == 1.0);
  }

  TEST_CASE("frozen tagged particle") {
    for (const auto& kernel : {testing::nn(), testing::mean_zero(), testing::totally_asymmetric()}) {
      const StateSpace s(TorusGeometry(1, 3), 6, kernel.range());
      const auto r = compute_D(s, kernel, kE1);
      CHECK(r.directions[0].value == 0.0);
    }
    const StateSpace s2(TorusGeometry(2, 2), 16, 1);
    const auto m = compute_D_matrix(s2, testing::nn(2));
    CHECK(m.matrix.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("agrees with the brute-force oracle") {
    struct Case {
      JumpKernel kernel;
      int n, k;
    };
    const JumpKernel skewed2d(2, {{{1, 0}, 0.4}, {{0, 1}, 0.3}, {{-1, -1}, 0.3}});
    const std::vector<Case> cases = {{testing::nn(), 2, 2},
                                     {testing::nn(), 3, 3},
                                     {testing::nn(), 4, 3},
                                     {testing::mean_zero(), 3, 3},
                                     {testing::mean_zero(), 4, 5},
                                     {testing::totally_asymmetric(), 3, 3},
                                     {testing::totally_asymmetric(), 3, 5},
                                     {testing::nn(2), 2, 5},
                                     {skewed2d, 2, 4}};
    for (const auto& c : cases) {
      CAPTURE(c.n);
      CAPTURE(c.k);
      const int d = c.kernel.dimension();
      const StateSpace s(TorusGeometry(d, c.n), c.k, c.kernel.range());
      const auto sys = oracle::build(c.kernel, c.n, c.k);
      const auto rep = compute_D_matrix(s, c.kernel);
      for (const auto& dir : rep.directions) {
        const auto ref = oracle::diffusion(sys, dir.direction);
        CHECK(dir.free_term == doctest::Approx(ref.free_term).epsilon(1e-12));
        CHECK(std::abs(dir.pairing - ref.pairing) < 1e-10);
        CHECK(std::abs(dir.value - ref.d) < 1e-10);
        CHECK(std::abs(dir.alternate_value - (ref.free_term - 2.0 * ref.pairing)) < 1e-10);
      }
    }
  }

  TEST_CASE("nearest-neighbour ring closed form") {
    // On a ring of L sites with K particles the tagged particle inherits the
    // centre-of-mass diffusivity: D = (L - K) / (K (L - 1)).
    for (int n : {2, 3, 4, 5})
      for (int k = 1; k <= 2 * n; ++k) {
        const StateSpace s(TorusGeometry(1, n), k, 1);
        const double l = 2.0 * n;
        const double expected = (l - k) / (k * (l - 1.0));
        CHECK(std::abs(compute_D(s, testing::nn(), kE1).directions[0].value - expected) < 1e-12);
      }
  }

  TEST_CASE("sign toggle") {
    const StateSpace s(TorusGeometry(1, 3), 3, 2);
    DiffusionOptions plus;
    plus.correction_sign = 1;
    const auto a = compute_D(s, testing::mean_zero(), kE1);
    const auto b = compute_D(s, testing::mean_zero(), kE1, plus);
    CHECK(a.directions[0].value == doctest::Approx(b.directions[0].alternate_value));
    CHECK(b.directions[0].value == doctest::Approx(a.directions[0].alternate_value));
    CHECK(a.sign == kDefaultCorrectionSign);
    DiffusionOptions bad;
    bad.correction_sign = 0;
    expect_error(ErrorKind::InvalidArgument, [&] { compute_D(s, testing::mean_zero(), kE1, bad); });
  }

  TEST_CASE("symmetric bound") {
    for (int n : {2, 3, 4})
      for (int k = 1; k <= 2 * n; ++k) {
        const StateSpace s(TorusGeometry(1, n), k, 1);
        const auto r = compute_D(s, testing::nn(), kE1);
        CHECK(r.directions[0].value <= (1.0 - s.density()) * 1.0 + 1e-9);
        CHECK(r.directions[0].value >= -1e-12);
      }
  }

  TEST_CASE("matrix") {
    const StateSpace s(TorusGeometry(1, 3), 3, 2);
    const auto m = compute_D_matrix(s, testing::mean_zero());
    const auto q = compute_D(s, testing::mean_zero(), kE1);
    CHECK(m.matrix(0, 0) == doctest::Approx(q.directions[0].value).epsilon(1e-14));

    const StateSpace s2(TorusGeometry(2, 2), 5, 1);
    const auto iso = compute_D_matrix(s2, testing::nn(2));
    CHECK(std::abs(iso.matrix(0, 1)) < 1e-9);
    CHECK(iso.matrix(0, 0) == doctest::Approx(iso.matrix(1, 1)).epsilon(1e-9));

    const JumpKernel skewed2d(2, {{{1, 0}, 0.4}, {{0, 1}, 0.3}, {{-1, -1}, 0.3}});
    const StateSpace s3(TorusGeometry(2, 2), 4, 1);
    const auto sk = compute_D_matrix(s3, skewed2d);
    for (const auto& a : std::vector<std::vector<double>>{{1.0, 1.0}, {1.0, -2.0}, {0.3, 0.7}}) {
      const double direct = compute_D(s3, skewed2d, a).directions[0].value;
      const Eigen::Vector2d av(a[0], a[1]);
      CHECK(std::abs(direct - av.dot(sk.matrix * av)) < 1e-9);
    }
    CHECK(sk.min_eigenvalue > 0.0);
  }

  TEST_CASE("density rounding") {
    CHECK(particles_for_density(0.01, TorusGeometry(1, 2)) == 1);
    CHECK(particles_for_density(0.5, TorusGeometry(1, 3)) == 3);
    CHECK(particles_for_density(1.0, TorusGeometry(2, 2)) == 16);
    expect_error(ErrorKind::InvalidArgument, [] { particles_for_density(1.5, TorusGeometry(1, 2)); });
  }

  TEST_CASE("sweep") {
    const std::vector<int> ns{2, 3, 4, 5};
    const auto rep = sweep(testing::nn(), 0.5, ns);
    REQUIRE(rep.entries.size() == 4);
    CHECK(!rep.entries[0].difference.has_value());
    for (std::size_t i = 1; i < rep.entries.size(); ++i) {
      CHECK(rep.entries[i].matrix(0, 0) < rep.entries[i - 1].matrix(0, 0));
      CHECK(rep.entries[i].matrix(0, 0) > 0.0);
    }
    for (std::size_t i = 2; i < rep.entries.size(); ++i)
      CHECK(*rep.entries[i].difference < *rep.entries[i - 1].difference);

    const std::vector<int> one{3};
    const auto single = sweep(testing::nn(), 0.5, one);
    CHECK(single.entries.size() == 1);
    CHECK(!single.plateau);

    const std::vector<int> twice{3, 3};
    const auto rep2 = sweep(testing::nn(), 0.5, twice);
    CHECK(*rep2.entries[1].difference == 0.0);
    CHECK(rep2.plateau);
  }

  TEST_CASE("block sites") {
    const TorusGeometry g(1, 4);
    CHECK(block_sites(g, 1).size() == 1);
    CHECK(block_sites(g, 2).size() == 3);
    CHECK(block_sites(g, 4).size() == 7);
    expect_error(ErrorKind::BlockTooLarge, [&] { block_sites(g, 5); });
    CHECK(block_sites(TorusGeometry(2, 3), 2).size() == 15);
  }

  TEST_CASE("conditional expectation") {
    const StateSpace s(TorusGeometry(1, 4), 4, 1);
    const double alpha = s.density();
    const auto v = LocalFunction::occupation({1}, alpha).evaluate(s);

    // Already measurable with respect to the block count.
    CHECK(conditional_expectation(s, v, 1) == v);

    const auto block = block_sites(s.geometry(), 2);
    const auto v2 = conditional_expectation(s, v, 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
      int phi = 0;
      for (int e : block) phi += s.unrank(i).test(e) ? 1 : 0;
      CHECK(v2[i] == doctest::Approx(phi / 3.0 - alpha).epsilon(1e-14));
    }

    // Tower property, exhaustively on all pairs l < l'.
    LocalFunction f;
    f.constant = 0.1;
    f.terms = {{1.0, {{1}}}, {-2.0, {{-1}, {2}}}, {0.5, {{1}, {2}}}};
    const auto fv = f.evaluate(s);
    for (int l = 2; l <= 4; ++l)
      for (int lp = l + 1; lp <= 4; ++lp) {
        const auto a = conditional_expectation(s, conditional_expectation(s, fv, l), lp);
        const auto b = conditional_expectation(s, fv, lp);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
        // Conditioning preserves the mean.
        CHECK(mean(b) == doctest::Approx(mean(fv)).epsilon(1e-13));
      }
    expect_error(ErrorKind::SupportTooLarge, [&] { conditional_expectation(s, fv, 1); });

    const StateSpace wide(TorusGeometry(2, 3), 3, 1);
    expect_error(ErrorKind::SupportTooLarge,
                 [&] { conditional_expectation(wide, Observable(wide.size(), 0.0), 3); });
  }

  TEST_CASE("multiscale") {
    const StateSpace s(TorusGeometry(1, 8), 8, 1);
    const auto v = LocalFunction::occupation({1}, s.density()).evaluate(s);
    const auto rep = multiscale_diagnostic(s, v, 1, 2, 3);
    REQUIRE(rep.entries.size() == 3);
    for (std::size_t i = 1; i < rep.entries.size(); ++i)
      CHECK(rep.entries[i].increment_variance < rep.entries[i - 1].increment_variance);
    REQUIRE(rep.second_moments.size() == 4);
    for (std::size_t i = 1; i < rep.second_moments.size(); ++i)
      CHECK(rep.second_moments[i].second < rep.second_moments[i - 1].second);
    CHECK(rep.decay_exponent.has_value());

    const auto one = multiscale_diagnostic(s, v, 4, 2, 1);
    CHECK(one.entries.size() == 1);
    CHECK(!one.decay_exponent.has_value());

    const auto flat = multiscale_diagnostic(s, Observable(s.size(), 0.7), 1, 2, 3);
    for (const auto& e : flat.entries) CHECK(e.increment_variance < 1e-24);
    expect_error(ErrorKind::BlockTooLarge, [&] { multiscale_diagnostic(s, v, 1, 2, 4); });
  }

  TEST_CASE("H-1 convergence diagnostic") {
    const auto k = testing::mean_zero();
    const std::vector<int> ns{3, 4, 5, 6};
    const auto seq = hminus1_convergence_diagnostic(k, 0.5, LocalFunction::occupation({1}, 0.5), ns);
    REQUIRE(seq.size() == 4);
    for (std::size_t i = 2; i < seq.size(); ++i) CHECK(*seq[i].difference < *seq[i - 1].difference);
    for (const auto& e : seq) CHECK(e.norm > 0.0);

    LocalFunction zero;
    for (const auto& e : hminus1_convergence_diagnostic(k, 0.5, zero, ns)) CHECK(e.norm == 0.0);

    LocalFunction diff;
    diff.terms = {{1.0, {{1}}}, {-1.0, {{-1}}}};
    const auto dseq = hminus1_convergence_diagnostic(k, 0.5, diff, ns);
    for (std::size_t i = 2; i < dseq.size(); ++i) CHECK(*dseq[i].difference < *dseq[i - 1].difference);
  }
}
