#include <doctest.h>

#include "helpers.hpp"
#include "sepdiff/kernel.hpp"

using namespace sepdiff;
using testing::expect_error;

TEST_SUITE("kernel") {
  TEST_CASE("validation accepts irreducible kernels") {
    CHECK_NOTHROW(validate(JumpKernel(1, {{{1}, 0.5}, {{-1}, 0.5}})));
    CHECK_NOTHROW(validate(JumpKernel(3, {{{1, 0, 0}, 1.0 / 3}, {{0, 1, 0}, 1.0 / 3}, {{0, 0, 1}, 1.0 / 3}})));
    CHECK_NOTHROW(validate(testing::mean_zero()));
  }

  TEST_CASE("validation rejects bad kernels") {
    expect_error(ErrorKind::Reducible, [] { validate(JumpKernel(1, {{{2}, 1.0}})); });
    expect_error(ErrorKind::Reducible, [] { validate(JumpKernel(2, {{{1, 1}, 0.5}, {{-1, -1}, 0.5}})); });
    expect_error(ErrorKind::NotAProbability, [] { validate(JumpKernel(1, {{{1}, 0.5}, {{-1}, 0.4}})); });
    expect_error(ErrorKind::NotAProbability, [] { validate(JumpKernel(1, {{{1}, 1.5}, {{-1}, -0.5}})); });
    expect_error(ErrorKind::OriginMass, [] { validate(JumpKernel(1, {{{0}, 0.5}, {{1}, 0.5}})); });
    expect_error(ErrorKind::DuplicateDisplacement, [] { validate(JumpKernel(1, {{{1}, 0.5}, {{1}, 0.5}})); });
  }

  TEST_CASE("lattice index") {
    CHECK(lattice_index({{1}}, 1) == 1);
    CHECK(lattice_index({{2}, {-4}}, 1) == 2);
    CHECK(lattice_index({{2}, {3}}, 1) == 1);
    CHECK(lattice_index({{1, 1}, {1, -1}}, 2) == 2);
    CHECK(lattice_index({{1, 0}, {2, 0}}, 2) == 0);
    CHECK(lattice_index({{1, 0}, {0, 1}, {1, 1}}, 2) == 1);
  }

  TEST_CASE("classification") {
    auto c = classify(testing::nn());
    CHECK(c.kind == KernelClass::Symmetric);
    CHECK(c.mean[0] == doctest::Approx(0.0));
    c = classify(testing::mean_zero());
    CHECK(c.kind == KernelClass::MeanZero);
    CHECK(std::abs(c.mean[0]) < 1e-15);
    c = classify(testing::totally_asymmetric());
    CHECK(c.kind == KernelClass::Asymmetric);
    CHECK(c.mean[0] == doctest::Approx(1.0));
    CHECK(to_string(KernelClass::MeanZero) == "mean-zero");
  }

  TEST_CASE("symmetrize") {
    const auto s = symmetrize(testing::mean_zero());
    REQUIRE(s.support_size() == 4);
    CHECK(s.probability(std::vector<int>{2}) == doctest::Approx(1.0 / 6));
    CHECK(s.probability(std::vector<int>{-2}) == doctest::Approx(1.0 / 6));
    CHECK(s.probability(std::vector<int>{1}) == doctest::Approx(1.0 / 3));
    CHECK(s.probability(std::vector<int>{-1}) == doctest::Approx(1.0 / 3));

    const auto nn = testing::nn(2);
    const auto s2 = symmetrize(nn);
    REQUIRE(s2.support_size() == nn.support_size());
    for (const auto& e : nn.entries()) CHECK(s2.probability(e.z) == e.p);

    const auto t = symmetrize(testing::totally_asymmetric());
    CHECK(t.probability(std::vector<int>{1}) == 0.5);
    CHECK(t.probability(std::vector<int>{-1}) == 0.5);
    CHECK(classify(t).kind == KernelClass::Symmetric);
  }

  TEST_CASE("moments and range") {
    const auto k = testing::mean_zero();
    const double a[] = {1.0};
    CHECK(k.second_moment(a) == doctest::Approx(4.0 / 3 + 2.0 / 3));
    CHECK(k.range() == 2);
    CHECK(testing::nn(3).range() == 1);
    CHECK(testing::nn(2).support_size() == 4);
  }

  TEST_CASE("probability parsing") {
    CHECK(parse_probability("1/3") == doctest::Approx(1.0 / 3));
    CHECK(parse_probability("0.25") == 0.25);
    CHECK(parse_probability(" 2/7 ") == doctest::Approx(2.0 / 7));
    expect_error(ErrorKind::ConfigError, [] { parse_probability("1/0"); });
    expect_error(ErrorKind::ConfigError, [] { parse_probability("abc"); });
    expect_error(ErrorKind::ConfigError, [] { parse_probability(""); });
  }

  TEST_CASE("torus wrap") {
    const TorusGeometry g(1, 2);
    CHECK(g.wrap(std::vector<int>{3}) == Site{-1});
    CHECK(g.wrap(std::vector<int>{-2}) == Site{2});
    for (int x = -1; x <= 2; ++x) CHECK(g.wrap(std::vector<int>{x}) == Site{x});
    CHECK(g.site_count() == 4);
    CHECK(g.env_site_count() == 3);
    CHECK(g.env_index(std::vector<int>{0}) == -1);
    CHECK(g.env_index(std::vector<int>{4}) == -1);

    const TorusGeometry g2(2, 3);
    for (int i = 0; i < g2.site_count(); ++i) CHECK(g2.site_index(g2.site(i)) == i);
    for (int e = 0; e < g2.env_site_count(); ++e) CHECK(g2.env_index(g2.env_site(e)) == e);
    CHECK(g2.add(std::vector<int>{3, -2}, std::vector<int>{1, -1}) == Site{-2, 3});
  }
}
