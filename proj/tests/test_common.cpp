#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "kvp/common.hpp"
#include "kvp/io.hpp"
#include "kvp/path.hpp"
#include "kvp/stats.hpp"

using namespace kvp;

TEST_CASE("format_double round-trips") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<double>(i % 40 - 20));
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::parse_double(" 2.5 ") == 2.5);
  CHECK_THROWS_AS(io::parse_double("abc"), InputError);
  CHECK_THROWS_AS(io::parse_double("1.0x"), InputError);
}

TEST_CASE("split_csv") {
  const auto f = io::split_csv("a,b,,c");
  REQUIRE(f.size() == 4);
  CHECK(f[2].empty());
  CHECK(f[3] == "c");
}

TEST_CASE("sha256 of a known message") {
  CHECK(io::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("seed derivation separates purposes and indices") {
  std::set<std::uint64_t> seen;
  for (auto p : {SeedPurpose::training, SeedPurpose::validation, SeedPurpose::test,
                 SeedPurpose::nested}) {
    for (std::uint64_t i = 0; i < 100; ++i) seen.insert(derive_seed(7, p, i));
  }
  CHECK(seen.size() == 400);
  CHECK(derive_seed(7, SeedPurpose::test, 3) == derive_seed(7, SeedPurpose::test, 3));
  CHECK(stream_seed(1, 0) != stream_seed(1, 1));
}

TEST_CASE("parallel_for output is independent of the thread count") {
  std::vector<double> a(1001), b(1001);
  set_num_threads(1);
  parallel_for(a.size(), [&](std::size_t i) { a[i] = std::sin(static_cast<double>(i)); });
  set_num_threads(4);
  parallel_for(b.size(), [&](std::size_t i) { b[i] = std::sin(static_cast<double>(i)); });
  set_num_threads(1);
  CHECK(a == b);
}

TEST_CASE("pairwise_sum") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 499500.0);
  CHECK(pairwise_sum(std::span<const double>()) == 0.0);
}

TEST_CASE("check_exponent") {
  CHECK_NOTHROW(check_exponent(699.0, "t"));
  CHECK_THROWS_AS(check_exponent(701.0, "t"), RangeError);
  CHECK_THROWS_AS(check_exponent(std::nan(""), "t"), RangeError);
}

TEST_CASE("path layout is step-major") {
  Path p(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(p(0, 2) == 3);
  CHECK(p(1, 3) == 6);
  CHECK(p.prefix(2).size() == 4);
  CHECK(p.squared_norm() == 91.0);
  CHECK_THROWS_AS(Path(Shape{2, 3}, {1, 2}), InputError);
  CHECK_THROWS_AS(Shape({0, 1}).validate(), InputError);

  PathSet ps(Shape{1, 2}, 0);
  ps.push_back(std::vector<double>{1, 2});
  ps.push_back(std::vector<double>{3, 4});
  CHECK(ps.transposed() == std::vector<double>{1, 3, 2, 4});
  CHECK_THROWS_AS(ps.push_back(std::vector<double>{1}), InputError);
}

TEST_CASE("summary statistics") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(stats::mean(v) == 2.5);
  CHECK(stats::stddev(v) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-14));
  CHECK(stats::stddev(std::vector<double>{3}) == 0.0);
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(stats::normal_cdf(0.0) == 0.5);
}

TEST_CASE("Anderson-Darling accepts normal and rejects exponential samples") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::exponential_distribution<double> ed;
  std::vector<double> a(500), b(500);
  for (auto& x : a) x = nd(rng);
  for (auto& x : b) x = ed(rng);
  CHECK_FALSE(stats::anderson_darling_normal(a).reject_1pct);
  CHECK(stats::anderson_darling_normal(b).reject_1pct);
  CHECK_THROWS_AS(stats::anderson_darling_normal(std::vector<double>{1, 2, 3}), InputError);
}
