#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "kvp/feature_map.hpp"
#include "kvp/kernel.hpp"
#include "kvp/sampling.hpp"
#include "oracles.hpp"

using namespace kvp;

namespace {

std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

std::vector<KernelSpec> sample_kernels(Shape s) {
  return {KernelSpec::gauss_exp(s, 2.0, 0.3), KernelSpec::gauss_exp(s, 0.0, 0.15),
          KernelSpec::gauss_exp(s, 1.0, 0.0), KernelSpec::gauss_poly(s, 0.5, 2),
          KernelSpec::features(FeatureMap::monomials(s, 2))};
}

}  // namespace

TEST_CASE("Gaussian-exponentiated values") {
  const Shape s{1, 2};
  const std::vector<double> x{0.6, 0.8};
  CHECK(KernelSpec::gauss_exp(s, 3.0, 0.0).eval(x, x) == 1.0);
  CHECK(KernelSpec::gauss_exp(s, 2.0, 0.3).eval(x, x) ==
        doctest::Approx(1.349858807576003).epsilon(1e-14));
  const std::vector<double> y{-0.1, 0.5};
  const double e = -2.0 * (0.49 + 0.09) + 0.3 * (-0.06 + 0.4);
  CHECK(KernelSpec::gauss_exp(s, 2.0, 0.3).eval(x, y) == doctest::Approx(std::exp(e)).epsilon(1e-14));
}

TEST_CASE("Gaussian-polynomial values") {
  const Shape s{1, 1};
  CHECK(KernelSpec::gauss_poly(s, 0.0, 2).eval(std::vector<double>{1.0}, std::vector<double>{2.0}) ==
        doctest::Approx(9.0).epsilon(1e-14));
  CHECK(KernelSpec::gauss_poly(s, 0.5, 3).eval(std::vector<double>{1.0}, std::vector<double>{2.0}) ==
        doctest::Approx(27.0 * std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("parameter validation") {
  const Shape s{1, 2};
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, -1.0, 0.1), InputError);
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, 1.0, 0.5), InputError);
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, 0.0, 0.0), InputError);
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, 1.0, 0.1, 0.5), InputError);
  CHECK_THROWS_AS(KernelSpec::gauss_poly(s, -1.0, 2), InputError);
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, 1.0, 0.1).eval(std::vector<double>{1.0},
                                                          std::vector<double>{1.0, 2.0}),
                  InputError);
}

TEST_CASE("polynomial expansion capability limit") {
  CHECK_THROWS_AS(FeatureMap::polynomial_kernel(Shape{1, 2}, 5), CapabilityError);
  CHECK_THROWS_AS(FeatureMap::polynomial_kernel(Shape{3, 3}, 2), CapabilityError);
  CHECK_NOTHROW(FeatureMap::polynomial_kernel(Shape{2, 4}, 4));
}

TEST_CASE("overflowing exponent raises a range error") {
  const Shape s{1, 2};
  const std::vector<double> x{40.0, 40.0};
  CHECK_THROWS_AS(KernelSpec::gauss_exp(s, 0.0, 0.45).eval(x, x), RangeError);
}

TEST_CASE("symmetry, Cauchy-Schwarz and positive semidefiniteness") {
  const Shape s{1, 2};
  std::mt19937_64 rng(5);
  for (const auto& k : sample_kernels(s)) {
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 50; ++i) pts.push_back(normals(rng, 2, 1.5));
    Eigen::MatrixXd g(50, 50);
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 50; ++j) g(i, j) = k.eval(pts[i], pts[j]);
    }
    for (int i = 0; i < 50; ++i) {
      for (int j = 0; j < 50; ++j) {
        CHECK(g(i, j) == g(j, i));
        CHECK(g(i, j) * g(i, j) <= g(i, i) * g(j, j) * (1.0 + 1e-12) + 1e-12);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
  }
}

TEST_CASE("tilted kernel") {
  const Shape s{1, 2};
  std::mt19937_64 rng(6);
  const auto k0 = KernelSpec::gauss_exp(s, 2.0, 0.3);
  const auto x = normals(rng, 2), y = normals(rng, 2);
  CHECK(k0.eval_tilted(x, y) == doctest::Approx(k0.eval(x, y)).epsilon(1e-15));

  const std::vector<double> zero{0.0, 0.0};
  CHECK(KernelSpec::gauss_exp(s, 1.0, 0.0, 0.45).eval_tilted(zero, zero) ==
        doctest::Approx(10.0).epsilon(1e-13));

  const MeasureSpec m{0.45, s, 0};
  for (const auto& base : sample_kernels(s)) {
    const auto k = base.with_gamma(0.45);
    for (int i = 0; i < 20; ++i) {
      const auto a = normals(rng, 2, 2.0), b = normals(rng, 2, 2.0);
      const double lhs = k.eval_tilted(a, b) * std::sqrt(rn_weight(m, a) * rn_weight(m, b));
      CHECK(lhs == doctest::Approx(k.eval(a, b)).epsilon(1e-10));
    }
  }
}

TEST_CASE("one-step factor U") {
  const Shape s{1, 1};
  CHECK(KernelSpec::gauss_exp(s, 2.0, 0.3).u_factor(0, 1, std::vector<double>{0.0}) ==
        doctest::Approx(0.4472135954999579).epsilon(1e-14));
  CHECK(KernelSpec::gauss_exp(s, 0.0, 0.3).u_factor(0, 1, std::vector<double>{1.0}) ==
        doctest::Approx(1.046027859908717).epsilon(1e-14));
  const double gh =
      oracle::gh_expect([](double z) { return std::exp(-(z - 0.5) * (z - 0.5)); });
  CHECK(KernelSpec::gauss_exp(s, 1.0, 0.0).u_factor(0, 1, std::vector<double>{0.5}) ==
        doctest::Approx(gh).epsilon(1e-10));
}

TEST_CASE("U factors of the polynomial families match quadrature") {
  const Shape s{1, 1};
  const auto gp = KernelSpec::gauss_poly(s, 0.7, 3);
  const auto fm = KernelSpec::features(FeatureMap::monomials(s, 3));
  for (double y : {-1.3, 0.0, 0.4, 2.0}) {
    const std::vector<double> yv{y};
    double u_gp = 0.0, u_fm = 0.0;
    for (std::size_t i = 0; i < gp.num_terms(); ++i) u_gp += gp.u_factor(i, 1, yv);
    for (std::size_t i = 0; i < fm.num_terms(); ++i) u_fm += fm.u_factor(i, 1, yv);
    const double q_gp = oracle::gh_expect([&](double z) {
      return std::exp(-0.7 * (z - y) * (z - y)) * std::pow(1.0 + z * y, 3);
    });
    const double q_fm = oracle::gh_expect([&](double z) {
      return 1.0 + z * y + z * z * y * y + z * z * z * y * y * y;
    });
    CHECK(u_gp == doctest::Approx(q_gp).epsilon(1e-10));
    CHECK(u_fm == doctest::Approx(q_fm).epsilon(1e-10));
  }
}

TEST_CASE("conditional expectation: boundary cases") {
  const Shape s{1, 3};
  std::mt19937_64 rng(7);
  for (const auto& k : sample_kernels(s)) {
    const auto x = normals(rng, 3), y = normals(rng, 3);
    CHECK(k.cond_expect(x, y, 3) == k.eval(x, y));
    CHECK_THROWS_AS(k.cond_expect(x, y, 4), InputError);
    CHECK_THROWS_AS(k.cond_expect(std::span<const double>(x).first(1), y, 2), InputError);
  }
  const auto ge = KernelSpec::gauss_exp(s, 2.0, 0.3);
  const auto y = normals(rng, 3);
  double prod = 1.0;
  for (int t = 1; t <= 3; ++t) prod *= ge.u_factor(0, t, std::span<const double>(y).subspan(t - 1, 1));
  CHECK(ge.cond_expect({}, y, 0) == doctest::Approx(prod).epsilon(1e-14));
}

TEST_CASE("conditional expectation: tower property by quadrature") {
  const Shape s{1, 3};
  std::mt19937_64 rng(8);
  const auto [nodes, weights] = oracle::gauss_hermite(120);
  for (const auto& k : sample_kernels(s)) {
    const auto x = normals(rng, 3), y = normals(rng, 3, 0.8);
    for (int t = 0; t < 3; ++t) {
      double q = 0.0;
      std::vector<double> pre(x.begin(), x.begin() + t + 1);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        pre[static_cast<std::size_t>(t)] = nodes[j];
        q += weights[j] * k.cond_expect(pre, y, t + 1);
      }
      const double ce = k.cond_expect(std::span<const double>(x).first(static_cast<std::size_t>(t)), y, t);
      CHECK(ce == doctest::Approx(q).epsilon(1e-9));
    }
  }
}

TEST_CASE("conditional expectation: Monte Carlo tower oracle") {
  const Shape s{1, 2};
  std::mt19937_64 rng(9);
  for (const auto& k : {KernelSpec::gauss_exp(s, 2.0, 0.3), KernelSpec::gauss_poly(s, 0.5, 2)}) {
    for (int t = 0; t <= 1; ++t) {
      const auto x = normals(rng, 2), y = normals(rng, 2);
      const auto prefix = std::span<const double>(x).first(static_cast<std::size_t>(t));
      const auto r = oracle::mc(200000, 2 - t, 100 + static_cast<std::uint64_t>(t),
                                [&](const std::vector<double>& z) {
                                  std::vector<double> p(prefix.begin(), prefix.end());
                                  p.insert(p.end(), z.begin(), z.end());
                                  return k.eval(p, y);
                                });
      CHECK(std::abs(k.cond_expect(prefix, y, t) - r.mean) <= 3.0 * r.se);
    }
  }
}

TEST_CASE("batched rows match scalar evaluation") {
  const Shape s{1, 2};
  std::mt19937_64 rng(10);
  PathSet centers(s, 0);
  std::vector<double> shift;
  for (int j = 0; j < 23; ++j) {
    centers.push_back(normals(rng, 2, 1.5));
    shift.push_back(0.1 * j - 1.0);
  }
  const KernelCenters kc(centers);
  for (const auto& base : sample_kernels(s)) {
    const auto k = base.with_gamma(0.2);
    const auto x = normals(rng, 2);
    std::vector<double> row(23), ce(23);
    k.row(x, 0.3, kc, 0, 23, shift.data(), row.data());
    for (std::size_t j = 0; j < 23; ++j) {
      CHECK(row[j] == doctest::Approx(k.eval(x, centers.row(j)) * std::exp(0.3 + shift[j])).epsilon(1e-12));
    }
    for (int t = 0; t <= 2; ++t) {
      const auto prefix = std::span<const double>(x).first(static_cast<std::size_t>(t));
      k.cond_expect_row(prefix, t, kc, shift.data(), ce.data());
      for (std::size_t j = 0; j < 23; ++j) {
        CHECK(ce[j] == doctest::Approx(k.cond_expect(prefix, centers.row(j), t) * std::exp(shift[j]))
                           .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("feature maps") {
  const auto fm = FeatureMap::monomials(Shape{1, 1}, 2);
  const auto v = fm(std::vector<double>{2.0});
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 2.0);
  CHECK(v[2] == 4.0);

  const Shape s{1, 2};
  const auto m2 = FeatureMap::monomials(s, 3);
  const auto k = KernelSpec::features(m2);
  std::mt19937_64 rng(12);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(normals(rng, 2));
  for (const auto& a : pts) {
    for (const auto& b : pts) {
      const auto pa = m2(a), pb = m2(b);
      double ip = 0.0;
      for (std::size_t i = 0; i < pa.size(); ++i) ip += pa[i] * pb[i];
      CHECK(k.eval(a, b) == doctest::Approx(ip).epsilon(1e-12));
    }
  }

  // Constant feature and odd monomials in unobserved steps.
  const auto x = normals(rng, 2);
  for (int t = 0; t <= 2; ++t) {
    const auto ce = m2.cond_expect(std::span<const double>(x).first(static_cast<std::size_t>(t)), t);
    for (std::size_t i = 0; i < m2.size(); ++i) {
      const auto& f = m2.feature(i);
      if (f.steps[0].degree() == 0 && f.steps[1].degree() == 0) CHECK(ce[i] == 1.0);
      if (t == 1 && f.steps[1].degree() % 2 == 1) CHECK(ce[i] == 0.0);
    }
  }
}

TEST_CASE("polynomial kernel expansion reproduces (1 + x'y)^p") {
  const Shape s{2, 2};
  std::mt19937_64 rng(13);
  for (int p = 1; p <= 4; ++p) {
    const auto fm = FeatureMap::polynomial_kernel(s, p);
    for (int i = 0; i < 5; ++i) {
      const auto a = normals(rng, 4), b = normals(rng, 4);
      const auto pa = fm(a), pb = fm(b);
      double ip = 0.0, xy = 0.0;
      for (std::size_t j = 0; j < pa.size(); ++j) ip += pa[j] * pb[j];
      for (int j = 0; j < 4; ++j) xy += a[j] * b[j];
      CHECK(ip == doctest::Approx(std::pow(1.0 + xy, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("linearly dependent features are rejected") {
  const Shape s{1, 1};
  ProductFeature a{{StepPolynomial::monomial({1})}};
  ProductFeature b{{StepPolynomial::monomial({1}, 2.0)}};
  CHECK_THROWS_AS(FeatureMap(s, {a, b}), InputError);
}

TEST_CASE("tilt conditions") {
  const Shape s{1, 2};
  auto c = KernelSpec::gauss_exp(s, 4.0, 0.3, 0.45).tilt_conditions();
  CHECK(c.fourth_moment);
  CHECK(c.bounded);
  c = KernelSpec::gauss_exp(s, 4.0, 0.45, 0.1).tilt_conditions();
  CHECK_FALSE(c.fourth_moment);
  CHECK_FALSE(c.bounded);
  c = KernelSpec::gauss_exp(s, 4.0, 0.3, 0.1).tilt_conditions();
  CHECK(c.fourth_moment);
  CHECK_FALSE(c.bounded);
}
