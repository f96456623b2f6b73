#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "kvp/common.hpp"
#include "kvp/sampling.hpp"
#include "oracles.hpp"

using namespace kvp;

TEST_CASE("Gaussian sampling measure moments") {
  const MeasureSpec m{0.45, Shape{1, 2}, 17};
  const auto ps = draw_paths(m, 100000);
  std::vector<double> sq;
  for (std::size_t i = 0; i < ps.size(); ++i) sq.push_back(ps.row(i)[0] * ps.row(i)[0]);
  const auto r = oracle::mean_se(sq);
  CHECK(m.variance() == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(std::abs(r.mean - 10.0) <= 3.0 * r.se);
}

TEST_CASE("draws are independent of the thread count") {
  const MeasureSpec m{0.2, Shape{2, 3}, 5};
  set_num_threads(1);
  const auto a = draw_paths(m, 333);
  set_num_threads(4);
  const auto b = draw_paths(m, 333);
  set_num_threads(1);
  CHECK(std::vector<double>(a.data().begin(), a.data().end()) ==
        std::vector<double>(b.data().begin(), b.data().end()));
  CHECK_THROWS_AS(draw_paths(m, 0), InputError);
  CHECK_THROWS_AS(draw_paths(MeasureSpec{0.5, Shape{1, 2}, 0}, 10), InputError);
}

TEST_CASE("Radon-Nikodym weight") {
  const MeasureSpec m{0.45, Shape{1, 2}, 0};
  const std::vector<double> x{1.0, -2.0};
  CHECK(log_rn_weight(m, x) == doctest::Approx(std::log(0.1) + 0.45 * 5.0).epsilon(1e-14));
  CHECK(rn_weight(m, std::vector<double>{0.0, 0.0}) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK_THROWS_AS(rn_weight(m, std::vector<double>{40.0, 40.0}), RangeError);

  // E_tilde[1 / w] = 1 and E_tilde[g / w] = E[g].
  const auto ps = draw_paths(MeasureSpec{0.3, Shape{1, 2}, 9}, 200000);
  const MeasureSpec m3{0.3, Shape{1, 2}, 0};
  std::vector<double> inv, g;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double w = rn_weight(m3, ps.row(i));
    inv.push_back(1.0 / w);
    g.push_back(ps.row(i)[0] * ps.row(i)[0] * ps.row(i)[1] * ps.row(i)[1] / w);
  }
  const auto a = oracle::mean_se(inv), b = oracle::mean_se(g);
  CHECK(std::abs(a.mean - 1.0) <= 3.0 * a.se);
  CHECK(std::abs(b.mean - 1.0) <= 3.0 * b.se);
}

TEST_CASE("optimal gamma") {
  const Shape s{1, 2};
  CHECK(*optimal_gamma(KernelSpec::gauss_exp(s, 4.0, 0.3)) == 0.3);
  CHECK_FALSE(optimal_gamma(KernelSpec::gauss_poly(s, 1.0, 2)).has_value());
}

TEST_CASE("mixture sampler reweights to the nominal measure") {
  const auto fm = FeatureMap::monomials(Shape{1, 2}, 2);
  const auto ms = mixture_sampler(fm);
  double csum = 0.0;
  for (double c : ms.component_weights()) csum += c;
  CHECK(csum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fm.kappa_squared_norm() == doctest::Approx(1.0 + 1 + 1 + 3 + 3 + 1).epsilon(1e-12));

  const auto ps = ms.draw(200000, 21);
  std::vector<double> inv, g;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto x = ps.row(i);
    const double w = ms.weight(x);
    inv.push_back(1.0 / w);
    g.push_back((x[0] * x[0] + std::abs(x[1])) / w);
  }
  const auto a = oracle::mean_se(inv), b = oracle::mean_se(g);
  CHECK(std::abs(a.mean - 1.0) <= 3.0 * a.se);
  CHECK(std::abs(b.mean - (1.0 + std::sqrt(2.0 / M_PI))) <= 3.0 * b.se);

  // sum_i phi_i^2 / w is the constant ||kappa||^2.
  const auto phi = fm(ps.row(0));
  double s2 = 0.0;
  for (double v : phi) s2 += v * v;
  CHECK(s2 / ms.weight(ps.row(0)) == doctest::Approx(fm.kappa_squared_norm()).epsilon(1e-12));
  CHECK_THROWS_AS(ms.draw(0, 1), InputError);
}

TEST_CASE("training set construction and CSV round trip") {
  const MeasureSpec m{0.25, Shape{1, 2}, 3};
  const PayoffFn f = [](std::span<const double> x) { return x[0] + 2.0 * x[1]; };
  const auto ts = build_training_set(m, f, 40, "lin");
  CHECK(ts.size() == 40);
  CHECK(ts.payoff_calls == 40);
  const auto tv = ts.tilted_values();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(ts.payoff_values[i] == f(ts.paths.row(i)));
    CHECK(ts.log_weights[i] == log_rn_weight(m, ts.paths.row(i)));
    CHECK(tv[i] == doctest::Approx(ts.payoff_values[i] / std::sqrt(ts.weights()[i])).epsilon(1e-14));
  }

  const auto csv = training_csv(ts);
  CHECK(csv.rfind("path_id,x_1_1,x_1_2,payoff,weight\n", 0) == 0);
  std::istringstream is(csv);
  const auto back = read_training_csv(is, m, "lin");
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back.payoff_values[i] == ts.payoff_values[i]);
    for (int k = 0; k < 2; ++k) CHECK(back.paths.row(i)[k] == ts.paths.row(i)[k]);
    CHECK(back.log_weights[i] == doctest::Approx(ts.log_weights[i]).epsilon(1e-13));
  }

  std::istringstream bad_header("path_id,x_1_1,payoff,weight\n0,1,2,1\n");
  CHECK_THROWS_AS(read_training_csv(bad_header, m), InputError);
  std::istringstream bad_weight("path_id,x_1_1,x_1_2,payoff,weight\n0,1,2,3,0\n");
  CHECK_THROWS_AS(read_training_csv(bad_weight, m), DataError);
}

TEST_CASE("non-finite payoff values are rejected") {
  const MeasureSpec m{0.0, Shape{1, 1}, 3};
  const PayoffFn f = [](std::span<const double> x) {
    return x[0] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 1.0;
  };
  CHECK_THROWS_AS(build_training_set(m, f, 50), DataError);
}
