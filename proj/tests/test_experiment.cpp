#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "kvp/experiment.hpp"
#include "kvp/io.hpp"

using namespace kvp;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.alphas = {0.0, 4.0};
  c.betas = {0.0, 0.3};
  c.lambdas = {1e-7, 1e-5, 1e-3};
  c.n_train = 200;
  c.n_val = 100;
  c.n_test = 40;
  c.n_repeats = 2;
  c.nested_outer = 20;
  c.nested_inner = 5;
  c.nested_repeats = 3;
  c.seed = 11;
  return c;
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("study config file matches the defaults") {
  const auto src = std::filesystem::path(KVP_TEST_SOURCE_DIR) / "configs" / "bs2.cfg";
  const auto c = load_config(src);
  const ExperimentConfig d;
  CHECK(c.entries() == d.entries());
  CHECK(c.payoff_list().size() == 6);
}

TEST_CASE("config parsing") {
  const auto c = parse_config(
      "[market]\nsigma = 0.25\nT = 3\n[kernel]\nfamily = gauss_poly\ndegree = 1, 2\nalpha = 1\n"
      "[run]\npayoff = asian_call\nseed = 42\n[ground_truth]\nmethod = monte_carlo\nn_inner = 77\n");
  CHECK(c.market.sigma == 0.25);
  CHECK(c.market.T == 3);
  CHECK(c.family == KernelFamily::gauss_poly);
  CHECK(c.degrees == std::vector<int>{1, 2});
  CHECK(c.second_axis_size() == 2);
  CHECK(c.second_axis_value(1) == 2.0);
  CHECK(c.payoff_list() == std::vector<PayoffId>{PayoffId::asian_call});
  CHECK(c.seed == 42);
  CHECK(c.ground_truth.method == GroundTruthSource::Method::monte_carlo);
  CHECK(c.ground_truth.n_inner == 77);
  CHECK(c.kernel(1.0, 0).gauss_poly_params()->degree == 1);
  CHECK(c.kernel(1.0, 0).gamma() == 0.45);

  CHECK_THROWS_AS(parse_config("[market]\nsigmaa = 0.2\n"), InputError);
  CHECK_THROWS_AS(parse_config("[extra]\nx = 1\n"), InputError);
  CHECK_THROWS_AS(parse_config("[market]\nsigma = abc\n"), InputError);
  CHECK_THROWS_AS(parse_config("[kernel]\nbeta = 0.5\n"), InputError);
  CHECK_THROWS_AS(parse_config("[sample]\nn_repeats = 0\n"), InputError);
  CHECK(parse_config("[run]\npayoff = asian_put, lookback_float\n").payoff_list() ==
        std::vector<PayoffId>{PayoffId::asian_put, PayoffId::lookback_float});
  CHECK_THROWS_AS(parse_config("[run]\npayoff = digital\n"), InputError);
  CHECK_THROWS_AS(load_config("/nonexistent/kvp.cfg"), InputError);
}

TEST_CASE("grid search against independent refits") {
  const auto cfg = small_config();
  const auto id = PayoffId::european_put;
  const auto ts = training_set(cfg, id, 0);
  const auto val = validation_set(cfg, id, 0);
  const auto g = grid_search(cfg, ts, val);
  // (alpha, beta) = (0, 0) is omitted.
  REQUIRE(g.surface.size() == 3 * 3);
  CHECK(g.surface[0].alpha == 0.0);
  CHECK(g.surface[0].second == 0.3);
  CHECK(g.surface[3].alpha == 4.0);
  CHECK(g.surface[3].second == 0.0);
  CHECK(g.surface[1].lambda == 1e-5);

  std::size_t best = 0;
  for (std::size_t i = 0; i < g.surface.size(); ++i) {
    const auto& p = g.surface[i];
    const auto est = fit_dual_unsorted(ts, cfg.kernel(p.alpha, p.second_index), p.lambda);
    const double e = payoff_l2_error(est, val.paths, val.values);
    CHECK(p.ok);
    CHECK(p.error == doctest::Approx(e).epsilon(1e-9));
    CHECK(p.residual < 1e-8);
    if (e < g.surface[best].error) best = i;
  }
  CHECK(g.best == best);
  REQUIRE(g.best_fit.has_value());
  CHECK(g.best_fit->lambda() == g.best_point().lambda);
  CHECK(g.ranking().front() == g.best);
  CHECK(g.rank_of(g.best_point().alpha, g.best_point().second, g.best_point().lambda) == 0);
  CHECK_FALSE(g.rank_of(0.0, 0.0, 1e-5).has_value());
  CHECK(g.max_residual() < 1e-8);

  const auto same = grid_search(cfg, id);
  CHECK(grid_csv(same) == grid_csv(g));

  const auto gc = grid_csv(g);
  CHECK(gc.rfind("alpha,beta,lambda,rel_l2_error,residual\n", 0) == 0);
  CHECK(line_count(gc) == 10);
  CHECK(line_count(fig1_csv(g)) == 1 + 3);
  CHECK(line_count(fig2_csv(g)) == 1 + 3);
}

TEST_CASE("ranking, ties and failed points") {
  GridResult g;
  g.surface = {{1, 0, 0, 1e-3, 0.2, 0, true},
               {1, 0, 0, 1e-5, std::nan(""), 0, false},
               {1, 0, 0, 1e-7, 0.1, 0, true},
               {2, 0, 0, 1e-3, 0.1, 0, true}};
  g.best = 2;
  CHECK(g.ranking() == std::vector<std::size_t>{2, 3, 0, 1});
  CHECK(g.rank_of(2, 0, 1e-3) == 1);
  CHECK_FALSE(g.lambda_interior());
  g.best = 0;
  CHECK_FALSE(g.lambda_interior());
  g.surface[1] = {1, 0, 0, 1e-5, 0.05, 0, true};
  g.best = 1;
  CHECK(g.lambda_interior());
}

TEST_CASE("Gaussian-polynomial grid") {
  auto cfg = small_config();
  cfg.family = KernelFamily::gauss_poly;
  cfg.degrees = {1, 2};
  const auto g = grid_search(cfg, PayoffId::asian_call);
  CHECK(g.second_name == "degree");
  CHECK(g.surface.size() == 2 * 2 * 3);
  CHECK(grid_csv(g).rfind("alpha,degree,lambda", 0) == 0);
}

TEST_CASE("payoff run") {
  const auto cfg = small_config();
  const auto r = run_payoff(cfg, PayoffId::european_call, RunOptions{true, true, std::nullopt});
  CHECK(r.budget_per_repeat == 300);
  REQUIRE(r.kernel.per_repeat.size() == 2);
  CHECK(r.kernel.mean_pct.size() == 3);
  CHECK(r.kernel.payoff_l2.size() == 2);
  CHECK(r.nested.per_repeat.size() == 3);
  CHECK(r.nested.mean_pct.size() == 2);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].trajectories.size() == 40 * 3);
  CHECK(r.errors[1].trajectories.empty());
  for (std::size_t rep = 0; rep < 2; ++rep) {
    for (int t = 0; t <= 2; ++t) {
      CHECK(r.kernel.per_repeat[rep][static_cast<std::size_t>(t)] ==
            doctest::Approx(100.0 * r.errors[rep].rel_l1[static_cast<std::size_t>(t)]).epsilon(1e-12));
    }
  }
  // The refit of repeat 0 at the optimum is the grid's best fit.
  const auto test = test_paths(cfg);
  const auto e0 = value_process_error(*r.grid.best_fit, test, r.truth);
  CHECK(e0.rel_l1 == r.errors[0].rel_l1);

  const auto t2 = table2_csv({r});
  CHECK(t2.rfind(kErrorReportHeader, 0) == 0);
  CHECK(line_count(t2) == 1 + 3 + 2);
  CHECK(t2.find("european_call,kernel,2,") != std::string::npos);
  CHECK(t2.find("european_call,nested_mc,1,") != std::string::npos);
  const auto f3 = fig3_csv(r.errors[0], 2);
  CHECK(line_count(f3) == 1 + 120);
  CHECK_THROWS_AS(fig3_csv(r.errors[1], 2), DataError);

  set_num_threads(3);
  const auto r3 = run_payoff(cfg, PayoffId::european_call, RunOptions{true, true, std::nullopt});
  set_num_threads(1);
  CHECK(table2_csv({r3}) == t2);
  CHECK(grid_csv(r3.grid) == grid_csv(r.grid));
}

TEST_CASE("nested Monte Carlo report") {
  const auto cfg = small_config();
  const auto n = nested_mc_report(cfg, PayoffId::european_put);
  CHECK(n.estimator == "nested_mc");
  CHECK(n.per_repeat.size() == 3);
  for (const auto& row : n.per_repeat) {
    CHECK(row.size() == 2);
    CHECK(row[0] >= 0.0);
  }
  CHECK(n.payoff_calls == 3 * 20 * 5);
}

TEST_CASE("ground truth cache files") {
  auto cfg = small_config();
  cfg.ground_truth_cache = std::filesystem::temp_directory_path() / "kvp_test_gt";
  std::filesystem::remove_all(cfg.ground_truth_cache);
  GroundTruthCache c;
  c.insert({1, 0.25, 0.5, 0, 0});
  save_cache(cfg, PayoffId::asian_put, c);
  const auto back = load_cache(cfg, PayoffId::asian_put);
  CHECK(back.find(1, 0.25) == 0.5);
  CHECK(load_cache(cfg, PayoffId::asian_call).size() == 0);

  // A different ground-truth source uses a different file.
  auto mc = cfg;
  mc.ground_truth.method = GroundTruthSource::Method::monte_carlo;
  CHECK(load_cache(mc, PayoffId::asian_put).size() == 0);

  const auto r = run_payoff(cfg, PayoffId::asian_put, RunOptions{false, false, 1});
  CHECK(load_cache(cfg, PayoffId::asian_put).size() == 1 + 1 + 40);
  const auto again = run_payoff(cfg, PayoffId::asian_put, RunOptions{false, false, 1});
  CHECK(again.kernel.per_repeat == r.kernel.per_repeat);
}
