#include "kvp/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "kvp/io.hpp"

namespace kvp {

namespace {

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : io::split_csv(value)) {
    try {
      out.push_back(io::parse_double(item));
    } catch (const InputError&) {
      throw InputError("config: bad number '" + item + "' in " + key);
    }
  }
  if (out.empty()) throw InputError("config: empty list for " + key);
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const double v = io::parse_double(value);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e12) {
    throw InputError("config: " + key + " must be a nonnegative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += io::format_double(v[i]);
  }
  return s;
}

std::string family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::gauss_exp: return "gauss_exp";
    case KernelFamily::gauss_poly: return "gauss_poly";
    case KernelFamily::feature_map: return "feature_map";
  }
  return "?";
}

GroundTruthSource truth_source(const ExperimentConfig& cfg) {
  auto s = cfg.ground_truth;
  if (s.method == GroundTruthSource::Method::monte_carlo) {
    s.seed = derive_seed(cfg.seed, SeedPurpose::ground_truth, 0);
  }
  return s;
}

std::uint64_t market_key(const ExperimentConfig& cfg) {
  std::uint64_t h = 0x6b7670ULL;
  for (double v : {cfg.market.S0, cfg.market.sigma, cfg.market.r, static_cast<double>(cfg.market.T),
                   cfg.market.A, cfg.market.B}) {
    h = mix64(h ^ std::bit_cast<std::uint64_t>(v));
  }
  const auto s = truth_source(cfg);
  h = mix64(h ^ static_cast<std::uint64_t>(s.method));
  h = mix64(h ^ s.n_inner);
  return mix64(h ^ s.seed);
}

}  // namespace

void ExperimentConfig::validate() const {
  market.validate();
  if (alphas.empty() || lambdas.empty() || second_axis_size() == 0) {
    throw InputError("config: hyperparameter grid is empty");
  }
  for (double a : alphas) {
    if (!(a >= 0.0)) throw InputError("config: alpha must be >= 0");
  }
  for (double b : betas) {
    if (!(b >= 0.0 && b < 0.5)) throw InputError("config: beta must lie in [0, 1/2)");
  }
  for (int d : degrees) {
    if (d < 1) throw InputError("config: degree must be >= 1");
  }
  for (double l : lambdas) {
    if (!(l > 0.0)) throw InputError("config: lambda must be > 0");
  }
  if (family == KernelFamily::feature_map) {
    throw InputError("config: kernel family must be gauss_exp or gauss_poly");
  }
  if (!(gamma < 0.5) || !std::isfinite(gamma)) throw InputError("config: gamma must be < 1/2");
  if (n_train < 1 || n_val < 1 || n_test < 1 || n_repeats < 1) {
    throw InputError("config: sample counts must be >= 1");
  }
  if (n_train > kMaxDualSize) throw CapabilityError("config: n_train exceeds the dense solver limit");
  if (nested_outer < 1 || nested_inner < 1 || nested_repeats < 1) {
    throw InputError("config: nested counts must be >= 1");
  }
  if (ground_truth.method == GroundTruthSource::Method::monte_carlo && ground_truth.n_inner < 1) {
    throw InputError("config: ground-truth n_inner must be >= 1");
  }
  if (threads < 1) throw InputError("config: threads must be >= 1");
}

std::vector<PayoffId> ExperimentConfig::payoff_list() const {
  if (payoffs.empty()) return {all_payoffs().begin(), all_payoffs().end()};
  return payoffs;
}

std::size_t ExperimentConfig::second_axis_size() const {
  return family == KernelFamily::gauss_poly ? degrees.size() : betas.size();
}

double ExperimentConfig::second_axis_value(std::size_t j) const {
  return family == KernelFamily::gauss_poly ? static_cast<double>(degrees.at(j)) : betas.at(j);
}

KernelSpec ExperimentConfig::kernel(double alpha, std::size_t j) const {
  if (family == KernelFamily::gauss_poly) {
    return KernelSpec::gauss_poly(market.shape(), alpha, degrees.at(j), gamma);
  }
  return KernelSpec::gauss_exp(market.shape(), alpha, betas.at(j), gamma);
}

MeasureSpec ExperimentConfig::training_measure(std::size_t repeat) const {
  return MeasureSpec{gamma, market.shape(), derive_seed(seed, SeedPurpose::training, repeat)};
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> e;
  auto f = [](double v) { return io::format_double(v); };
  e.emplace_back("market.S0", f(market.S0));
  e.emplace_back("market.sigma", f(market.sigma));
  e.emplace_back("market.r", f(market.r));
  e.emplace_back("market.T", std::to_string(market.T));
  e.emplace_back("market.A", f(market.A));
  e.emplace_back("market.B", f(market.B));
  std::string p;
  for (auto id : payoff_list()) p += (p.empty() ? "" : ",") + std::string(payoff_name(id));
  e.emplace_back("run.payoff", p);
  e.emplace_back("kernel.family", family_name(family));
  e.emplace_back("kernel.alpha", join(alphas));
  if (family == KernelFamily::gauss_poly) {
    e.emplace_back("kernel.degree", join(std::vector<double>(degrees.begin(), degrees.end())));
  } else {
    e.emplace_back("kernel.beta", join(betas));
  }
  e.emplace_back("kernel.lambda", join(lambdas));
  e.emplace_back("kernel.gamma", f(gamma));
  e.emplace_back("sample.n_train", std::to_string(n_train));
  e.emplace_back("sample.n_val", std::to_string(n_val));
  e.emplace_back("sample.n_test", std::to_string(n_test));
  e.emplace_back("sample.n_repeats", std::to_string(n_repeats));
  e.emplace_back("ground_truth.method", std::string(method_name(ground_truth.method)));
  e.emplace_back("ground_truth.n_inner", std::to_string(ground_truth.n_inner));
  e.emplace_back("ground_truth.cache_dir", ground_truth_cache.string());
  e.emplace_back("nested.n_outer", std::to_string(nested_outer));
  e.emplace_back("nested.n_inner", std::to_string(nested_inner));
  e.emplace_back("nested.n_repeats", std::to_string(nested_repeats));
  e.emplace_back("run.seed", std::to_string(seed));
  e.emplace_back("run.out_dir", out_dir.string());
  return e;
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw InputError("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const std::string v = node.data();
      auto num = [&] {
        try {
          return io::parse_double(v);
        } catch (const InputError&) {
          throw InputError("config: bad number '" + v + "' for " + full);
        }
      };
      if (full == "market.S0") c.market.S0 = num();
      else if (full == "market.sigma") c.market.sigma = num();
      else if (full == "market.r") c.market.r = num();
      else if (full == "market.T") c.market.T = static_cast<int>(parse_count(full, v));
      else if (full == "market.A") c.market.A = num();
      else if (full == "market.B") c.market.B = num();
      else if (full == "kernel.family") {
        if (v == "gauss_exp") c.family = KernelFamily::gauss_exp;
        else if (v == "gauss_poly") c.family = KernelFamily::gauss_poly;
        else throw InputError("config: unknown kernel family '" + v + "'");
      } else if (full == "kernel.alpha") c.alphas = parse_list(full, v);
      else if (full == "kernel.beta") c.betas = parse_list(full, v);
      else if (full == "kernel.degree") {
        c.degrees.clear();
        for (double d : parse_list(full, v)) {
          if (d != std::floor(d)) throw InputError("config: degree must be an integer");
          c.degrees.push_back(static_cast<int>(d));
        }
      } else if (full == "kernel.lambda") c.lambdas = parse_list(full, v);
      else if (full == "kernel.gamma") c.gamma = num();
      else if (full == "sample.n_train") c.n_train = parse_count(full, v);
      else if (full == "sample.n_val") c.n_val = parse_count(full, v);
      else if (full == "sample.n_test") c.n_test = parse_count(full, v);
      else if (full == "sample.n_repeats") c.n_repeats = parse_count(full, v);
      else if (full == "ground_truth.method") c.ground_truth.method = parse_method(v);
      else if (full == "ground_truth.n_inner") c.ground_truth.n_inner = parse_count(full, v);
      else if (full == "ground_truth.cache_dir") c.ground_truth_cache = v;
      else if (full == "nested.n_outer") c.nested_outer = parse_count(full, v);
      else if (full == "nested.n_inner") c.nested_inner = parse_count(full, v);
      else if (full == "nested.n_repeats") c.nested_repeats = parse_count(full, v);
      else if (full == "run.seed") {
        try {
          c.seed = std::stoull(v);
        } catch (const std::exception&) {
          throw InputError("config: bad seed '" + v + "'");
        }
      } else if (full == "run.out_dir") c.out_dir = v;
      else if (full == "run.threads") c.threads = static_cast<int>(parse_count(full, v));
      else if (full == "run.payoff") {
        c.payoffs.clear();
        if (v != "all") {
          for (const auto& name : io::split_csv(v)) {
            c.payoffs.push_back(parse_payoff(boost::algorithm::trim_copy(name)));
          }
        }
      } else {
        throw InputError("config: unknown key '" + full + "'");
      }
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) {
    throw InputError("config file not found: " + p.string());
  }
  return parse_config(io::read_file(p));
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> GridResult::ranking() const {
  std::vector<std::size_t> idx(surface.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = surface[a];
    const auto& pb = surface[b];
    if (pa.ok != pb.ok) return pa.ok;
    return pa.ok && pa.error < pb.error;
  });
  return idx;
}

std::optional<std::size_t> GridResult::rank_of(double alpha, double second, double lambda) const {
  const auto r = ranking();
  for (std::size_t k = 0; k < r.size(); ++k) {
    const auto& p = surface[r[k]];
    if (p.alpha == alpha && p.second == second && p.lambda == lambda) return k;
  }
  return std::nullopt;
}

bool GridResult::lambda_interior() const {
  const auto& b = best_point();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : surface) {
    if (p.alpha == b.alpha && p.second == b.second) {
      lo = std::min(lo, p.lambda);
      hi = std::max(hi, p.lambda);
    }
  }
  return b.lambda > lo && b.lambda < hi;
}

double GridResult::max_residual() const {
  double m = 0.0;
  for (const auto& p : surface) {
    if (p.ok) m = std::max(m, p.residual);
  }
  return m;
}

ValidationSet validation_set(const ExperimentConfig& cfg, PayoffId id, std::size_t repeat) {
  ValidationSet v;
  v.paths = draw_paths(
      MeasureSpec{0.0, cfg.market.shape(), derive_seed(cfg.seed, SeedPurpose::validation, repeat)},
      cfg.n_val);
  v.values.resize(cfg.n_val);
  parallel_for(cfg.n_val, [&](std::size_t i) { v.values[i] = payoff(cfg.market, id, v.paths.row(i)); });
  return v;
}

TrainingSet training_set(const ExperimentConfig& cfg, PayoffId id, std::size_t repeat) {
  return build_training_set(cfg.training_measure(repeat), payoff_fn(cfg.market, id), cfg.n_train,
                            std::string(payoff_name(id)));
}

GridResult grid_search(const ExperimentConfig& cfg, const TrainingSet& train,
                       const ValidationSet& val) {
  cfg.validate();
  GridResult g;
  if (cfg.family == KernelFamily::gauss_poly) g.second_name = "degree";
  double best_err = std::numeric_limits<double>::infinity();
  bool any = false;
  for (double alpha : cfg.alphas) {
    for (std::size_t j = 0; j < cfg.second_axis_size(); ++j) {
      const double second = cfg.second_axis_value(j);
      if (cfg.family == KernelFamily::gauss_exp && alpha == 0.0 && second == 0.0) continue;
      std::optional<DualSystem> sys;
      try {
        sys.emplace(train, cfg.kernel(alpha, j));
      } catch (const RangeError&) {
      }
      for (double lambda : cfg.lambdas) {
        GridPoint p{alpha, second, j, lambda, std::numeric_limits<double>::quiet_NaN(), 0.0, false};
        if (sys) {
          try {
            auto est = sys->solve(lambda);
            const Eigen::Map<const Eigen::VectorXd> gv(est.solution().data(),
                                                       static_cast<Eigen::Index>(est.solution().size()));
            p.residual = sys->residual(lambda, gv);
            p.error = payoff_l2_error(est, val.paths, val.values);
            p.ok = std::isfinite(p.error);
            if (p.ok && p.error < best_err) {
              best_err = p.error;
              g.best = g.surface.size();
              g.best_fit = std::move(est);
            }
          } catch (const SolverError&) {
          } catch (const RangeError&) {
          }
        }
        any = any || p.ok;
        g.surface.push_back(p);
      }
    }
  }
  if (!any) throw SolverError("grid search: no grid point could be fitted", 0.0);
  return g;
}

GridResult grid_search(const ExperimentConfig& cfg, PayoffId id) {
  return grid_search(cfg, training_set(cfg, id, 0), validation_set(cfg, id, 0));
}

PathSet test_paths(const ExperimentConfig& cfg) {
  return draw_paths(MeasureSpec{0.0, cfg.market.shape(), derive_seed(cfg.seed, SeedPurpose::test, 0)},
                    cfg.n_test);
}

std::filesystem::path cache_path(const ExperimentConfig& cfg, PayoffId id) {
  char key[17];
  std::snprintf(key, sizeof key, "%016llx", static_cast<unsigned long long>(market_key(cfg)));
  return cfg.ground_truth_cache / ("gt_" + std::string(payoff_name(id)) + "_" + key + ".csv");
}

GroundTruthCache load_cache(const ExperimentConfig& cfg, PayoffId id) {
  if (cfg.ground_truth_cache.empty()) return {};
  const auto p = cache_path(cfg, id);
  return std::filesystem::exists(p) ? GroundTruthCache::load(p) : GroundTruthCache{};
}

void save_cache(const ExperimentConfig& cfg, PayoffId id, const GroundTruthCache& cache) {
  if (cfg.ground_truth_cache.empty()) return;
  cache.save(cache_path(cfg, id));
}

ErrorReport nested_mc_report(const ExperimentConfig& cfg, PayoffId id, GroundTruthCache* cache) {
  const auto source = truth_source(cfg);
  const bool cacheable = cache && cfg.market.T == 2;
  auto truth_at = [&](std::span<const double> prefix, int t) {
    const double x1 = t == 0 ? 0.0 : prefix[0];
    if (cacheable) {
      if (auto hit = cache->find(t, x1)) return *hit;
    }
    return source.value(cfg.market, id, prefix, t);
  };
  ErrorReport rep;
  rep.payoff = std::string(payoff_name(id));
  rep.estimator = "nested_mc";
  const double v0 = truth_at({}, 0);
  if (cacheable && !cache->find(0, 0.0)) {
    cache->insert({0, 0.0, v0, source.method == GroundTruthSource::Method::quadrature ? 0 : source.n_inner,
                   source.method == GroundTruthSource::Method::quadrature ? 0 : source.seed});
  }
  for (std::size_t r = 0; r < cfg.nested_repeats; ++r) {
    const auto res = nested_mc_estimate(cfg.market, id, cfg.nested_outer, cfg.nested_inner,
                                        derive_seed(cfg.seed, SeedPurpose::nested, r));
    std::vector<double> v1(res.outer_x1.size()), err(res.outer_x1.size());
    parallel_for(v1.size(), [&](std::size_t i) {
      v1[i] = truth_at(std::span<const double>(&res.outer_x1[i], 1), 1);
      err[i] = std::abs(v1[i] - res.v1_hat[i]);
    });
    if (cacheable) {
      for (std::size_t i = 0; i < v1.size(); ++i) {
        if (!cache->find(1, res.outer_x1[i])) {
          cache->insert({1, res.outer_x1[i], v1[i],
                         source.method == GroundTruthSource::Method::quadrature ? 0 : source.n_inner,
                         source.method == GroundTruthSource::Method::quadrature ? 0 : source.seed});
        }
      }
    }
    rep.per_repeat.push_back({100.0 * std::abs(v0 - res.v0_hat) / v0,
                              100.0 * pairwise_sum(err) / static_cast<double>(err.size()) / v0});
    rep.payoff_calls += res.payoff_calls;
  }
  rep.summarize();
  return rep;
}

PayoffRun run_payoff(const ExperimentConfig& cfg, PayoffId id, const RunOptions& opt) {
  cfg.validate();
  PayoffRun run;
  run.id = id;
  const auto source = truth_source(cfg);
  auto cache = load_cache(cfg, id);
  GroundTruthCache* cp = cfg.ground_truth_cache.empty() ? nullptr : &cache;
  const auto test = test_paths(cfg);
  run.truth = ground_truth_table(cfg.market, id, test, source, cp);

  run.kernel.payoff = std::string(payoff_name(id));
  run.kernel.estimator = "kernel";
  const auto repeats = opt.n_repeats.value_or(cfg.n_repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto train = training_set(cfg, id, r);
    const auto val = validation_set(cfg, id, r);
    std::optional<Estimator> est;
    if (r == 0) {
      run.grid = grid_search(cfg, train, val);
      est = run.grid.best_fit;
    } else {
      const auto& b = run.grid.best_point();
      est = fit_dual_unsorted(train, cfg.kernel(b.alpha, b.second_index), b.lambda);
    }
    auto errors = value_process_error(*est, test, run.truth, r == 0 && opt.keep_trajectories);
    std::vector<double> pct(errors.rel_l1.size());
    for (std::size_t t = 0; t < pct.size(); ++t) pct[t] = 100.0 * errors.rel_l1[t];
    run.kernel.per_repeat.push_back(std::move(pct));
    run.kernel.payoff_l2.push_back(payoff_l2_error(*est, val.paths, val.values));
    const auto calls = train.payoff_calls + val.values.size();
    run.kernel.payoff_calls += calls;
    if (r == 0) run.budget_per_repeat = calls;
    if (r != 0) errors.vhat.clear();
    run.errors.push_back(std::move(errors));
  }
  run.kernel.summarize();
  if (opt.nested) run.nested = nested_mc_report(cfg, id, cp);
  if (cp) save_cache(cfg, id, cache);
  return run;
}

std::string table2_csv(const std::vector<PayoffRun>& runs) {
  std::string s = kErrorReportHeader;
  for (const auto& r : runs) {
    s += r.kernel.csv_rows();
    if (!r.nested.per_repeat.empty()) s += r.nested.csv_rows();
  }
  return s;
}

std::string grid_csv(const GridResult& g) {
  std::ostringstream os;
  os << "alpha," << g.second_name << ",lambda,rel_l2_error,residual\n";
  for (const auto& p : g.surface) {
    os << io::format_double(p.alpha) << ',' << io::format_double(p.second) << ','
       << io::format_double(p.lambda) << ',' << io::format_double(p.error) << ','
       << io::format_double(p.residual) << '\n';
  }
  return os.str();
}

std::string fig1_csv(const GridResult& g) {
  const auto& b = g.best_point();
  std::ostringstream os;
  os << "alpha," << g.second_name << ",lambda,rel_l2_error\n";
  for (const auto& p : g.surface) {
    if (p.lambda != b.lambda) continue;
    os << io::format_double(p.alpha) << ',' << io::format_double(p.second) << ','
       << io::format_double(p.lambda) << ',' << io::format_double(p.error) << '\n';
  }
  return os.str();
}

std::string fig2_csv(const GridResult& g) {
  const auto& b = g.best_point();
  std::ostringstream os;
  os << "alpha," << g.second_name << ",lambda,rel_l2_error\n";
  for (const auto& p : g.surface) {
    if (p.alpha != b.alpha || p.second != b.second) continue;
    os << io::format_double(p.alpha) << ',' << io::format_double(p.second) << ','
       << io::format_double(p.lambda) << ',' << io::format_double(p.error) << '\n';
  }
  return os.str();
}

std::string fig3_csv(const ValueErrors& e, int T) {
  const auto stride = static_cast<std::size_t>(T) + 1;
  if (e.trajectories.empty() || e.trajectories.size() % stride != 0) {
    throw DataError("fig3: trajectories were not recorded");
  }
  std::ostringstream os;
  os << "trajectory_id,t,value\n";
  for (std::size_t i = 0; i < e.trajectories.size() / stride; ++i) {
    for (std::size_t t = 0; t < stride; ++t) {
      os << i << ',' << t << ',' << io::format_double(e.trajectories[i * stride + t]) << '\n';
    }
  }
  return os.str();
}

}  // namespace kvp
