#include "kvp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "kvp/diagnostics.hpp"
#include "kvp/experiment.hpp"
#include "kvp/io.hpp"
#include "kvp/simd.hpp"
#include "kvp/valuation.hpp"

#ifndef KVP_GIT_HASH
#define KVP_GIT_HASH "unknown"
#endif

namespace kvp::cli {

namespace {

using json = nlohmann::json;

struct Common {
  std::string config;
  std::string payoff;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  std::optional<std::size_t> n_train;
  std::optional<std::size_t> n_inner_gt;
  std::string gt_method;
  std::optional<std::size_t> repeats;
};

struct KernelFlags {
  double alpha = 4.0;
  double beta = 0.3;
  int degree = 2;
  double lambda = 1e-5;
};

// Output files and payoff-call counts collected for the manifest.
struct Manifest {
  std::vector<std::string> args;
  std::string command;
  json outputs = json::object();
  json payoff_calls = json::object();
  json extra = json::object();

  void add_output(const std::filesystem::path& dir, const std::string& name, const std::string& text) {
    io::write_file(dir / name, text);
    outputs[name] = io::sha256_hex(text);
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "configuration file (INI)");
  sub->add_option("--payoff", c.payoff, "payoff id, comma list or 'all'");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--n-train", c.n_train, "training sample size");
  sub->add_option("--n-inner-gt", c.n_inner_gt,
                  "Monte Carlo ground-truth budget (switches the ground truth to monte_carlo)");
  sub->add_option("--ground-truth", c.gt_method, "quadrature or monte_carlo");
  sub->add_option("--repeats", c.repeats, "number of repetitions");
}

void add_kernel(CLI::App* sub, KernelFlags& k) {
  sub->add_option("--alpha", k.alpha, "kernel alpha");
  sub->add_option("--beta", k.beta, "kernel beta (gauss_exp)");
  sub->add_option("--degree", k.degree, "kernel degree (gauss_poly)");
  sub->add_option("--lambda", k.lambda, "regularization parameter");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (!c.payoff.empty()) {
    cfg.payoffs.clear();
    if (c.payoff != "all") {
      for (const auto& name : io::split_csv(c.payoff)) cfg.payoffs.push_back(parse_payoff(name));
    }
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.n_train) cfg.n_train = *c.n_train;
  if (!c.gt_method.empty()) cfg.ground_truth.method = parse_method(c.gt_method);
  if (c.n_inner_gt) {
    cfg.ground_truth.method = GroundTruthSource::Method::monte_carlo;
    cfg.ground_truth.n_inner = *c.n_inner_gt;
  }
  if (c.repeats) cfg.n_repeats = *c.repeats;
  cfg.threads = c.threads;
  cfg.validate();
  set_num_threads(cfg.threads);
  return cfg;
}

KernelSpec kernel_from_flags(const ExperimentConfig& cfg, const KernelFlags& k) {
  if (cfg.family == KernelFamily::gauss_poly) {
    return KernelSpec::gauss_poly(cfg.market.shape(), k.alpha, k.degree, cfg.gamma);
  }
  return KernelSpec::gauss_exp(cfg.market.shape(), k.alpha, k.beta, cfg.gamma);
}

std::vector<double> parse_point(const std::string& s) {
  std::vector<double> v;
  for (const auto& item : io::split_csv(s)) v.push_back(io::parse_double(item));
  return v;
}

void write_manifest(const ExperimentConfig& cfg, Manifest& m) {
  json j;
  j["command"] = m.command;
  j["args"] = m.args;
  json conf = json::object();
  for (const auto& [k, v] : cfg.entries()) conf[k] = v;
  j["config"] = conf;
  json seeds;
  seeds["master"] = cfg.seed;
  json training = json::array(), validation = json::array(), nested = json::array();
  for (std::size_t r = 0; r < cfg.n_repeats; ++r) {
    training.push_back(derive_seed(cfg.seed, SeedPurpose::training, r));
    validation.push_back(derive_seed(cfg.seed, SeedPurpose::validation, r));
  }
  for (std::size_t r = 0; r < cfg.nested_repeats; ++r) {
    nested.push_back(derive_seed(cfg.seed, SeedPurpose::nested, r));
  }
  seeds["training"] = training;
  seeds["validation"] = validation;
  seeds["test"] = derive_seed(cfg.seed, SeedPurpose::test, 0);
  seeds["nested"] = nested;
  seeds["ground_truth"] = derive_seed(cfg.seed, SeedPurpose::ground_truth, 0);
  j["seeds"] = seeds;
  j["git_hash"] = KVP_GIT_HASH;
  j["payoff_calls"] = m.payoff_calls;
  j["outputs"] = m.outputs;
  if (!m.extra.empty()) j["results"] = m.extra;
  io::write_file(cfg.out_dir / "manifest.json", j.dump(1) + "\n");
}

int cmd_simulate(const ExperimentConfig& cfg, std::size_t repeat, Manifest& m, std::ostream& out) {
  for (auto id : cfg.payoff_list()) {
    const auto ts = training_set(cfg, id, repeat);
    const auto name = "training_" + std::string(payoff_name(id)) + ".csv";
    m.add_output(cfg.out_dir, name, training_csv(ts));
    m.payoff_calls[std::string(payoff_name(id))] = ts.payoff_calls;
    out << name << ": " << ts.size() << " paths\n";
  }
  return kExitOk;
}

int cmd_fit(const ExperimentConfig& cfg, const KernelFlags& k, const std::string& train_csv,
            bool sorted, std::size_t repeat, Manifest& m, std::ostream& out) {
  for (auto id : cfg.payoff_list()) {
    const auto pname = std::string(payoff_name(id));
    TrainingSet ts;
    if (train_csv.empty()) {
      ts = training_set(cfg, id, repeat);
    } else {
      std::ifstream is(train_csv);
      if (!is) throw InputError("cannot open training file " + train_csv);
      ts = read_training_csv(is, cfg.training_measure(repeat), pname);
    }
    const auto kernel = kernel_from_flags(cfg, k);
    const auto est = sorted ? fit_dual_sorted(ts, kernel, k.lambda)
                            : fit_dual_unsorted(ts, kernel, k.lambda);
    const auto val = validation_set(cfg, id, repeat);
    const double err = payoff_l2_error(est, val.paths, val.values);
    m.add_output(cfg.out_dir, "estimator_" + pname + ".json", est.to_json());
    m.payoff_calls[pname] = ts.payoff_calls + val.values.size();
    m.extra[pname] = {{"rel_l2_error", err}, {"residual", normal_equation_residual(est, ts)}};
    out << pname << ": rel L2 validation error " << io::format_double(err) << '\n';
  }
  return kExitOk;
}

int cmd_grid(const ExperimentConfig& cfg, Manifest& m, std::ostream& out) {
  for (auto id : cfg.payoff_list()) {
    const auto pname = std::string(payoff_name(id));
    const auto g = grid_search(cfg, id);
    m.add_output(cfg.out_dir, "grid_" + pname + ".csv", grid_csv(g));
    m.add_output(cfg.out_dir, "estimator_" + pname + ".json", g.best_fit->to_json());
    m.payoff_calls[pname] = cfg.n_train + cfg.n_val;
    const auto& b = g.best_point();
    m.extra[pname] = {{"alpha", b.alpha}, {g.second_name, b.second}, {"lambda", b.lambda},
                      {"rel_l2_error", b.error}, {"max_residual", g.max_residual()}};
    out << pname << ": alpha=" << io::format_double(b.alpha) << ' ' << g.second_name << '='
        << io::format_double(b.second) << " lambda=" << io::format_double(b.lambda)
        << " error=" << io::format_double(b.error) << '\n';
  }
  return kExitOk;
}

int cmd_value(const ExperimentConfig& cfg, const std::string& est_file, const std::string& path,
              Manifest& m, std::ostream& out) {
  if (!std::filesystem::is_regular_file(est_file)) {
    throw InputError("estimator file not found: " + est_file);
  }
  const auto est = Estimator::from_json(io::read_file(est_file));
  if (!path.empty()) {
    const auto x = parse_point(path);
    const auto vs = value_series(est, x);
    std::ostringstream os;
    os << "t,value\n";
    for (std::size_t t = 0; t < vs.values.size(); ++t) {
      os << t << ',' << io::format_double(vs.values[t]) << '\n';
    }
    out << os.str();
    m.add_output(cfg.out_dir, "values.csv", os.str());
    return kExitOk;
  }
  if (!(est.kernel().shape() == cfg.market.shape())) {
    throw InputError("estimator shape does not match the configured market");
  }
  const auto test = test_paths(cfg);
  const auto T = static_cast<std::size_t>(cfg.market.T);
  std::vector<double> v(test.size() * (T + 1));
  parallel_for(test.size(), [&](std::size_t i) {
    const auto vs = value_series(est, test.row(i));
    std::copy(vs.values.begin(), vs.values.end(), v.begin() + static_cast<std::ptrdiff_t>(i * (T + 1)));
  });
  std::ostringstream os;
  os << "path_id,t,value\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (std::size_t t = 0; t <= T; ++t) {
      os << i << ',' << t << ',' << io::format_double(v[i * (T + 1) + t]) << '\n';
    }
  }
  m.add_output(cfg.out_dir, "values.csv", os.str());
  out << "values.csv: " << test.size() << " paths\n";
  return kExitOk;
}

json run_summary(const PayoffRun& r) {
  const auto& b = r.grid.best_point();
  json j;
  j["alpha"] = b.alpha;
  j[r.grid.second_name] = b.second;
  j["lambda"] = b.lambda;
  j["validation_error"] = b.error;
  j["lambda_interior"] = r.grid.lambda_interior();
  j["max_residual"] = r.grid.max_residual();
  j["budget_per_repeat"] = r.budget_per_repeat;
  j["v0"] = r.truth.v0;
  j["kernel_mean_pct"] = r.kernel.mean_pct;
  j["kernel_std_pct"] = r.kernel.std_pct;
  j["payoff_l2"] = r.kernel.payoff_l2;
  if (!r.nested.per_repeat.empty()) {
    j["nested_mean_pct"] = r.nested.mean_pct;
    j["nested_std_pct"] = r.nested.std_pct;
  }
  return j;
}

int cmd_table2(const ExperimentConfig& cfg, Manifest& m, std::ostream& out) {
  std::vector<PayoffRun> runs;
  for (auto id : cfg.payoff_list()) {
    runs.push_back(run_payoff(cfg, id));
    const auto& r = runs.back();
    const auto pname = std::string(payoff_name(id));
    m.add_output(cfg.out_dir, "estimator_" + pname + ".json", r.grid.best_fit->to_json());
    m.payoff_calls[pname] = {{"training_validation", r.kernel.payoff_calls},
                             {"nested_mc", r.nested.payoff_calls}};
    m.extra[pname] = run_summary(r);
  }
  const auto csv = table2_csv(runs);
  m.add_output(cfg.out_dir, "table2.csv", csv);
  out << csv;
  return kExitOk;
}

int cmd_figures(const ExperimentConfig& cfg, Manifest& m, std::ostream& out) {
  for (auto id : cfg.payoff_list()) {
    RunOptions opt;
    opt.nested = false;
    opt.keep_trajectories = true;
    opt.n_repeats = 1;
    const auto r = run_payoff(cfg, id, opt);
    const auto pname = std::string(payoff_name(id));
    m.add_output(cfg.out_dir, "fig1_" + pname + ".csv", fig1_csv(r.grid));
    m.add_output(cfg.out_dir, "fig2_" + pname + ".csv", fig2_csv(r.grid));
    m.add_output(cfg.out_dir, "fig3_" + pname + ".csv", fig3_csv(r.errors.front(), cfg.market.T));
    m.payoff_calls[pname] = r.kernel.payoff_calls;
    m.extra[pname] = {{"lambda_interior", r.grid.lambda_interior()}};
    out << pname << ": lambda interior " << (r.grid.lambda_interior() ? "yes" : "no") << '\n';
  }
  return kExitOk;
}

int cmd_nested(const ExperimentConfig& cfg, Manifest& m, std::ostream& out) {
  std::string csv = kErrorReportHeader;
  for (auto id : cfg.payoff_list()) {
    auto cache = load_cache(cfg, id);
    const auto rep = nested_mc_report(cfg, id, cfg.ground_truth_cache.empty() ? nullptr : &cache);
    save_cache(cfg, id, cache);
    csv += rep.csv_rows();
    m.payoff_calls[rep.payoff] = rep.payoff_calls;
  }
  m.add_output(cfg.out_dir, "nested_mc.csv", csv);
  out << csv;
  return kExitOk;
}

struct DiagFlags {
  std::size_t n_ref = 8000;
  std::size_t repeats = 20;
  std::size_t clt_repeats = 200;
  std::size_t n_probe = 100000;
  double epsilon = 0.01;
  bool primal = false;
  std::string probe;
};

int cmd_diagnostics(const ExperimentConfig& cfg, const KernelFlags& k, const DiagFlags& f,
                    Manifest& m, std::ostream& out) {
  for (auto id : cfg.payoff_list()) {
    DiagnosticSetup s;
    s.market = cfg.market;
    s.payoff = id;
    s.primal = f.primal;
    s.alpha = k.alpha;
    s.beta = k.beta;
    s.gamma = cfg.gamma;
    s.lambda = k.lambda;
    s.n = cfg.n_train;
    s.seed = cfg.seed;
    s.n_probe = f.n_probe;
    const auto ref = reference_estimator(s, f.n_ref);
    const auto mse = mse_bound_check(s, ref, f.repeats);
    const auto conc = concentration_check(s, ref, f.repeats);
    auto probe = f.probe.empty() ? std::vector<double>(cfg.market.shape().size(), 0.0)
                                 : parse_point(f.probe);
    const auto clt = clt_experiment(s, ref, f.clt_repeats, probe);
    const auto rob = robustness_check(s, f.epsilon, f.repeats);
    const auto pname = std::string(payoff_name(id));
    const std::string text = "{\"mse_bound\":" + mse.to_json() + ",\n\"concentration\":" +
                             conc.to_json() + ",\n\"clt\":" + clt.to_json() +
                             ",\n\"robustness\":" + rob.to_json() + "}\n";
    m.add_output(cfg.out_dir, "diagnostics_" + pname + ".json", text);
    m.extra[pname] = {{"mse_bound", mse.holds}, {"concentration", conc.holds},
                      {"clt", clt.holds}, {"robustness", rob.holds}};
    out << pname << ": mse_bound " << (mse.holds ? "holds" : "violated") << ", concentration "
        << (conc.applicable ? (conc.holds ? "holds" : "violated") : "n/a") << ", clt "
        << (clt.holds ? "holds" : "violated") << ", robustness "
        << (rob.holds ? "holds" : "violated") << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Kernel-based valuation of path-dependent payoffs", "kvp"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string("kvp ") + KVP_GIT_HASH);

  Common common;
  KernelFlags kernel;
  DiagFlags diag;
  std::size_t repeat = 0;
  std::string train_csv, est_file, path;
  bool sorted = false;

  auto* sim = app.add_subcommand("simulate", "draw a training sample and write it as CSV");
  add_common(sim, common);
  sim->add_option("--repeat", repeat, "repetition index of the sample");

  auto* fit = app.add_subcommand("fit", "fit one estimator");
  add_common(fit, common);
  add_kernel(fit, kernel);
  fit->add_option("--train", train_csv, "training CSV (default: draw a fresh sample)");
  fit->add_flag("--sorted", sorted, "merge duplicate paths before solving");
  fit->add_option("--repeat", repeat, "repetition index of the sample");

  auto* grid = app.add_subcommand("grid-search", "hyperparameter search on the validation sample");
  add_common(grid, common);

  auto* value = app.add_subcommand("value", "evaluate the value process of a fitted estimator");
  add_common(value, common);
  value->add_option("--estimator", est_file, "estimator JSON")->required();
  value->add_option("--path", path, "comma-separated innovations of one path");

  auto* table = app.add_subcommand("table2", "value-process error table");
  add_common(table, common);

  auto* figs = app.add_subcommand("figures", "figure data as CSV");
  add_common(figs, common);

  auto* nested = app.add_subcommand("nested-mc", "nested Monte Carlo baseline errors");
  add_common(nested, common);

  auto* dg = app.add_subcommand("diagnostics", "bound and limit-theorem checks");
  add_common(dg, common);
  add_kernel(dg, kernel);
  dg->add_option("--n-ref", diag.n_ref, "reference sample size");
  dg->add_option("--bound-repeats", diag.repeats, "refits for the bound checks");
  dg->add_option("--clt-repeats", diag.clt_repeats, "refits for the CLT experiment");
  dg->add_option("--n-probe", diag.n_probe, "probe sample for sup-norms");
  dg->add_option("--epsilon", diag.epsilon, "robustness perturbation");
  dg->add_option("--probe", diag.probe, "CLT probe point (comma-separated)");
  dg->add_flag("--primal", diag.primal, "monomial features instead of the kernel");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInput;
  }

  Manifest m;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--threads") {
      ++i;
      continue;
    }
    if (args[i].rfind("--threads=", 0) == 0) continue;
    m.args.push_back(args[i]);
  }
  try {
    const auto* sub = app.get_subcommands().front();
    m.command = sub->get_name();
    const auto cfg = resolve(common);
    std::filesystem::create_directories(cfg.out_dir);
    int rc = kExitOk;
    if (sub == sim) rc = cmd_simulate(cfg, repeat, m, out);
    else if (sub == fit) rc = cmd_fit(cfg, kernel, train_csv, sorted, repeat, m, out);
    else if (sub == grid) rc = cmd_grid(cfg, m, out);
    else if (sub == value) rc = cmd_value(cfg, est_file, path, m, out);
    else if (sub == table) rc = cmd_table2(cfg, m, out);
    else if (sub == figs) rc = cmd_figures(cfg, m, out);
    else if (sub == nested) rc = cmd_nested(cfg, m, out);
    else if (sub == dg) rc = cmd_diagnostics(cfg, kernel, diag, m, out);
    write_manifest(cfg, m);
    return rc;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const CapabilityError& e) {
    err << "unsupported: " << e.what() << '\n';
    return kExitInput;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << " (rcond " << e.rcond() << ")\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace kvp::cli
