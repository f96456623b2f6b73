#include "kvp/ground_truth.hpp"

#include <algorithm>
#include <bit>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "kvp/io.hpp"

namespace kvp {

namespace {

constexpr double kRange = 10.0;  // innovations integrated over [-kRange, kRange]
constexpr double kTol = 1e-11;

double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

double quad_value(const BSConfig& cfg, PayoffId id, std::vector<double>& x, int t) {
  if (t == cfg.T) return payoff(cfg, id, x);

  // Nominal prices so far and the levels of N_{t+1} where the payoff, or a
  // later conditional value, is not smooth.
  const auto s = stock_path(cfg, std::span<const double>(x.data(), static_cast<std::size_t>(cfg.T)));
  double running_max = cfg.S0;
  double partial_sum = 0.0;
  for (int u = 1; u <= t; ++u) {
    const double n_u = std::exp(cfg.r * u) * s[static_cast<std::size_t>(u)];
    running_max = std::max(running_max, n_u);
    partial_sum += n_u;
  }
  std::vector<double> levels = {cfg.A, cfg.B, running_max, cfg.T * cfg.A - partial_sum};
  const double base = std::exp(cfg.r * (t + 1)) * s[static_cast<std::size_t>(t)];
  std::vector<double> cuts = {-kRange, kRange};
  for (double level : levels) {
    if (!(level > 0.0)) continue;
    const double z = (std::log(level / base) + 0.5 * cfg.sigma * cfg.sigma) / cfg.sigma;
    if (z > -kRange && z < kRange) cuts.push_back(z);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto integrand = [&](double z) {
    std::vector<double> y = x;
    y[static_cast<std::size_t>(t)] = z;
    return quad_value(cfg, id, y, t + 1) * normal_pdf(z);
  };
  // Outer levels integrate quadrature output, so they cannot resolve below
  // the inner error; asking for it only exhausts the bisection depth.
  const double tol = kTol * std::pow(100.0, cfg.T - 1 - t);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        integrand, cuts[k], cuts[k + 1], 12, tol);
  }
  return total;
}

}  // namespace

double ground_truth_quadrature(const BSConfig& cfg, PayoffId id,
                               std::span<const double> prefix, int t) {
  cfg.validate();
  if (cfg.T > 3) throw CapabilityError("quadrature ground truth supports T <= 3");
  if (t < 0 || t > cfg.T) throw InputError("ground truth: time index out of range");
  if (prefix.size() != static_cast<std::size_t>(t)) {
    throw InputError("ground truth: prefix must hold t innovations");
  }
  std::vector<double> x(static_cast<std::size_t>(cfg.T), 0.0);
  std::copy(prefix.begin(), prefix.end(), x.begin());
  return quad_value(cfg, id, x, t);
}

double GroundTruthSource::value(const BSConfig& cfg, PayoffId id,
                                std::span<const double> prefix, int t) const {
  if (t == cfg.T) return payoff(cfg, id, prefix);
  if (method == Method::quadrature) return ground_truth_quadrature(cfg, id, prefix, t);
  // Inner draws keyed by the realized prefix, so a value does not depend on
  // which other paths are evaluated.
  std::uint64_t key = mix64(seed ^ static_cast<std::uint64_t>(t));
  for (double v : prefix) key = mix64(key ^ std::bit_cast<std::uint64_t>(v));
  return ground_truth_value(cfg, id, prefix, t, n_inner, key);
}

std::string_view method_name(GroundTruthSource::Method m) {
  return m == GroundTruthSource::Method::quadrature ? "quadrature" : "monte_carlo";
}

GroundTruthSource::Method parse_method(std::string_view s) {
  if (s == "quadrature") return GroundTruthSource::Method::quadrature;
  if (s == "monte_carlo" || s == "mc") return GroundTruthSource::Method::monte_carlo;
  throw InputError("unknown ground-truth method '" + std::string(s) + "'");
}

std::optional<double> GroundTruthCache::find(int t, double x1) const {
  auto it = rows_.find({t, std::bit_cast<std::uint64_t>(x1)});
  if (it == rows_.end()) return std::nullopt;
  return it->second.value;
}

void GroundTruthCache::insert(const Row& row) {
  rows_[{row.t, std::bit_cast<std::uint64_t>(row.x1)}] = row;
}

std::string GroundTruthCache::to_csv() const {
  std::ostringstream os;
  os << "t,x1,value,n_inner,seed\n";
  for (const auto& [key, r] : rows_) {
    os << r.t << ',' << io::format_double(r.x1) << ',' << io::format_double(r.value) << ','
       << r.n_inner << ',' << r.seed << '\n';
  }
  return os.str();
}

GroundTruthCache GroundTruthCache::from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || io::split_csv(line).size() != 5) {
    throw InputError("ground-truth cache: bad header");
  }
  GroundTruthCache c;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = io::split_csv(line);
    if (cells.size() != 5) throw InputError("ground-truth cache: bad row '" + line + "'");
    Row r;
    r.t = std::stoi(cells[0]);
    r.x1 = io::parse_double(cells[1]);
    r.value = io::parse_double(cells[2]);
    r.n_inner = std::stoull(cells[3]);
    r.seed = std::stoull(cells[4]);
    c.insert(r);
  }
  return c;
}

void GroundTruthCache::save(const std::filesystem::path& p) const { io::write_file(p, to_csv()); }

GroundTruthCache GroundTruthCache::load(const std::filesystem::path& p) {
  return from_csv(io::read_file(p));
}

}  // namespace kvp
