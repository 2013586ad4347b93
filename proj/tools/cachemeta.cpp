// cachemeta: evaluate, sweep, optimize and Monte-Carlo validate the caching /
// DTX network model.
//
//   cachemeta metrics  --scenario s.json [--format csv|json]
//   cachemeta sweep    --scenario s.json --var theta_db --start -10 --stop 10 --steps 21 [--metrics m1,variance]
//   cachemeta optimize --scenario s.json --problem stp|delay [--strategy proposed|mpc|uc]
//   cachemeta validate --scenario s.json [--seed N] [--realizations N]
//
// Exit codes: 0 ok, 2 input error, 3 degenerate configuration, 4 infeasible
// optimization, 5 validation failure.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cachemeta/metrics.hpp"
#include "cachemeta/model.hpp"
#include "cachemeta/optim.hpp"
#include "cachemeta/scenario.hpp"
#include "cachemeta/sim.hpp"

namespace {

using namespace cachemeta;
using nlohmann::json;

enum Exit { kOk = 0, kInput = 2, kDegenerate = 3, kInfeasible = 4, kValidation = 5 };

class degenerate_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string scenario_path;
  std::string out_path;
  std::string format = "csv";
  std::string convention = "consistent";
  std::optional<std::uint64_t> seed;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;
};

std::string cell_text(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os.precision(10);
    os << v.get<double>();
    return os.str();
  }
  return v.dump();
}

void write_table(std::ostream& os, const Table& t, const std::string& format) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& row : t.rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < t.header.size(); ++i) obj[t.header[i]] = row[i];
      arr.push_back(obj);
    }
    os << arr.dump(2) << '\n';
    return;
  }
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell_text(row[i]);
    os << '\n';
  }
}

template <class Writer>
void emit(const Common& common, Writer&& writer) {
  if (common.out_path.empty()) {
    writer(std::cout);
    return;
  }
  std::ofstream out(common.out_path);
  if (!out) throw scenario_error("cannot open output file " + common.out_path);
  writer(out);
}

MomentConvention convention_of(const Common& c) {
  return c.convention == "paper" ? MomentConvention::paper() : MomentConvention::consistent();
}

Scenario load(const Common& c, bool allow_oversized_cache = false) {
  Scenario s = c.scenario_path.empty() ? Scenario{} : load_scenario(c.scenario_path);
  if (c.seed) s.simulation.master_seed = *c.seed;
  s.validate();
  if (!allow_oversized_cache) s.validate_capacity();
  return s;
}

json num(double v) { return json_number(v); }

// ---------------------------------------------------------------------------
// metrics

int cmd_metrics(const Common& common) {
  const Scenario s = load(common);
  const auto conv = convention_of(common);
  const Catalog cat = s.catalog();
  const CachingPolicy policy = s.caching_policy();
  const NetworkParams& p = s.network;
  const auto qc = critical_q(p);

  Table t;
  t.header = {"file", "popularity", "q", "m1", "m2", "variance", "m_neg1", "q_c", "beta_c", "theta_c_db"};
  bool any_finite = false;
  for (std::size_t f = 0; f < cat.size(); ++f) {
    const double q = policy.q[f];
    std::vector<json> row{f + 1, cat.popularity[f], q};
    if (q > 0.0) {
      const double m1 = moment(1.0, p, q, conv);
      const double m2 = moment(2.0, p, q, conv);
      const double delay = mean_local_delay(p, q);
      any_finite = any_finite || std::isfinite(delay);
      row.insert(row.end(), {num(m1), num(m2), num(std::max(0.0, m2 - m1 * m1)), num(delay)});
      row.push_back(qc ? json(*qc) : json(nullptr));
      row.push_back(num(critical_beta(p, q)));
      const double tc = critical_theta(p, q);
      row.push_back(tc > 0.0 ? num(linear_to_db(tc)) : num(-kInfinity));
    } else {
      row.insert(row.end(), {0.0, 0.0, 0.0, num(kInfinity)});
      row.push_back(qc ? json(*qc) : json(nullptr));
      row.push_back(nullptr);
      row.push_back(nullptr);
    }
    t.rows.push_back(std::move(row));
  }
  const double jitter = network_jitter(p, policy, cat, conv);
  const double stp = mean_stp(p, policy, cat, conv);
  const double dai = system_delay(policy, p, cat, s.backhaul_delay);

  emit(common, [&](std::ostream& os) {
    if (common.format == "json") {
      json rows = json::array();
      for (const auto& r : t.rows) {
        json obj;
        for (std::size_t i = 0; i < t.header.size(); ++i) obj[t.header[i]] = r[i];
        rows.push_back(obj);
      }
      os << json{{"files", rows},
                 {"network_jitter", num(jitter)},
                 {"mean_stp", num(stp)},
                 {"system_delay", num(dai)}}
                .dump(2)
         << '\n';
    } else {
      write_table(os, t, "csv");
    }
  });
  if (common.format != "json") {
    std::cerr << "network_jitter=" << jitter << " mean_stp=" << stp << " system_delay=" << dai << '\n';
  }
  if (!any_finite) throw degenerate_error("mean local delay is infinite for every cached file");
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep

const std::map<std::string, std::vector<std::string>>& default_metrics() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"theta_db", {"m1", "variance", "m_neg1"}},
      {"beta", {"m1", "variance", "m_neg1", "jitter"}},
      {"q", {"m1", "variance", "m_neg1"}},
      {"cache_size", {"stp_proposed", "stp_mpc", "stp_uc", "delay_proposed", "delay_mpc", "delay_uc"}},
      {"gamma", {"stp_proposed", "stp_mpc", "stp_uc", "delay_proposed", "delay_mpc", "delay_uc"}},
      {"xi", {"delay_proposed", "delay_mpc", "delay_uc", "f_c_proposed"}},
      {"y", {"meta_exact", "meta_beta"}},
  };
  return m;
}

const std::vector<std::string> kPointMetrics = {"m1",           "m2",       "variance",       "m_neg1",
                                                "jitter",       "q_c",      "beta_c",         "theta_c_db",
                                                "stp_proposed", "stp_mpc",  "stp_uc",         "delay_proposed",
                                                "delay_mpc",    "delay_uc", "f_c_proposed",   "beta_proposed",
                                                "beta_mpc",     "beta_uc"};

void apply_variable(Scenario& s, const std::string& var, double v) {
  if (var == "theta_db") {
    s.set_theta_db(v);
  } else if (var == "beta") {
    s.network.beta = v;
  } else if (var == "q") {
    s.caching_probability = v;
  } else if (var == "cache_size") {
    if (v != std::round(v) || v < 1.0) throw scenario_error("cache_size sweep values must be positive integers");
    s.cache_size = static_cast<std::size_t>(v);
  } else if (var == "gamma") {
    s.zipf_gamma = v;
  } else if (var == "xi") {
    s.backhaul_delay = v;
  } else {
    throw scenario_error("unknown sweep variable " + var);
  }
  s.validate();
  s.validate_capacity();
}

json point_metric(const Scenario& s, const std::string& name, MomentConvention conv,
                  std::map<std::string, json>& cache) {
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  const NetworkParams& p = s.network;
  const double q = s.caching_probability;
  const Catalog cat = s.catalog();
  const std::size_t C = s.cache_size;
  json value;
  if (name == "m1") {
    value = num(moment(1.0, p, q, conv));
  } else if (name == "m2") {
    value = num(moment(2.0, p, q, conv));
  } else if (name == "variance") {
    value = num(stp_variance(p, q, conv));
  } else if (name == "m_neg1") {
    value = num(mean_local_delay(p, q));
  } else if (name == "jitter") {
    value = num(network_jitter(p, s.caching_policy(), cat, conv));
  } else if (name == "q_c") {
    const auto qc = critical_q(p);
    value = qc ? json(*qc) : json(nullptr);
  } else if (name == "beta_c") {
    value = num(critical_beta(p, q));
  } else if (name == "theta_c_db") {
    const double tc = critical_theta(p, q);
    value = tc > 0.0 ? num(linear_to_db(tc)) : num(-kInfinity);
  } else if (name == "stp_proposed") {
    value = num(solve_problem1(cat, p, C, conv).objective);
  } else if (name == "stp_mpc") {
    value = num(mean_stp(p, mpc_policy(cat, C), cat, conv));
  } else if (name == "stp_uc") {
    value = num(mean_stp(p, uc_policy(cat, C, cat.size()), cat, conv));
  } else if (name == "delay_proposed" || name == "f_c_proposed" || name == "beta_proposed") {
    const auto sol = solve_problem2(cat, p, C, s.backhaul_delay);
    cache["delay_proposed"] = num(sol.objective);
    cache["f_c_proposed"] = sol.f_c_star;
    cache["beta_proposed"] = num(sol.beta_star);
    return cache.at(name);
  } else if (name == "delay_mpc" || name == "beta_mpc") {
    const auto sol = iterative_baseline(Baseline::mpc, cat, p, C, s.backhaul_delay);
    cache["delay_mpc"] = num(sol.objective);
    cache["beta_mpc"] = num(sol.beta_star);
    return cache.at(name);
  } else if (name == "delay_uc" || name == "beta_uc") {
    const auto sol = iterative_baseline(Baseline::uc, cat, p, C, s.backhaul_delay);
    cache["delay_uc"] = num(sol.objective);
    cache["beta_uc"] = num(sol.beta_star);
    return cache.at(name);
  } else {
    throw scenario_error("unknown metric " + name);
  }
  cache[name] = value;
  return value;
}

struct SweepArgs {
  std::string variable;
  double start = 0.0;
  double stop = 1.0;
  std::size_t steps = 2;
  std::vector<std::string> metrics;
  std::vector<std::string> overrides;  // key=value
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (i + 1 == n) ? b : a + (b - a) * static_cast<double>(i) / (n - 1);
  return v;
}

int cmd_sweep(const Common& common, const SweepArgs& args) {
  Scenario base = load(common);
  const auto conv = convention_of(common);
  if (!default_metrics().count(args.variable)) throw scenario_error("unknown sweep variable " + args.variable);
  if (args.steps < 2) throw scenario_error("sweep needs at least 2 steps");
  for (const auto& o : args.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw scenario_error("override must be key=value: " + o);
    double v = 0.0;
    try {
      v = std::stod(o.substr(eq + 1));
    } catch (const std::exception&) {
      throw scenario_error("override value is not a number: " + o);
    }
    apply_variable(base, o.substr(0, eq), v);
  }
  const std::vector<std::string> metrics = args.metrics.empty() ? default_metrics().at(args.variable) : args.metrics;
  const auto grid = linspace(args.start, args.stop, args.steps);

  Table t;
  t.header.push_back(args.variable);
  t.header.insert(t.header.end(), metrics.begin(), metrics.end());

  if (args.variable == "y") {
    for (const auto& m : metrics)
      if (m != "meta_exact" && m != "meta_beta") throw scenario_error("sweep over y supports meta_exact and meta_beta");
    for (double y : grid)
      if (!(y >= 0.0 && y <= 1.0)) throw scenario_error("y values must lie in [0, 1]");
    std::map<std::string, MetaCurve> curves;
    for (const auto& m : metrics) {
      curves.emplace(m, m == "meta_exact" ? meta_exact(base.network, base.caching_probability, grid, conv)
                                          : meta_beta_approx(base.network, base.caching_probability, grid, conv));
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<json> row{grid[i]};
      for (const auto& m : metrics) row.push_back(curves.at(m).ccdf[i]);
      t.rows.push_back(std::move(row));
    }
  } else {
    for (const auto& m : metrics) {
      if (std::find(kPointMetrics.begin(), kPointMetrics.end(), m) == kPointMetrics.end())
        throw scenario_error("unknown metric " + m + " for a sweep over " + args.variable);
    }
    for (double v : grid) {
      Scenario s = base;
      apply_variable(s, args.variable, v);
      std::map<std::string, json> cache;
      std::vector<json> row{args.variable == "cache_size" ? json(static_cast<std::size_t>(v)) : json(v)};
      for (const auto& m : metrics) {
        try {
          row.push_back(point_metric(s, m, conv, cache));
        } catch (const infeasible_error&) {
          row.push_back(nullptr);
        }
      }
      t.rows.push_back(std::move(row));
    }
  }
  emit(common, [&](std::ostream& os) { write_table(os, t, common.format); });
  return kOk;
}

// ---------------------------------------------------------------------------
// optimize

int cmd_optimize(const Common& common, const std::string& problem, const std::string& strategy,
                 std::optional<double> init_beta) {
  const Scenario s = load(common, true);
  const auto conv = convention_of(common);
  const Catalog cat = s.catalog();
  json out;
  std::vector<double> q;
  if (problem == "stp") {
    const auto sol = solve_problem1(cat, s.network, s.cache_size, conv);
    out = to_json(sol, s.network.beta);
    q = sol.q_star;
  } else {
    AlternationOptions opts;
    opts.init_beta = init_beta;
    Problem2Solution sol;
    if (strategy == "proposed") {
      sol = solve_problem2(cat, s.network, s.cache_size, s.backhaul_delay, opts);
    } else {
      sol = iterative_baseline(strategy == "mpc" ? Baseline::mpc : Baseline::uc, cat, s.network, s.cache_size,
                               s.backhaul_delay, opts);
    }
    out = to_json(sol);
    q = sol.q_star;
  }
  out["problem"] = problem;
  if (problem == "delay") out["strategy"] = strategy;
  emit(common, [&](std::ostream& os) {
    if (common.format == "json") {
      os << out.dump(2) << '\n';
      return;
    }
    Table t{{"file", "popularity", "q"}, {}};
    for (std::size_t f = 0; f < q.size(); ++f) t.rows.push_back({f + 1, cat.popularity[f], q[f]});
    write_table(os, t, "csv");
  });
  return kOk;
}

// ---------------------------------------------------------------------------
// validate

struct Check {
  std::string quantity;
  double analytic;
  double monte_carlo;
  double std_error;
  double tolerance;
  bool relative;
  std::string status;
};

std::string judge(double analytic, double mc, double se, double tol, bool relative) {
  if (!std::isfinite(analytic)) return "n/a";
  const double scale = relative ? std::abs(analytic) : 1.0;
  const double err = std::abs(analytic - mc) / scale;
  if (3.0 * se / scale > tol) return "inconclusive";
  return err <= tol ? "pass" : "fail";
}

int cmd_validate(const Common& common, std::optional<std::size_t> realizations, std::optional<unsigned> workers) {
  Scenario s = load(common);
  if (realizations) s.simulation.realizations = *realizations;
  if (workers) s.simulation.workers = *workers;
  s.validate();
  const auto conv = convention_of(common);
  const NetworkParams& p = s.network;
  const double q = s.caching_probability;

  const auto records = sim::sample_records(p, q, s.simulation);
  const auto stats = sim::moments_from_records(records, {1.0, 2.0, -1.0}, s.simulation.delay_cap);
  std::vector<double> y_grid(99);
  for (std::size_t i = 0; i < y_grid.size(); ++i) y_grid[i] = 0.01 * static_cast<double>(i + 1);
  const auto empirical = sim::meta_from_records(records, y_grid);

  std::vector<Check> checks;
  auto add = [&](std::string name, double a, const sim::Estimate& e, double tol, bool rel) {
    checks.push_back({std::move(name), a, e.mean, e.std_error, tol, rel, judge(a, e.mean, e.std_error, tol, rel)});
  };
  add("m1", moment(1.0, p, q, conv), stats.moment(1.0), 0.01, false);
  add("m2", moment(2.0, p, q, conv), stats.moment(2.0), 0.01, false);
  add("m_neg1", moment(-1.0, p, q, conv), stats.inverse_truncated, 0.05, true);

  double sup = 0.0;
  const auto exact = meta_exact(p, q, y_grid, conv);
  for (std::size_t i = 0; i < y_grid.size(); ++i) sup = std::max(sup, std::abs(exact.ccdf[i] - empirical.meta_ccdf[i]));
  Check meta{"meta_sup_norm", 0.0, sup, empirical.dkw_band, 0.02, false, ""};
  meta.status = empirical.dkw_band > 2.0 * meta.tolerance ? "inconclusive" : (sup <= meta.tolerance ? "pass" : "fail");
  checks.push_back(meta);

  Table t{{"quantity", "analytic", "monte_carlo", "std_error", "tolerance", "relative", "status"}, {}};
  bool failed = false;
  bool inconclusive = false;
  for (const auto& c : checks) {
    t.rows.push_back({c.quantity, num(c.analytic), num(c.monte_carlo), num(c.std_error), c.tolerance, c.relative,
                      c.status});
    failed = failed || c.status == "fail";
    inconclusive = inconclusive || c.status == "inconclusive";
  }
  emit(common, [&](std::ostream& os) { write_table(os, t, common.format); });
  std::cerr << "realizations=" << stats.realizations << " misses=" << stats.misses
            << " censored=" << stats.censored << " convention=" << common.convention << '\n';
  if (inconclusive) std::cerr << "warning: some comparisons are inconclusive at this sample size\n";
  if (failed) {
    std::cerr << "validation failed\n";
    return kValidation;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta distribution, local delay and cache optimization for cache-enabled networks with random DTX"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--scenario", common.scenario_path, "Scenario JSON file (defaults are used when omitted)");
  app.add_option("--seed", common.seed, "Master seed for the Monte-Carlo oracle");
  app.add_option("--out", common.out_path, "Write output to this file instead of stdout");
  app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--convention", common.convention, "Moment convention: consistent (with beta prefactor) or paper")
      ->check(CLI::IsMember({"paper", "consistent"}));

  auto* metrics = app.add_subcommand("metrics", "Per-file metrics for the scenario's caching policy");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Evaluate metrics over a grid of one variable");
  sweep->add_option("--var", sweep_args.variable, "Swept variable")
      ->required()
      ->check(CLI::IsMember({"theta_db", "beta", "q", "cache_size", "gamma", "xi", "y"}));
  sweep->add_option("--start", sweep_args.start, "First grid value")->required();
  sweep->add_option("--stop", sweep_args.stop, "Last grid value")->required();
  sweep->add_option("--steps", sweep_args.steps, "Number of grid points (>= 2)")->required();
  sweep->add_option("--metrics", sweep_args.metrics, "Comma-separated metric names")->delimiter(',');
  sweep->add_option("--set", sweep_args.overrides, "Fixed override key=value (theta_db, beta, q, cache_size, gamma, xi)");

  std::string problem = "stp";
  std::string strategy = "proposed";
  std::optional<double> init_beta;
  auto* optimize = app.add_subcommand("optimize", "Solve the mean-STP or system-delay problem");
  optimize->add_option("--problem", problem, "stp or delay")->check(CLI::IsMember({"stp", "delay"}));
  optimize->add_option("--strategy", strategy, "Caching strategy for the delay problem")
      ->check(CLI::IsMember({"proposed", "mpc", "uc"}));
  optimize->add_option("--init-beta", init_beta, "Initial active probability for the alternation");

  std::optional<std::size_t> realizations;
  std::optional<unsigned> workers;
  auto* validate = app.add_subcommand("validate", "Compare analytic results with the Monte-Carlo oracle");
  validate->add_option("--realizations", realizations, "Number of PPP realizations");
  validate->add_option("--workers", workers, "Worker threads (results do not depend on this)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*metrics) return cmd_metrics(common);
    if (*sweep) return cmd_sweep(common, sweep_args);
    if (*optimize) return cmd_optimize(common, problem, strategy, init_beta);
    if (*validate) return cmd_validate(common, realizations, workers);
  } catch (const scenario_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const infeasible_error& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const degenerate_error& e) {
    std::cerr << "degenerate configuration: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::domain_error& e) {
    std::cerr << "degenerate configuration: " << e.what() << '\n';
    return kDegenerate;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDegenerate;
  }
  return kOk;
}
