// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cachemeta/metrics.hpp"
#include "cachemeta/optim.hpp"
#include "cachemeta/sim.hpp"
#include "oracles.hpp"

using namespace cachemeta;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream note;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note << " [failed: " << what << "]";
    }
  }
};

NetworkParams params(double alpha, double beta, double theta) {
  NetworkParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.theta = theta;
  return p;
}

// --------------------------------------------------------------------------

void series_equivalence(Outcome& out) {
  double worst = 0.0;
  for (double theta : {0.1, 1.0, 10.0})
    for (double beta : {0.2, 0.5, 0.9})
      for (double q : {0.2, 0.5, 1.0})
        for (double alpha : {3.0, 4.0, 5.0})
          for (double k : {1.0, 2.0}) {
            const auto p = params(alpha, beta, theta);
            const double quad = moment(k, p, q);
            const double series = moment_series(k, p, q);
            worst = std::max(worst, std::abs(quad - series) / std::abs(series));
          }
  out.note << "max rel err " << worst;
  out.require(worst <= 1e-8, "rel err > 1e-8");
}

void special_functions(Outcome& out) {
  double worst_series = 0.0;
  double worst_pfaff = 0.0;
  for (double d : {2.0 / 3.0, 0.5, 0.4}) {
    const double sets[][3] = {{1.0, 1.0 - d, 2.0 - d}, {2.0, 2.0 - d, 3.0 - d}};
    for (const auto& abc : sets) {
      for (int i = 0; i <= 90; ++i) {
        const double z = -0.01 * i;
        const double ref = oracle::hyp2f1_series(abc[0], abc[1], abc[2], z);
        worst_series = std::max(worst_series, std::abs(hyp2f1_integral(abc[0], abc[1], abc[2], z) / ref - 1.0));
      }
      for (int i = 0; i <= 100; ++i) {
        const double z = -0.5 * i;
        const double ref = oracle::hyp2f1_pfaff(abc[0], abc[1], abc[2], z);
        worst_pfaff = std::max(worst_pfaff, std::abs(hyp2f1_integral(abc[0], abc[1], abc[2], z) / ref - 1.0));
      }
    }
  }
  const double beta_err = std::abs(beta_fn(0.5, 0.5) - std::numbers::pi);
  out.note << "2F1 vs series " << worst_series << ", vs Pfaff " << worst_pfaff << ", |B(1/2,1/2)-pi| " << beta_err;
  out.require(worst_series <= 1e-8, "2F1 vs series");
  out.require(worst_pfaff <= 1e-8, "2F1 vs Pfaff");
  out.require(beta_err <= 1e-12, "B(1/2,1/2)");
}

const NetworkParams kMeanScenario = params(3.0, 0.8, 1.0);
constexpr double kMeanQ = 0.5;

sim::SimConfig mean_config() {
  sim::SimConfig cfg;
  cfg.region_radius = 2000.0;
  cfg.realizations = 10000;
  return cfg;
}

void first_moment_mc(Outcome& out) {
  const auto st = sim::empirical_moments(kMeanScenario, kMeanQ, mean_config(), {1.0});
  const auto& mc = st.moment(1.0);
  const double on = moment(1.0, kMeanScenario, kMeanQ, MomentConvention::consistent());
  const double off = moment(1.0, kMeanScenario, kMeanQ, MomentConvention::paper());
  const double err_on = std::abs(on - mc.mean);
  const double err_off = std::abs(off - mc.mean);
  out.note << "MC " << mc.mean << " (SE " << mc.std_error << "), ON " << on << " err " << err_on << ", OFF " << off
           << " err " << err_off << " = " << err_off / mc.std_error << " SE";
  out.require(err_on <= 0.01, "ON off by more than 0.01");
  out.require(err_off > 0.01 && err_off >= 3.0 * mc.std_error, "OFF not rejected by >= 3 SE");
}

void meta_distribution(Outcome& out) {
  std::vector<double> y(99);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.01 * static_cast<double>(i + 1);
  const auto empirical = sim::empirical_meta(kMeanScenario, kMeanQ, mean_config(), y);
  const auto exact = meta_exact(kMeanScenario, kMeanQ, y);
  const auto approx = meta_beta_approx(kMeanScenario, kMeanQ, y);
  double sup_mc = 0.0;
  double sup_beta = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sup_mc = std::max(sup_mc, std::abs(exact.ccdf[i] - empirical.meta_ccdf[i]));
    sup_beta = std::max(sup_beta, std::abs(exact.ccdf[i] - approx.ccdf[i]));
  }
  out.note << "sup|exact-MC| " << sup_mc << " (DKW 95% " << empirical.dkw_band << "), sup|beta-exact| " << sup_beta;
  out.require(sup_mc <= 0.02, "exact vs MC");
  out.require(sup_beta <= 0.03, "beta vs exact");
}

void local_delay(Outcome& out) {
  const auto p = params(3.0, 0.3, 1.0);
  const double q = 0.8;
  sim::SimConfig cfg;
  cfg.realizations = 200000;
  const auto st = sim::empirical_moments(p, q, cfg, {-1.0});
  const double analytic = mean_local_delay(p, q);
  const double rel = std::abs(st.inverse_truncated.mean - analytic) / analytic;
  const double anchor = mean_local_delay(params(3.0, 0.3, 1e-6), 1.0) * 0.3;
  out.note << "analytic " << analytic << ", MC truncated " << st.inverse_truncated.mean << " (SE "
           << st.inverse_truncated.std_error << ", N " << cfg.realizations << "), rel err " << rel
           << ", censored " << st.censored_fraction() << ", anchor beta*D " << anchor;
  out.require(rel <= 0.05, "delay off by more than 5%");
  out.require(st.censored_fraction() < 1e-3, "censoring >= 0.1%");
  out.require(std::abs(anchor - 1.0) <= 1e-6, "1/beta anchor");
}

void phase_transitions(Outcome& out) {
  const auto p = params(3.0, 0.5, 1.0);
  const double q = 0.8;
  auto finite = [](double d) { return std::isfinite(d); };

  const double tc = critical_theta(p, q);
  const bool theta_ok = finite(mean_local_delay(p.with_theta(tc * (1.0 - 1e-3)), q)) &&
                        !finite(mean_local_delay(p.with_theta(tc * (1.0 + 1e-3)), q));
  const auto qc = critical_q(p);
  const bool q_ok = qc && finite(mean_local_delay(p, std::min(1.0, *qc * (1.0 + 1e-3)))) &&
                    !finite(mean_local_delay(p, *qc * (1.0 - 1e-3)));
  const double bc = critical_beta(p, q);
  const bool beta_ok = finite(mean_local_delay(p.with_beta(bc * (1.0 - 1e-3)), q)) &&
                       !finite(mean_local_delay(p.with_beta(bc * (1.0 + 1e-3)), q));
  std::vector<double> ratios;
  bool increasing = true;
  for (double b : {0.2, 0.4, 0.6, 0.8}) {
    ratios.push_back(critical_q_ratio(params(3.0, b, 1.0)));
    if (ratios.size() > 1) increasing = increasing && ratios.back() > ratios[ratios.size() - 2];
  }
  out.note << "theta_c " << tc << ", q_c " << (qc ? *qc : kInfinity) << ", beta_c " << bc << ", q_c(beta) =";
  for (double r : ratios) out.note << ' ' << r;
  out.require(theta_ok, "theta_c transition");
  out.require(q_ok, "q_c transition");
  out.require(beta_ok, "beta_c transition");
  out.require(increasing, "q_c not increasing in beta");
}

void problem1(Outcome& out) {
  const auto cat = make_catalog(3, 1.0);
  const auto p = params(4.0, 1.0, 1.0);
  const auto sol = solve_problem1(cat, p, 1);
  double grid = 0.0;
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; i + j <= 100; ++j)
      grid = std::max(grid, mean_stp(p, CachingPolicy{{i / 100.0, j / 100.0, (100 - i - j) / 100.0}, 1}, cat));
  const auto uniform = solve_problem1(make_catalog(30, 0.0), params(3.0, 0.5, 1.0), 10);
  double uniform_err = 0.0;
  for (double q : uniform.q_star) uniform_err = std::max(uniform_err, std::abs(q - 10.0 / 30.0));
  out.note << "KKT " << sol.kkt_residual << ", objective " << sol.objective << " vs grid " << grid
           << ", uniform max|q-C/F| " << uniform_err;
  out.require(sol.kkt_residual <= 1e-7, "KKT residual");
  out.require(sol.objective >= grid - 1e-5, "objective below grid");
  out.require(uniform_err <= 1e-9, "uniform case");
}

void problem2(Outcome& out) {
  const auto cat = make_catalog(3, 1.0);
  const auto p = params(3.0, 0.5, 1.0);
  const auto sol = solve_problem2(cat, p, 1, 20.0);
  double grid = kInfinity;
  for (int i = 0; i <= 50; ++i)
    for (int j = 0; i + j <= 50; ++j) {
      const CachingPolicy pol{{i / 50.0, j / 50.0, (50 - i - j) / 50.0}, 1};
      for (int b = 1; b < 100; ++b) grid = std::min(grid, system_delay(pol, p.with_beta(b / 100.0), cat, 20.0));
    }
  bool monotone = true;
  for (std::size_t i = 1; i < sol.trace.size(); ++i) monotone = monotone && sol.trace[i] <= sol.trace[i - 1];

  const auto big = make_catalog(30, 0.8);
  const auto zero = solve_problem2(big, p, 10, 0.0);
  const auto mpc = mpc_policy(big, 10);
  out.note << "objective " << sol.objective << " vs grid " << grid << ", " << sol.trace.size()
           << " iterations, xi=0: F_c " << zero.f_c_star;
  out.require(sol.objective <= grid + 1e-3, "objective above grid");
  out.require(monotone, "trace increases");
  out.require(zero.f_c_star == 10 && zero.q_star == mpc.q, "xi=0 is not MPC");
}

void baselines(Outcome& out) {
  const auto cat = make_catalog(30, 0.8);
  const auto p = params(3.0, 0.5, 1.0);
  const std::vector<std::size_t> sizes{10, 15, 20, 30};
  const std::vector<double> xis{0.0, 10.0, 20.0, 30.0, 40.0, 50.0};
  bool dominance = true;
  std::vector<std::vector<double>> d(xis.size());
  for (std::size_t x = 0; x < xis.size(); ++x) {
    for (std::size_t c : sizes) {
      const auto sol = solve_problem2(cat, p, c, xis[x]);
      d[x].push_back(sol.objective);
      if (c == 30) continue;
      const auto m = iterative_baseline(Baseline::mpc, cat, p, c, xis[x]);
      const auto u = iterative_baseline(Baseline::uc, cat, p, c, xis[x]);
      dominance = dominance && sol.objective <= std::min(m.objective, u.objective) + 1e-9;
    }
  }
  const double uc = iterative_baseline(Baseline::uc, cat, p, 20, 50.0).objective;
  const double mpc = iterative_baseline(Baseline::mpc, cat, p, 20, 50.0).objective;

  std::vector<double> flat_xi;
  for (std::size_t x = 0; x < xis.size(); ++x) {
    bool strict = true;
    for (std::size_t i = 1; i < sizes.size(); ++i) strict = strict && d[x][i] < d[x][i - 1];
    if (!strict) flat_xi.push_back(xis[x]);
  }
  double spread = 0.0;
  for (std::size_t x = 1; x < xis.size(); ++x) spread = std::max(spread, std::abs(d[x].back() - d[0].back()));

  out.note << "UC " << uc << " vs MPC " << mpc << " at xi=50 C=20; D at C=30 spread " << spread;
  out.note << "; D(C=10..30) at xi=0:";
  for (double v : d[0]) out.note << ' ' << v;
  out.require(dominance, "proposed above a baseline");
  out.require(uc < mpc, "UC not below MPC at xi=50, C=20");
  if (!flat_xi.empty()) {
    std::ostringstream w;
    w << "D not strictly decreasing in C at xi =";
    for (double x : flat_xi) w << ' ' << x;
    out.require(false, w.str());
  }
  out.require(spread <= 1e-9, "curves differ at C=F");
}

void shapes(Outcome& out) {
  auto count_direction_changes = [](const std::vector<double>& v) {
    int changes = 0;
    int dir = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const int s = (v[i] > v[i - 1]) - (v[i] < v[i - 1]);
      if (s != 0 && dir != 0 && s != dir) ++changes;
      if (s != 0) dir = s;
    }
    return changes;
  };

  bool unimodal = true;
  for (double beta : {0.3, 0.8, 1.0}) {
    std::vector<double> var;
    for (int i = 0; i < 200; ++i) {
      const double theta_db = -30.0 + 60.0 * i / 199.0;
      var.push_back(stp_variance(params(3.0, beta, db_to_linear(theta_db)), 1.0));
    }
    const auto peak = std::max_element(var.begin(), var.end());
    const bool interior = peak != var.begin() && peak != var.end() - 1;
    unimodal = unimodal && interior && count_direction_changes(var) == 1;
  }

  const auto dp = params(3.0, 0.3, 1.0);
  bool nonincreasing = true;
  double prev = kInfinity;
  for (int i = 1; i <= 100; ++i) {
    const double d = mean_local_delay(dp, i / 100.0);
    nonincreasing = nonincreasing && d <= prev;
    prev = d;
  }

  const double q = 0.8;
  const double bc = critical_beta(params(3.0, 0.5, 1.0), q);
  std::vector<double> d;
  for (int i = 1; i < 200; ++i) d.push_back(mean_local_delay(params(3.0, bc * i / 200.0, 1.0), q));
  int minima = 0;
  for (std::size_t i = 1; i + 1 < d.size(); ++i) minima += (d[i] < d[i - 1] && d[i] < d[i + 1]);
  const auto best = std::min_element(d.begin(), d.end());
  out.note << "variance unimodal " << (unimodal ? "yes" : "no") << ", M_-1(q) nonincreasing "
           << (nonincreasing ? "yes" : "no") << ", local minima of M_-1(beta) " << minima << " at beta "
           << bc * static_cast<double>(best - d.begin() + 1) / 200.0 << " (beta_c " << bc << ")";
  out.require(unimodal, "variance not unimodal");
  out.require(nonincreasing, "M_-1 increases in q");
  out.require(minima == 1 && std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); }),
              "M_-1(beta) minima");
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<void(Outcome&)> body;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "series/quadrature equivalence", 10.0, series_equivalence},
      {2, "special-function oracles", 5.0, special_functions},
      {3, "MC vs analytic M1", 60.0, first_moment_mc},
      {4, "meta distribution", 120.0, meta_distribution},
      {5, "mean local delay", 60.0, local_delay},
      {6, "phase transitions", 10.0, phase_transitions},
      {7, "problem 1 optimality", 30.0, problem1},
      {8, "problem 2 optimality", 120.0, problem2},
      {9, "baseline ordering", 300.0, baselines},
      {10, "shape properties", 30.0, shapes},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.body(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.require(secs < c.limit_s, "runtime limit");
    if (!out.pass) ++failures;
    std::printf("criterion %2d %s: %s (%.1f s, limit %.0f s) %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL", secs,
                c.limit_s, out.note.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
