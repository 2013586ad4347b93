#pragma once

// Cache placement and DTX optimization: mean-STP maximization over the
// caching vector, and alternating (caching, active probability) minimization
// of the average system transmission delay, with iterative baselines.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cachemeta/metrics.hpp"
#include "cachemeta/model.hpp"
#include "cachemeta/numerics.hpp"

namespace cachemeta {

class infeasible_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_cache_size(const Catalog& catalog, std::size_t cache_size) {
  if (catalog.size() == 0) throw std::invalid_argument("catalog is empty");
  if (cache_size < 1) throw std::invalid_argument("cache size must be >= 1");
  if (cache_size > catalog.size()) throw infeasible_error("cache size exceeds the number of files");
  for (std::size_t f = 1; f < catalog.size(); ++f) {
    if (catalog.popularity[f] > catalog.popularity[f - 1])
      throw std::invalid_argument("catalog popularity must be sorted in nonincreasing order");
  }
}

/// Solves sum_f clamp(level_f(x)) = target for a scalar multiplier x > 0 where
/// every level_f is nonincreasing in x. Search is in log x; bracket endpoints
/// are widened until they straddle the target.
template <class Sum>
double solve_multiplier(Sum&& sum, double target, double log_lo, double log_hi) {
  auto g = [&](double lx) { return sum(std::exp(lx)) - target; };
  int guard = 0;
  while (g(log_lo) < 0.0 && guard++ < 200) log_lo -= 5.0;
  guard = 0;
  while (g(log_hi) > 0.0 && guard++ < 200) log_hi += 5.0;
  return std::exp(find_root(g, {log_lo, log_hi, 1e-13, 1000}));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Problem 1: maximize the popularity-weighted mean success probability

struct Problem1Solution {
  std::vector<double> q_star;
  double tau = 0.0;
  double objective = 0.0;
  double kkt_residual = 0.0;
};

/// dM_1/dq_f for file f at caching probability q.
inline double stp_gradient(const StpCoefficients& c, double scale, double p, double q) {
  const double den = c.psi1 * q + c.psi2;
  return scale * p * c.psi2 / (den * den);
}

/// Largest relative KKT violation of (q, tau) for Problem 1, including the
/// capacity constraint.
inline double problem1_kkt_residual(const std::vector<double>& q, double tau, const Catalog& catalog,
                                    const StpCoefficients& c, double scale, std::size_t cache_size) {
  double worst = 0.0;
  double total = 0.0;
  for (std::size_t f = 0; f < q.size(); ++f) {
    const double g = stp_gradient(c, scale, catalog.popularity[f], q[f]);
    double v = 0.0;
    if (q[f] <= 0.0) {
      v = std::max(0.0, g - tau);
    } else if (q[f] >= 1.0) {
      v = std::max(0.0, tau - g);
    } else {
      v = std::abs(g - tau);
    }
    worst = std::max(worst, v / tau);
    total += q[f];
  }
  return std::max(worst, std::abs(total - static_cast<double>(cache_size)));
}

inline Problem1Solution solve_problem1(const Catalog& catalog, const NetworkParams& params, std::size_t cache_size,
                                       MomentConvention conv = MomentConvention::consistent()) {
  detail::check_cache_size(catalog, cache_size);
  params.validate();
  const std::size_t F = catalog.size();
  const auto c = stp_coefficients(params);
  const double scale = conv.include_beta_prefactor ? params.beta : 1.0;
  const auto& p = catalog.popularity;
  Problem1Solution sol;
  sol.q_star.assign(F, 0.0);

  auto finish = [&](double tau) {
    sol.tau = tau;
    CachingPolicy policy{sol.q_star, cache_size};
    sol.objective = mean_stp(params, policy, catalog, conv);
    sol.kkt_residual = problem1_kkt_residual(sol.q_star, tau, catalog, c, scale, cache_size);
    return sol;
  };

  // Cache everything, or a per-file objective that is not concave in q
  // (psi1 <= 0): the most popular files are cached with probability one.
  if (cache_size == F || c.psi1 <= 0.0) {
    for (std::size_t f = 0; f < cache_size; ++f) sol.q_star[f] = 1.0;
    double tau = kInfinity;
    for (std::size_t f = 0; f < cache_size; ++f) tau = std::min(tau, stp_gradient(c, scale, p[f], 1.0));
    return finish(tau);
  }

  auto q_at = [&](double f_p, double tau) {
    const double raw = (std::sqrt(scale * f_p * c.psi2 / tau) - c.psi2) / c.psi1;
    return std::clamp(raw, 0.0, 1.0);
  };
  auto sum_at = [&](double tau) {
    double s = 0.0;
    for (double f_p : p) s += q_at(f_p, tau);
    return s;
  };
  const double tau_lo = stp_gradient(c, scale, p.back(), 1.0);
  const double tau_hi = scale * p.front() / c.psi2;
  double tau = detail::solve_multiplier(sum_at, static_cast<double>(cache_size), std::log(tau_lo) - 1.0,
                                        std::log(tau_hi) + 1.0);

  // Closed-form multiplier for the active set found by bisection.
  for (int pass = 0; pass < 3; ++pass) {
    double ones = 0.0;
    double interior = 0.0;
    double root_sum = 0.0;
    for (double f_p : p) {
      const double q = q_at(f_p, tau);
      if (q >= 1.0) {
        ones += 1.0;
      } else if (q > 0.0) {
        interior += 1.0;
        root_sum += std::sqrt(scale * f_p * c.psi2);
      }
    }
    if (root_sum <= 0.0) break;
    const double inv_sqrt_tau = (c.psi1 * (static_cast<double>(cache_size) - ones) + interior * c.psi2) / root_sum;
    if (!(inv_sqrt_tau > 0.0)) break;
    const double exact = 1.0 / (inv_sqrt_tau * inv_sqrt_tau);
    if (std::abs(sum_at(exact) - static_cast<double>(cache_size)) > std::abs(sum_at(tau) - static_cast<double>(cache_size)))
      break;
    tau = exact;
  }
  for (std::size_t f = 0; f < F; ++f) sol.q_star[f] = q_at(p[f], tau);
  return finish(tau);
}

// ---------------------------------------------------------------------------
// Problem 2: minimize the average system transmission delay

/// Delay for files that no BS caches: nearest-BS local delay plus backhaul.
inline double uncached_delay(const NetworkParams& params, double backhaul_delay) {
  return mean_local_delay(params, 1.0) + backhaul_delay;
}

/// sum_f p_f (M_{-1}(q_f) if q_f > 0 else D_nc); +inf when any cached file
/// sits at or below the critical caching probability.
inline double system_delay(const CachingPolicy& policy, const NetworkParams& params, const Catalog& catalog,
                           double backhaul_delay) {
  if (policy.q.size() != catalog.size()) throw std::invalid_argument("system_delay: policy/catalog size mismatch");
  DelayModel{backhaul_delay}.validate();
  const auto c = delay_coefficients(params);
  const double d_nc = [&] {
    const double den = c.denominator(1.0);
    return den > 0.0 ? 1.0 / (params.beta * den) + backhaul_delay : kInfinity;
  }();
  double total = 0.0;
  for (std::size_t f = 0; f < catalog.size(); ++f) {
    const double p = catalog.popularity[f];
    const double q = policy.q[f];
    double d = 0.0;
    if (q > 0.0) {
      const double den = c.denominator(q);
      d = den > 0.0 ? q / (params.beta * den) : kInfinity;
    } else {
      d = d_nc;
    }
    if (!std::isfinite(d)) return kInfinity;
    total += p * d;
  }
  return total;
}

struct Subproblem1Solution {
  std::vector<double> q;
  double eta = 0.0;    // multiplier of the capacity constraint (< 0)
  double delay = 0.0;  // objective at q
};

/// Largest admissible number of cached files: F_c q_c < C.
inline std::size_t max_cached_files(const NetworkParams& params, std::size_t cache_size, std::size_t file_count) {
  const auto qc = critical_q(params);
  if (!qc) return cache_size;
  if (*qc <= 0.0) return file_count;
  const double bound = std::ceil(static_cast<double>(cache_size) / *qc) - 1.0;
  if (bound >= static_cast<double>(file_count)) return file_count;
  return std::max(cache_size, static_cast<std::size_t>(bound));
}

/// Optimal caching vector when exactly the F_c most popular files are cached
/// and beta is fixed: q_f = min(1, (sqrt(p_f c1 / (mu beta)) + c1) / c3) with
/// mu = -eta chosen so that sum q_f = C.
inline Subproblem1Solution solve_subproblem1(const Catalog& catalog, const NetworkParams& params,
                                             std::size_t cache_size, std::size_t cached_files, double backhaul_delay) {
  detail::check_cache_size(catalog, cache_size);
  params.validate();
  const std::size_t F = catalog.size();
  if (cached_files < cache_size || cached_files > F)
    throw infeasible_error("solve_subproblem1: cached file count must satisfy C <= F_c <= F");
  const auto c = delay_coefficients(params);
  const auto& p = catalog.popularity;
  Subproblem1Solution sol;
  sol.q.assign(F, 0.0);

  const double b = params.beta;
  auto gradient_at_one = [&](double f_p) {
    const double den = c.c3 - c.c1;
    return f_p * c.c1 / (b * den * den);
  };

  if (cached_files == cache_size) {
    for (std::size_t f = 0; f < cache_size; ++f) sol.q[f] = 1.0;
    double mu = kInfinity;
    if (std::isfinite(c.c1) && c.c3 - c.c1 > 0.0) {
      for (std::size_t f = 0; f < cache_size; ++f) mu = std::min(mu, gradient_at_one(p[f]));
    }
    sol.eta = std::isfinite(mu) ? -mu : 0.0;
    sol.delay = system_delay({sol.q, cache_size}, params, catalog, backhaul_delay);
    return sol;
  }

  const auto qc = critical_q(params);
  if (!qc || !std::isfinite(c.c1) || !(c.c3 > 0.0))
    throw infeasible_error("solve_subproblem1: no caching probability below one gives finite delay");
  if (!(static_cast<double>(cached_files) * *qc < static_cast<double>(cache_size)))
    throw infeasible_error("solve_subproblem1: F_c q_c >= C, the capacity cannot be met above q_c");

  auto q_at = [&](double f_p, double mu) {
    return std::min(1.0, (std::sqrt(f_p * c.c1 / (mu * b)) + c.c1) / c.c3);
  };
  auto sum_at = [&](double mu) {
    double s = 0.0;
    for (std::size_t f = 0; f < cached_files; ++f) s += q_at(p[f], mu);
    return s;
  };
  const double mu_one = gradient_at_one(p[cached_files - 1]);
  double mu = detail::solve_multiplier(sum_at, static_cast<double>(cache_size), std::log(mu_one) - 1.0,
                                       std::log(mu_one) + 10.0);

  for (int pass = 0; pass < 3; ++pass) {
    double ones = 0.0;
    double interior = 0.0;
    double root_sum = 0.0;
    for (std::size_t f = 0; f < cached_files; ++f) {
      if (q_at(p[f], mu) >= 1.0) {
        ones += 1.0;
      } else {
        interior += 1.0;
        root_sum += std::sqrt(p[f] * c.c1 / b);
      }
    }
    if (root_sum <= 0.0) break;
    const double inv_sqrt_mu = ((static_cast<double>(cache_size) - ones) * c.c3 - interior * c.c1) / root_sum;
    if (!(inv_sqrt_mu > 0.0)) break;
    const double exact = 1.0 / (inv_sqrt_mu * inv_sqrt_mu);
    if (std::abs(sum_at(exact) - static_cast<double>(cache_size)) > std::abs(sum_at(mu) - static_cast<double>(cache_size)))
      break;
    mu = exact;
  }
  for (std::size_t f = 0; f < cached_files; ++f) sol.q[f] = q_at(p[f], mu);
  sol.eta = -mu;
  sol.delay = system_delay({sol.q, cache_size}, params, catalog, backhaul_delay);
  return sol;
}

struct Problem2Solution {
  std::vector<double> q_star;
  double beta_star = 0.0;
  std::size_t f_c_star = 0;
  double eta = 0.0;
  double objective = kInfinity;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each outer iteration
};

struct AlternationOptions {
  std::optional<double> init_beta;  // default 0.5 * beta_c(q = 1)
  double tolerance = 1e-6;          // slots
  std::size_t max_iterations = 100;
  double beta_margin = 1e-6;        // keeps beta inside (0, beta_c)
};

namespace detail {

inline std::size_t count_cached(const std::vector<double>& q) {
  return static_cast<std::size_t>(std::count_if(q.begin(), q.end(), [](double v) { return v > 0.0; }));
}

/// Upper end of the admissible beta range for a caching vector: delay of the
/// least-cached file (and of uncached files, through q = 1) stays finite.
inline double beta_ceiling(const NetworkParams& params, const std::vector<double>& q) {
  double q_min = 1.0;
  for (double v : q)
    if (v > 0.0) q_min = std::min(q_min, v);
  return std::min(critical_beta(params, q_min), critical_beta(params, 1.0));
}

/// Minimizes the system delay over beta for fixed caching; never returns a
/// beta worse than `current`.
inline double beta_step(const CachingPolicy& policy, const NetworkParams& params, const Catalog& catalog,
                        double backhaul_delay, double current, double margin) {
  const double hi = beta_ceiling(params, policy.q) - margin;
  const double lo = margin;
  if (!(hi > lo)) return current;
  auto objective = [&](double b) { return system_delay(policy, params.with_beta(b), catalog, backhaul_delay); };
  const Minimum m = minimize_1d(objective, {lo, hi, 1e-10, 500});
  const double old_value = objective(current);
  return (m.value < old_value) ? m.argmin : current;
}

inline double initial_beta(const NetworkParams& params, const AlternationOptions& opts) {
  const double b = opts.init_beta.value_or(0.5 * critical_beta(params, 1.0));
  if (!(b > 0.0 && b < 1.0 + 1e-15)) throw std::domain_error("initial active probability must lie in (0, 1]");
  return std::min(b, 1.0);
}

}  // namespace detail

/// Best caching vector over every admissible F_c at fixed beta; ties within
/// 1e-9 slots keep the smallest F_c.
inline std::pair<Subproblem1Solution, std::size_t> caching_step(const Catalog& catalog, const NetworkParams& params,
                                                                std::size_t cache_size, double backhaul_delay) {
  const std::size_t upper = max_cached_files(params, cache_size, catalog.size());
  std::optional<Subproblem1Solution> best;
  std::size_t best_fc = 0;
  for (std::size_t fc = cache_size; fc <= upper; ++fc) {
    Subproblem1Solution s;
    try {
      s = solve_subproblem1(catalog, params, cache_size, fc, backhaul_delay);
    } catch (const infeasible_error&) {
      continue;
    }
    if (!best || s.delay < best->delay - 1e-9) {
      best = std::move(s);
      best_fc = fc;
    }
  }
  if (!best) throw infeasible_error("no admissible number of cached files");
  return {*best, best_fc};
}

/// Alternating minimization: caching step (exhaustive over F_c, KKT inner
/// solve) then a bounded 1-D search over beta, until the objective changes by
/// at most the tolerance.
inline Problem2Solution solve_problem2(const Catalog& catalog, const NetworkParams& params, std::size_t cache_size,
                                       double backhaul_delay, const AlternationOptions& opts = {}) {
  detail::check_cache_size(catalog, cache_size);
  DelayModel{backhaul_delay}.validate();
  Problem2Solution sol;
  double beta = detail::initial_beta(params, opts);
  double previous = kInfinity;
  std::vector<double> q;
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    const NetworkParams at_beta = params.with_beta(beta);
    auto [sub, fc] = caching_step(catalog, at_beta, cache_size, backhaul_delay);
    if (!q.empty() && system_delay({q, cache_size}, at_beta, catalog, backhaul_delay) <= sub.delay) {
      fc = detail::count_cached(q);
    } else {
      q = sub.q;
      sol.eta = sub.eta;
    }
    beta = detail::beta_step({q, cache_size}, params, catalog, backhaul_delay, beta, opts.beta_margin);
    const double value = system_delay({q, cache_size}, params.with_beta(beta), catalog, backhaul_delay);
    sol.trace.push_back(value);
    sol.iterations = it;
    sol.q_star = q;
    sol.beta_star = beta;
    sol.f_c_star = fc;
    sol.objective = value;
    if (std::abs(previous - value) <= opts.tolerance) {
      sol.converged = true;
      break;
    }
    previous = value;
  }
  if (!std::isfinite(sol.objective)) throw infeasible_error("solve_problem2: delay is infinite for every iterate");
  return sol;
}

enum class Baseline { mpc, uc };

inline const char* to_string(Baseline b) { return b == Baseline::mpc ? "mpc" : "uc"; }

/// Fixed-rule caching (MPC, or UC over the largest admissible file set)
/// alternated with the same beta search; returns the best iterate.
inline Problem2Solution iterative_baseline(Baseline strategy, const Catalog& catalog, const NetworkParams& params,
                                           std::size_t cache_size, double backhaul_delay,
                                           const AlternationOptions& opts = {}) {
  detail::check_cache_size(catalog, cache_size);
  DelayModel{backhaul_delay}.validate();
  Problem2Solution best;
  double beta = detail::initial_beta(params, opts);
  double previous = kInfinity;
  for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
    const NetworkParams at_beta = params.with_beta(beta);
    std::size_t n = cache_size;
    if (strategy == Baseline::uc) n = max_cached_files(at_beta, cache_size, catalog.size());
    const CachingPolicy policy = uc_policy(catalog, cache_size, n);
    beta = detail::beta_step(policy, params, catalog, backhaul_delay, beta, opts.beta_margin);
    const double value = system_delay(policy, params.with_beta(beta), catalog, backhaul_delay);
    best.trace.push_back(value);
    best.iterations = it;
    if (value < best.objective) {
      best.objective = value;
      best.q_star = policy.q;
      best.beta_star = beta;
      best.f_c_star = n;
    }
    if (std::abs(previous - value) <= opts.tolerance) {
      best.converged = true;
      break;
    }
    previous = value;
  }
  if (!std::isfinite(best.objective)) throw infeasible_error("iterative_baseline: delay is infinite for every iterate");
  return best;
}

}  // namespace cachemeta
