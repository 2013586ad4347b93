#pragma once

// Moments of the conditional success probability, the meta distribution,
// mean local delay, jitter and the critical values where delay diverges.
//
// Notation used throughout: the typical user at the origin requests a file
// cached by each BS independently with probability q. The serving BS is the
// nearest caching BS; every other BS interferes, active w.p. beta per slot.
// With u = (x/r)^2 and g(u) = 1 - beta + beta / (1 + theta u^{-alpha/2}) the
// k-th moment is
//
//     M_k = beta^k q / (q + A(k)),
//     A(k) = int_1^inf (1 - g^k) du + (1 - q) int_0^1 (1 - g^k) du.
//
// The beta^k factor is governed by MomentConvention.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cachemeta/model.hpp"
#include "cachemeta/numerics.hpp"

namespace cachemeta {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Whether M_k carries the beta^k activity factor of the serving BS.
/// The consistent convention (default) matches the conditional success
/// probability beta * P[SIR > theta | Phi]; the paper convention drops it.
struct MomentConvention {
  bool include_beta_prefactor = true;

  static MomentConvention consistent() { return {true}; }
  static MomentConvention paper() { return {false}; }
};

namespace detail {

inline std::complex<double> expm1(std::complex<double> z) {
  const double x = z.real();
  const double y = z.imag();
  const double s = std::sin(0.5 * y);
  return {std::expm1(x) * std::cos(y) - 2.0 * s * s, std::exp(x) * std::sin(y)};
}
inline double expm1(double x) { return std::expm1(x); }

// 1 - g^k given r = s / (1 + s), s = theta u^{-alpha/2}.
template <class K>
K one_minus_gk(K k, double beta, double r) {
  return -expm1(k * std::log1p(-beta * r));
}

inline QuadratureSpec kernel_quadrature() { return {1e-13, 1e-11, 20000}; }

}  // namespace detail

/// The two pieces of A(k): far = int_1^inf (1 - g^k) du, near = int_0^1.
template <class K>
struct KernelIntegrals {
  K near{};
  K far{};

  K excess(double q) const { return far + (1.0 - q) * near; }
};

/// Evaluates the near and far kernel integrals for real or complex order k.
template <class K>
KernelIntegrals<K> kernel_integrals(K k, const NetworkParams& params,
                                    const QuadratureSpec& spec = detail::kernel_quadrature(), bool with_near = true) {
  params.validate();
  const double beta = params.beta;
  const double theta = params.theta;
  const double half_alpha = 0.5 * params.alpha;

  // u = e^{-v} on the near piece; ln g = ln(theta (1 - beta) + u^{alpha/2}) - ln(theta + u^{alpha/2})
  // stays accurate as u -> 0 even at beta = 1, where g itself vanishes.
  auto near_integrand = [&](double v) -> K {
    const double ua = std::exp(-half_alpha * v);
    const double log_g = (beta >= 1.0 ? -half_alpha * v : std::log(theta * (1.0 - beta) + ua)) - std::log(theta + ua);
    return -detail::expm1(k * log_g) * std::exp(-v);
  };

  // u = v^{-p} with p = 2/(alpha-2) turns the u^{-alpha/2} tail into a
  // bounded integrand on (0, 1].
  const double p = 2.0 / (params.alpha - 2.0);
  const double m = p * half_alpha;  // u^{alpha/2} = v^{-m}, and m = p + 1
  auto far_integrand = [&](double v) -> K {
    const double vm = std::pow(v, m);
    const double r = theta * vm / (1.0 + theta * vm);
    const double jac = p * theta / (1.0 + theta * vm);  // r * p * v^{-p-1}
    if (r == 0.0) return k * beta * jac;
    return detail::one_minus_gk(k, beta, r) * (jac / r);
  };

  KernelIntegrals<K> out;
  if (with_near) out.near = integrate(near_integrand, 0.0, kInfinity, spec);
  out.far = integrate(far_integrand, 0.0, 1.0, spec);
  return out;
}

inline void check_caching_probability(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw std::domain_error("caching probability must lie in (0, 1]");
}

/// Dimensionless denominator excess A(k) so that M_k = beta^k q / (q + A(k)).
template <class K>
K moment_kernel(K k, const NetworkParams& params, double q) {
  check_caching_probability(q);
  return kernel_integrals(k, params, detail::kernel_quadrature(), q < 1.0).excess(q);
}

namespace detail {

// With beta = 1 the non-caching integrand diverges at u -> 0 for Re k < 0.
inline bool negative_order_diverges(double k_real, const NetworkParams& params, double q) {
  return k_real < 0.0 && params.beta >= 1.0 && q < 1.0;
}

}  // namespace detail

/// k-th moment of the conditional success probability for real k.
/// Returns +inf when a negative-order moment diverges.
inline double moment(double k, const NetworkParams& params, double q,
                     MomentConvention conv = MomentConvention::consistent()) {
  check_caching_probability(q);
  if (k == 0.0) return 1.0;
  if (detail::negative_order_diverges(k, params, q)) return kInfinity;
  const double a = moment_kernel(k, params, q);
  const double denom = q + a;
  if (k < 0.0 && !(denom > 0.0)) return kInfinity;
  const double pref = conv.include_beta_prefactor ? std::pow(params.beta, k) : 1.0;
  return pref * q / denom;
}

/// Complex-order moment E[P^k], used by the Gil-Pelaez inversion.
inline std::complex<double> moment(std::complex<double> k, const NetworkParams& params, double q,
                                   MomentConvention conv = MomentConvention::consistent()) {
  check_caching_probability(q);
  if (k == 0.0) return 1.0;
  if (detail::negative_order_diverges(k.real(), params, q)) return {kInfinity, 0.0};
  const std::complex<double> a = moment_kernel(k, params, q);
  const std::complex<double> denom = q + a;
  if (k.imag() == 0.0 && k.real() < 0.0 && !(denom.real() > 0.0)) return {kInfinity, 0.0};
  const std::complex<double> pref =
      conv.include_beta_prefactor ? std::exp(k * std::log(params.beta)) : std::complex<double>(1.0);
  return pref * q / denom;
}

/// Moment from the binomial series over n of
///   binom(k, n) (-1)^{n+1} [ d (1-q) beta^n theta^d B(d, n-d)
///                          + d q (beta theta)^n / (n-d) 2F1(n, n-d; n-d+1; -theta) ],
/// d = 2/alpha. The series terminates for positive integer k; otherwise it is
/// truncated once a term drops below 1e-14 of the partial sum.
inline double moment_series(double k, const NetworkParams& params, double q,
                            MomentConvention conv = MomentConvention::consistent(), int max_terms = 100000) {
  params.validate();
  check_caching_probability(q);
  if (k == 0.0) return 1.0;
  if (detail::negative_order_diverges(k, params, q)) return kInfinity;
  const double d = params.delta();
  const double beta = params.beta;
  const double theta = params.theta;
  const double theta_d = std::pow(theta, d);
  const bool terminates = k > 0.0 && k == std::floor(k);

  double sum = q;
  double binom = 1.0;  // binom(k, n)
  double beta_n = 1.0;
  double theta_n = 1.0;
  for (int n = 1; n <= max_terms; ++n) {
    binom *= (k - n + 1) / n;
    if (binom == 0.0) break;
    beta_n *= beta;
    theta_n *= theta;
    const double nd = n - d;
    const double non_caching = (q < 1.0) ? d * (1.0 - q) * beta_n * theta_d * beta_fn(d, nd) : 0.0;
    const double caching = d * q * beta_n * theta_n / nd * hyp2f1_integral(n, nd, nd + 1.0, -theta);
    const double sign = (n % 2 == 1) ? 1.0 : -1.0;
    const double term = binom * sign * (non_caching + caching);
    sum += term;
    if (k < 0.0 && !(sum > 0.0)) return kInfinity;
    if (terminates && n >= k) break;
    if (!terminates && std::abs(term) < 1e-14 * std::abs(sum)) break;
    if (n == max_terms) throw convergence_error("moment_series: series did not converge");
  }
  const double pref = conv.include_beta_prefactor ? std::pow(beta, k) : 1.0;
  return pref * q / sum;
}

/// Variance of the conditional success probability, M_2 - M_1^2 (clamped at 0).
inline double stp_variance(const NetworkParams& params, double q,
                           MomentConvention conv = MomentConvention::consistent()) {
  const double m1 = moment(1.0, params, q, conv);
  const double m2 = moment(2.0, params, q, conv);
  return std::max(0.0, m2 - m1 * m1);
}

/// Coefficients of the mean success probability M_1 = b q / (psi1 q + psi2),
/// b being beta or 1 depending on the convention.
struct StpCoefficients {
  double psi1;
  double psi2;
};

inline StpCoefficients stp_coefficients(const NetworkParams& params) {
  params.validate();
  const double d = params.delta();
  const double b = params.beta;
  const double th = params.theta;
  const double psi2 = d * b * std::pow(th, d) * beta_fn(d, 1.0 - d);
  const double caching = d * b * th / (1.0 - d) * hyp2f1_integral(1.0, 1.0 - d, 2.0 - d, -th);
  return {1.0 - psi2 + caching, psi2};
}

/// Closed-form first moment.
inline double mean_stp_file(const NetworkParams& params, double q,
                            MomentConvention conv = MomentConvention::consistent()) {
  if (q == 0.0) return 0.0;
  check_caching_probability(q);
  const auto c = stp_coefficients(params);
  const double pref = conv.include_beta_prefactor ? params.beta : 1.0;
  return pref * q / (c.psi1 * q + c.psi2);
}

/// Popularity-weighted mean success probability; uncached files contribute 0.
inline double mean_stp(const NetworkParams& params, const CachingPolicy& policy, const Catalog& catalog,
                       MomentConvention conv = MomentConvention::consistent()) {
  if (policy.q.size() != catalog.size()) throw std::invalid_argument("mean_stp: policy/catalog size mismatch");
  const auto c = stp_coefficients(params);
  const double pref = conv.include_beta_prefactor ? params.beta : 1.0;
  double total = 0.0;
  for (std::size_t f = 0; f < policy.q.size(); ++f) {
    const double q = policy.q[f];
    if (q > 0.0) total += catalog.popularity[f] * pref * q / (c.psi1 * q + c.psi2);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Meta distribution

enum class MetaMethod { exact_gil_pelaez, beta_approx, monte_carlo };

struct MetaCurve {
  std::vector<double> y_grid;
  std::vector<double> ccdf;
  MetaMethod method = MetaMethod::exact_gil_pelaez;
};

struct GilPelaezOptions {
  double tol = 1e-7;       // target absolute accuracy of the inversion integral
  int min_panels = 8;
  int max_panels = 400;
  double endpoint_gap = 1e-6;  // y this close to 0 or the upper support edge returns the limit
};

namespace detail {

// Wynn epsilon extrapolation of a sequence of partial sums, kept as the
// latest antidiagonal e_k^{(n-k)} of the epsilon table.
class WynnEpsilon {
 public:
  double push(double s) {
    std::vector<double> next(diag_.size() + 1);
    next[0] = s;
    for (std::size_t k = 0; k < diag_.size(); ++k) {
      const double diff = next[k] - diag_[k];
      const double before = (k == 0) ? 0.0 : diag_[k - 1];
      next[k + 1] = (diff == 0.0 || !std::isfinite(diff)) ? kInfinity : before + 1.0 / diff;
    }
    diag_ = std::move(next);
    // Even columns hold the accelerated estimates; take the deepest finite one.
    for (std::size_t k = diag_.size(); k-- > 0;) {
      if (k % 2 == 0 && std::isfinite(diag_[k])) return diag_[k];
    }
    return s;
  }

 private:
  std::vector<double> diag_;
};

}  // namespace detail

/// Exact meta distribution P[P_s > y] by Gil-Pelaez inversion of the
/// imaginary-order moments,
///   1/2 + (1/pi) int_0^inf Im(e^{-jt ln y} M_{jt}) / t dt.
/// The integral is split at half periods of e^{jt ln(b/y)} (b = beta or 1);
/// the alternating panel sums are extrapolated with Wynn's epsilon method.
inline MetaCurve meta_exact(const NetworkParams& params, double q, const std::vector<double>& y_grid,
                            MomentConvention conv = MomentConvention::consistent(),
                            const GilPelaezOptions& opts = {}) {
  params.validate();
  check_caching_probability(q);
  const double top = conv.include_beta_prefactor ? params.beta : 1.0;
  const double log_top = std::log(top);

  // m(t) = q / (q + A(jt)) is y-independent; the beta^{jt} factor is folded
  // into the oscillation frequency.
  auto reduced = [&](double t) -> std::complex<double> {
    const std::complex<double> k(0.0, t);
    return q / (q + moment_kernel(k, params, q));
  };
  const QuadratureSpec panel_spec{opts.tol * 1e-2, 1e-9, 2000};

  MetaCurve curve{y_grid, std::vector<double>(y_grid.size()), MetaMethod::exact_gil_pelaez};
  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const double y = y_grid[i];
    if (y <= opts.endpoint_gap) {
      curve.ccdf[i] = 1.0;
      continue;
    }
    const double omega = log_top - std::log(y);
    if (omega <= opts.endpoint_gap) {
      curve.ccdf[i] = 0.0;
      continue;
    }
    auto integrand = [&](double t) {
      if (t == 0.0) return 0.0;
      const std::complex<double> e(std::cos(omega * t), std::sin(omega * t));
      return (e * reduced(t)).imag() / t;
    };
    const double width = std::numbers::pi / omega;
    detail::WynnEpsilon wynn;
    double partial = 0.0;
    double estimate = 0.0;
    double previous = kInfinity;
    int stable = 0;
    bool converged = false;
    for (int n = 0; n < opts.max_panels; ++n) {
      partial += integrate(integrand, n * width, (n + 1) * width, panel_spec);
      estimate = wynn.push(partial);
      if (n + 1 >= opts.min_panels) {
        stable = (std::abs(estimate - previous) < opts.tol) ? stable + 1 : 0;
        if (stable >= 2) {
          converged = true;
          break;
        }
      }
      previous = estimate;
    }
    if (!converged) throw convergence_error("meta_exact: Gil-Pelaez integral did not converge");
    curve.ccdf[i] = std::clamp(0.5 + estimate / std::numbers::pi, 0.0, 1.0);
  }
  return curve;
}

/// Beta-distribution approximation matched to M_1 and M_2:
///   F(y) ~ 1 - I_y(M_1 chi / (1 - M_1), chi),
///   chi = (M_1 - M_2)(1 - M_1) / (M_2 - M_1^2).
/// A zero-variance input yields a step at M_1.
inline MetaCurve meta_beta_from_moments(double m1, double m2, const std::vector<double>& y_grid) {
  MetaCurve curve{y_grid, std::vector<double>(y_grid.size()), MetaMethod::beta_approx};
  const double var = m2 - m1 * m1;
  if (var <= 1e-14 || m1 <= 0.0 || m1 >= 1.0) {
    for (std::size_t i = 0; i < y_grid.size(); ++i) curve.ccdf[i] = (y_grid[i] < m1) ? 1.0 : 0.0;
    return curve;
  }
  const double chi = (m1 - m2) * (1.0 - m1) / var;
  const double a = m1 * chi / (1.0 - m1);
  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const double y = std::clamp(y_grid[i], 0.0, 1.0);
    curve.ccdf[i] = 1.0 - reg_inc_beta(y, a, chi);
  }
  return curve;
}

/// Beta approximation of the meta distribution. With the beta prefactor the
/// success probability lives on [0, beta], so the beta law is fitted to
/// P / beta and evaluated at y / beta.
inline MetaCurve meta_beta_approx(const NetworkParams& params, double q, const std::vector<double>& y_grid,
                                  MomentConvention conv = MomentConvention::consistent()) {
  const auto reduced = MomentConvention::paper();
  const double m1 = moment(1.0, params, q, reduced);
  const double m2 = moment(2.0, params, q, reduced);
  if (!conv.include_beta_prefactor) return meta_beta_from_moments(m1, m2, y_grid);
  std::vector<double> scaled(y_grid.size());
  for (std::size_t i = 0; i < y_grid.size(); ++i) scaled[i] = std::min(1.0, y_grid[i] / params.beta);
  auto curve = meta_beta_from_moments(m1, m2, scaled);
  curve.y_grid = y_grid;
  return curve;
}

// ---------------------------------------------------------------------------
// Local delay

/// Constants of the closed-form mean local delay:
///   c1 = d (1-beta)^{d-1} beta theta^d B(d, 1-d)
///   c2 = d beta theta / (1-d) 2F1(1, 1-d; 2-d; -(1-beta) theta)
///   c3 = 1 + c1 - c2
/// c1 is +inf at beta = 1 (finite delay then requires q = 1).
struct DelayCoefficients {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 1.0;

  /// Sign-carrying denominator q c3 - c1, written so that q = 1 avoids c1.
  double denominator(double q) const {
    if (q >= 1.0) return 1.0 - c2;
    return q * (1.0 - c2) - (1.0 - q) * c1;
  }
};

inline DelayCoefficients delay_coefficients(const NetworkParams& params) {
  params.validate();
  const double d = params.delta();
  const double b = params.beta;
  const double th = params.theta;
  DelayCoefficients c;
  c.c1 = (b >= 1.0) ? kInfinity : d * std::pow(1.0 - b, d - 1.0) * b * std::pow(th, d) * beta_fn(d, 1.0 - d);
  c.c2 = d * b * th / (1.0 - d) * hyp2f1_integral(1.0, 1.0 - d, 2.0 - d, -(1.0 - b) * th);
  c.c3 = 1.0 + c.c1 - c.c2;
  return c;
}

/// Mean local delay M_{-1} = q / (beta (c3 q - c1)) in slots; +inf past the
/// phase transition.
inline double mean_local_delay(const NetworkParams& params, double q) {
  check_caching_probability(q);
  const auto c = delay_coefficients(params);
  const double denom = c.denominator(q);
  if (!(denom > 0.0)) return kInfinity;
  return q / (params.beta * denom);
}

/// Popularity-mixed jitter  sum p_f M_{-2,f} - (sum p_f M_{-1,f})^2.
/// Files with q_f = 0 have unbounded local delay, so they make the result +inf.
inline double network_jitter(const NetworkParams& params, const CachingPolicy& policy, const Catalog& catalog,
                             MomentConvention conv = MomentConvention::consistent()) {
  if (policy.q.size() != catalog.size())
    throw std::invalid_argument("network_jitter: policy/catalog size mismatch");
  const auto c = delay_coefficients(params);
  const double pref1 = conv.include_beta_prefactor ? 1.0 / params.beta : 1.0;
  double second = 0.0;
  double first = 0.0;
  for (std::size_t f = 0; f < catalog.size(); ++f) {
    const double p = catalog.popularity[f];
    const double q = policy.q[f];
    if (p == 0.0) continue;
    if (q <= 0.0) return kInfinity;
    const double denom = c.denominator(q);
    if (!(denom > 0.0)) return kInfinity;
    const double m_neg2 = moment(-2.0, params, q, conv);
    if (!std::isfinite(m_neg2)) return kInfinity;
    first += p * pref1 * q / denom;
    second += p * m_neg2;
  }
  return second - first * first;
}

// ---------------------------------------------------------------------------
// Critical values

/// SIR threshold at which the mean local delay of a file cached with
/// probability q diverges; delay is finite iff theta < theta_c.
inline double critical_theta(const NetworkParams& params, double q) {
  check_caching_probability(q);
  if (q < 1.0 && params.beta >= 1.0) return 0.0;
  auto denom_at = [&](double log_theta) {
    return delay_coefficients(params.with_theta(std::exp(log_theta))).denominator(q);
  };
  double lo = std::log(1e-30);
  double hi = 0.0;
  while (!(denom_at(lo) > 0.0) && lo > -600.0) lo -= 20.0;
  while (denom_at(hi) > 0.0) {
    hi += 5.0;
    if (hi > 300.0) return kInfinity;
  }
  return std::exp(find_root(denom_at, {lo, hi, 1e-13, 400}));
}

/// Unclipped ratio c1 / c3; +inf when c3 <= 0. Values >= 1 mean that no
/// caching probability gives a finite delay.
inline double critical_q_ratio(const NetworkParams& params) {
  const auto c = delay_coefficients(params);
  if (params.beta >= 1.0 || !(c.c3 > 0.0)) return kInfinity;
  return c.c1 / c.c3;
}

/// Caching probability below which delay diverges: q_c = c1 / c3. Empty when
/// no caching probability in (0, 1) gives a finite delay.
inline std::optional<double> critical_q(const NetworkParams& params) {
  const double qc = critical_q_ratio(params);
  if (!(qc < 1.0)) return std::nullopt;
  return qc;
}

/// Smallest active probability at which delay diverges for caching
/// probability q; 1 when delay is finite for every beta < 1.
inline double critical_beta(const NetworkParams& params, double q) {
  check_caching_probability(q);
  auto denom_at = [&](double b) { return delay_coefficients(params.with_beta(b)).denominator(q); };
  if (q >= 1.0) {
    if (denom_at(1.0) > 0.0) return 1.0;
  }
  const double hi = (q >= 1.0) ? 1.0 : 1.0 - 1e-15;
  if (denom_at(hi) > 0.0) return 1.0;
  const double lo = 1e-300;
  return find_root(denom_at, {lo, hi, 1e-14, 400});
}

struct CriticalValues {
  double theta_c = kInfinity;
  std::optional<double> q_c;
  double beta_c = 1.0;
};

inline CriticalValues critical_values(const NetworkParams& params, double q) {
  return {critical_theta(params, q), critical_q(params), critical_beta(params, q)};
}

}  // namespace cachemeta
