#pragma once

// Special functions, adaptive quadrature, bracketed root finding and bounded
// 1-D minimization used by the analytical model.
//
// Every routine here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

namespace cachemeta {

/// Thrown when an iterative numerical method fails to meet its tolerance.
class convergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown by find_root when the bracket does not enclose a sign change.
class bracket_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct QuadratureSpec {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subdivisions = 2000;

  void validate() const {
    if (!(abs_tol > 0.0) || !(rel_tol > 0.0) || max_subdivisions < 1)
      throw std::invalid_argument("QuadratureSpec: tolerances must be positive and max_subdivisions >= 1");
  }
};

struct BracketSpec {
  double lo = 0.0;
  double hi = 1.0;
  double tol = 1e-12;
  int max_iter = 200;

  void validate() const {
    if (!(lo < hi)) throw std::invalid_argument("BracketSpec: lo must be < hi");
    if (!(tol > 0.0)) throw std::invalid_argument("BracketSpec: tol must be positive");
    if (max_iter < 1) throw std::invalid_argument("BracketSpec: max_iter must be >= 1");
  }
};

template <class T>
struct QuadratureResult {
  T value{};
  double error = 0.0;
  int subdivisions = 0;
};

namespace detail {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }

// One 21-point Gauss-Kronrod panel; the error estimate is |K21 - G10|.
template <class T, class F>
std::pair<T, double> gk21(F& f, double a, double b) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  const auto& xk = gauss_kronrod<double, 21>::abscissa();
  const auto& wk = gauss_kronrod<double, 21>::weights();
  const auto& wg = gauss<double, 10>::weights();

  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  T fc = f(c);
  T kron = wk[0] * fc;
  T gaus{};
  for (std::size_t i = 1; i < xk.size(); ++i) {
    const double dx = h * xk[i];
    const T pair = f(c - dx) + f(c + dx);
    kron += wk[i] * pair;
    if (i % 2 == 1) gaus += wg[i / 2] * pair;
  }
  kron *= h;
  gaus *= h;
  return {kron, magnitude(kron - gaus)};
}

template <class T>
struct Panel {
  double a, b;
  T value;
  double error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

// Globally adaptive bisection over a finite interval.
template <class T, class F>
QuadratureResult<T> adaptive(F& f, double a, double b, const QuadratureSpec& spec) {
  std::priority_queue<Panel<T>> heap;
  auto [v0, e0] = gk21<T>(f, a, b);
  heap.push({a, b, v0, e0});
  T total = v0;
  double total_err = e0;
  int n = 1;
  while (total_err > std::max(spec.abs_tol, spec.rel_tol * magnitude(total))) {
    if (n >= spec.max_subdivisions) {
      throw convergence_error("integrate: subdivision limit " + std::to_string(spec.max_subdivisions) +
                              " reached with error estimate " + std::to_string(total_err));
    }
    Panel<T> worst = heap.top();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw convergence_error("integrate: interval underflow near x=" + std::to_string(mid));
    }
    heap.pop();
    auto [vl, el] = gk21<T>(f, worst.a, mid);
    auto [vr, er] = gk21<T>(f, mid, worst.b);
    heap.push({worst.a, mid, vl, el});
    heap.push({mid, worst.b, vr, er});
    ++n;
    // Re-summing from the heap keeps accumulated roundoff out of the totals.
    if (n % 64 == 0) {
      auto copy = heap;
      total = T{};
      total_err = 0.0;
      while (!copy.empty()) {
        total += copy.top().value;
        total_err += copy.top().error;
        copy.pop();
      }
    } else {
      total += vl + vr - worst.value;
      total_err += el + er - worst.error;
    }
  }
  return {total, total_err, n};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod quadrature of f over [lo, hi]; hi may be +infinity,
/// in which case the range is compactified with x = lo + u/(1-u). The
/// integrand may return double or std::complex<double>.
template <class F>
auto integrate_with_error(F&& f, double lo, double hi, const QuadratureSpec& spec = {})
    -> QuadratureResult<std::invoke_result_t<F&, double>> {
  using T = std::invoke_result_t<F&, double>;
  spec.validate();
  if (std::isnan(lo) || std::isnan(hi) || std::isinf(lo))
    throw std::domain_error("integrate: lower limit must be finite");
  if (lo == hi) return {};
  if (hi < lo) {
    auto r = integrate_with_error(f, hi, lo, spec);
    r.value = -r.value;
    return r;
  }
  if (std::isinf(hi)) {
    auto mapped = [&f, lo](double u) -> T {
      const double one_minus = 1.0 - u;
      if (one_minus <= 0.0) return T{};
      return f(lo + u / one_minus) * (1.0 / (one_minus * one_minus));
    };
    return detail::adaptive<T>(mapped, 0.0, 1.0, spec);
  }
  return detail::adaptive<T>(f, lo, hi, spec);
}

template <class F>
auto integrate(F&& f, double lo, double hi, const QuadratureSpec& spec = {}) {
  return integrate_with_error(std::forward<F>(f), lo, hi, spec).value;
}

/// Euler beta function B(a, b).
inline double beta_fn(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("beta_fn: arguments must be positive");
  if (a + b < 140.0) return std::tgamma(a) * std::tgamma(b) / std::tgamma(a + b);
  return std::exp(std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

/// Gauss hypergeometric function 2F1(a, b; c; z) from its Euler integral,
/// restricted to c > b > 0 and z <= 0 where the integral is proper.
inline double hyp2f1_integral(double a, double b, double c, double z,
                              const QuadratureSpec& spec = {std::numeric_limits<double>::min(), 1e-12, 2000}) {
  if (!(b > 0.0) || !(c > b)) throw std::domain_error("hyp2f1_integral: requires c > b > 0");
  if (!(z <= 0.0)) throw std::domain_error("hyp2f1_integral: requires z <= 0");
  if (z == 0.0) return 1.0;
  const double e0 = b - 1.0;      // exponent at x = 0
  const double e1 = c - b - 1.0;  // exponent at x = 1
  auto kernel = [a, z](double x) { return std::pow(1.0 - z * x, -a); };

  // Weak endpoint singularities are absorbed by power substitutions:
  //   x = t^{1/b} near 0 and 1 - x = s^{1/(c-b)} near 1.
  double left = 0.0;
  if (e0 < 0.0) {
    const double tmax = std::pow(0.5, b);
    left = integrate(
               [&](double t) {
                 const double x = std::pow(t, 1.0 / b);
                 return std::pow(1.0 - x, e1) * kernel(x);
               },
               0.0, tmax, spec) /
           b;
  } else {
    left = integrate([&](double x) { return std::pow(x, e0) * std::pow(1.0 - x, e1) * kernel(x); }, 0.0, 0.5,
                     spec);
  }
  double right = 0.0;
  const double cb = c - b;
  if (e1 < 0.0) {
    const double smax = std::pow(0.5, cb);
    right = integrate(
                [&](double s) {
                  const double x = 1.0 - std::pow(s, 1.0 / cb);
                  return std::pow(x, e0) * kernel(x);
                },
                0.0, smax, spec) /
            cb;
  } else {
    right = integrate([&](double x) { return std::pow(x, e0) * std::pow(1.0 - x, e1) * kernel(x); }, 0.5, 1.0,
                      spec);
  }
  return (left + right) / beta_fn(b, c - b);
}

namespace detail {

// Modified Lentz evaluation of the incomplete-beta continued fraction.
inline double inc_beta_cf(double y, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * y / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * y / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * y / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw convergence_error("reg_inc_beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta function I_y(a, b).
inline double reg_inc_beta(double y, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: a and b must be positive");
  if (!(y >= 0.0 && y <= 1.0)) throw std::domain_error("reg_inc_beta: y must lie in [0, 1]");
  if (y == 0.0) return 0.0;
  if (y == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(y) + b * std::log1p(-y);
  const double front = std::exp(log_front);
  double result;
  if (y < (a + 1.0) / (a + b + 2.0)) {
    result = front * detail::inc_beta_cf(y, a, b) / a;
  } else {
    result = 1.0 - front * detail::inc_beta_cf(1.0 - y, b, a) / b;
  }
  return std::clamp(result, 0.0, 1.0);
}

/// Root of f inside [spec.lo, spec.hi]; f(lo) and f(hi) must differ in sign.
template <class F>
double find_root(F&& f, const BracketSpec& spec) {
  spec.validate();
  const double flo = f(spec.lo);
  const double fhi = f(spec.hi);
  if (flo == 0.0) return spec.lo;
  if (fhi == 0.0) return spec.hi;
  if (std::isnan(flo) || std::isnan(fhi) || (flo > 0.0) == (fhi > 0.0)) {
    throw bracket_error("find_root: no sign change on [" + std::to_string(spec.lo) + ", " +
                        std::to_string(spec.hi) + "]");
  }
  const double tol = spec.tol;
  auto width_ok = [tol](double a, double b) { return std::abs(b - a) <= tol; };
  std::uintmax_t iters = static_cast<std::uintmax_t>(spec.max_iter);
  auto fn = [&f](double x) { return static_cast<double>(f(x)); };
  const auto [a, b] = boost::math::tools::toms748_solve(fn, spec.lo, spec.hi, flo, fhi, width_ok, iters);
  const double root = 0.5 * (a + b);
  if (std::abs(b - a) > tol && std::abs(fn(root)) > tol) {
    throw convergence_error("find_root: bracket [" + std::to_string(a) + ", " + std::to_string(b) +
                            "] still wider than tolerance");
  }
  return root;
}

struct Minimum {
  double argmin;
  double value;
};

/// Bounded minimization: a 65-point grid scan followed by Brent's
/// golden-section/parabolic refinement around the best grid point.
template <class F>
Minimum minimize_1d(F&& f, const BracketSpec& spec) {
  spec.validate();
  constexpr int grid = 64;
  const double step = (spec.hi - spec.lo) / grid;
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> xs(grid + 1);
  for (int i = 0; i <= grid; ++i) {
    xs[i] = (i == grid) ? spec.hi : spec.lo + i * step;
    const double v = f(xs[i]);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (!std::isfinite(best_val)) throw convergence_error("minimize_1d: objective is not finite on the grid");

  const double a = xs[std::max(best - 1, 0)];
  const double b = xs[std::min(best + 1, grid)];
  const int bits = std::clamp(static_cast<int>(std::ceil(-std::log2(spec.tol))) + 1, 8,
                              std::numeric_limits<double>::digits / 2);
  std::uintmax_t iters = static_cast<std::uintmax_t>(spec.max_iter);
  auto guarded = [&f](double x) {
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  const auto [x, v] = boost::math::tools::brent_find_minima(guarded, a, b, bits, iters);
  if (iters >= static_cast<std::uintmax_t>(spec.max_iter)) {
    throw convergence_error("minimize_1d: iteration limit reached");
  }
  if (v < best_val) return {x, v};
  return {xs[best], best_val};
}

}  // namespace cachemeta
