#pragma once

// Monte-Carlo oracle for the analytical model.
//
// BS positions are drawn as a homogeneous PPP inside a disk of radius R by
// generating radial arrivals: with t_i the points of a unit-rate Poisson
// process, r_i = sqrt(t_i / (pi lambda)). Points therefore come out sorted by
// distance and a realization for radius R is a prefix of the one for any
// larger radius with the same seed.
//
// Every realization owns an RNG stream keyed by (master_seed, index), so
// results do not depend on the number of worker threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cachemeta/metrics.hpp"
#include "cachemeta/model.hpp"

namespace cachemeta::sim {

class miss_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double region_radius = 2000.0;        // m
  std::size_t realizations = 10000;
  std::size_t trials_per_realization = 1;  // delay trials (slot-level simulation)
  std::uint64_t master_seed = 20240611;
  std::size_t delay_cap = 100000;       // slots; longer delays are censored
  bool far_field_correction = true;     // mean-field interference from beyond R
  unsigned workers = 1;

  void validate() const {
    if (!(region_radius > 0.0)) throw std::invalid_argument("SimConfig: region radius must be > 0");
    if (realizations < 1) throw std::invalid_argument("SimConfig: need at least one realization");
    if (trials_per_realization < 1) throw std::invalid_argument("SimConfig: need at least one trial");
    if (delay_cap < 1) throw std::invalid_argument("SimConfig: delay cap must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t index, std::uint64_t stream = 0)
      : engine_(splitmix64(splitmix64(splitmix64(master_seed) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL))) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Exp(1).
  double exponential() { return -std::log1p(-uniform()); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

enum Stream : std::uint64_t { kPlacement = 0, kTrials = 1, kRequests = 2 };

// ---------------------------------------------------------------------------
// Realizations

struct Point {
  double x;
  double y;
  double distance;
  double mark;  // uniform cache-placement mark
};

struct Realization {
  std::vector<Point> points;        // sorted by distance to the origin
  std::vector<bool> cache_mark;     // whether each point caches the requested file
  std::optional<std::size_t> serving;
  double region_radius = kInfinity;
  bool far_field_correction = false;

  std::size_t size() const { return points.size(); }
  double serving_distance() const {
    if (!serving) throw miss_error("realization has no serving BS");
    return points[*serving].distance;
  }
};

inline std::vector<Point> sample_points(double lambda, double radius, Rng& rng) {
  std::vector<Point> pts;
  const double area_scale = std::numbers::pi * lambda;
  pts.reserve(static_cast<std::size_t>(area_scale * radius * radius * 1.1) + 16);
  double t = 0.0;
  for (;;) {
    t += rng.exponential();
    const double r = std::sqrt(t / area_scale);
    if (r > radius) break;
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    pts.push_back({r * std::cos(phi), r * std::sin(phi), r, rng.uniform()});
  }
  return pts;
}

inline void assign_serving(Realization& real) {
  real.serving.reset();
  for (std::size_t i = 0; i < real.points.size(); ++i) {
    if (real.cache_mark[i]) {
      real.serving = i;
      break;
    }
  }
}

/// One PPP realization where each BS caches the file independently w.p. q;
/// the typical user sits at the origin and is served by the nearest cacher.
inline Realization sample_realization(const NetworkParams& params, double q, const SimConfig& config,
                                      std::uint64_t index) {
  Rng rng(config.master_seed, index, kPlacement);
  Realization real;
  real.points = sample_points(params.lambda, config.region_radius, rng);
  real.cache_mark.resize(real.points.size());
  for (std::size_t i = 0; i < real.points.size(); ++i) real.cache_mark[i] = real.points[i].mark < q;
  real.region_radius = config.region_radius;
  real.far_field_correction = config.far_field_correction;
  assign_serving(real);
  return real;
}

/// -log of the mean-field success factor contributed by BSs beyond the
/// simulation disk, for serving distance r:
///   pi lambda r^2 int_{(R/r)^2}^inf beta s / (1 + s) du,  s = theta u^{-alpha/2}.
inline double far_field_exponent(const NetworkParams& params, double r, double radius) {
  if (!std::isfinite(radius)) return 0.0;
  const double d = params.delta();
  const double s_edge = params.theta * std::pow(r / radius, params.alpha);
  const double tail = params.beta * d * std::pow(params.theta, d) * std::pow(s_edge, 1.0 - d) / (1.0 - d) *
                      hyp2f1_integral(1.0, 1.0 - d, 2.0 - d, -s_edge);
  return std::numbers::pi * params.lambda * r * r * tail;
}

/// Success probability conditioned on the realization, with fading and DTX
/// averaged out:  beta * prod_{i != serving} (1 - beta + beta / (1 + theta (r/x_i)^alpha)).
inline double conditional_stp(const Realization& real, const NetworkParams& params) {
  if (!real.serving) throw miss_error("conditional_stp: no serving BS");
  const std::size_t s = *real.serving;
  const double r = real.points[s].distance;
  double log_prod = 0.0;
  for (std::size_t i = 0; i < real.points.size(); ++i) {
    if (i == s) continue;
    const double ratio = params.theta * std::pow(r / real.points[i].distance, params.alpha);
    log_prod += std::log1p(-params.beta * ratio / (1.0 + ratio));
  }
  if (real.far_field_correction) log_prod -= far_field_exponent(params, r, real.region_radius);
  return params.beta * std::exp(log_prod);
}

// ---------------------------------------------------------------------------
// Per-realization records and deterministic fan-out

struct RealizationRecord {
  std::size_t index = 0;
  std::size_t n_points = 0;
  double serving_distance = kInfinity;  // inf on a miss
  double stp = 0.0;                     // NaN on a miss
  bool miss() const { return std::isnan(stp); }
};

/// Runs body(index) for every realization index, splitting the index range
/// into contiguous blocks over config.workers threads.
template <class Body>
void for_each_realization(const SimConfig& config, Body&& body) {
  const std::size_t n = config.realizations;
  const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * block;
    const std::size_t hi = std::min(n, lo + block);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline std::vector<RealizationRecord> sample_records(const NetworkParams& params, double q,
                                                     const SimConfig& config) {
  params.validate();
  config.validate();
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("caching probability must lie in [0, 1]");
  std::vector<RealizationRecord> out(config.realizations);
  for_each_realization(config, [&](std::size_t i) {
    const Realization real = sample_realization(params, q, config, i);
    RealizationRecord rec{i, real.size(), kInfinity, std::nan("")};
    if (real.serving) {
      rec.serving_distance = real.serving_distance();
      rec.stp = conditional_stp(real, params);
    }
    out[i] = rec;
  });
  return out;
}

/// CSV dump of per-realization records: index,n_points,r,conditional_stp.
inline void write_records_csv(std::ostream& os, const std::vector<RealizationRecord>& records) {
  os << "index,n_points,r,conditional_stp\n";
  os.precision(12);
  for (const auto& r : records) {
    os << r.index << ',' << r.n_points << ',';
    if (r.miss()) {
      os << ",\n";
    } else {
      os << r.serving_distance << ',' << r.stp << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Statistics

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Sample mean and standard error of a sequence (accumulated in order).
template <class Range, class Fn>
Estimate estimate_mean(const Range& values, Fn&& transform) {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    const auto t = transform(v);
    if (!t) continue;
    sum += *t;
    sum_sq += *t * *t;
    ++n;
  }
  Estimate e;
  e.samples = n;
  if (n == 0) return e;
  e.mean = sum / static_cast<double>(n);
  if (n > 1) {
    const double var = std::max(0.0, (sum_sq - sum * e.mean) / static_cast<double>(n - 1));
    e.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return e;
}

struct MomentEstimate {
  double k = 0.0;
  Estimate value;
};

struct EmpiricalStats {
  std::size_t realizations = 0;
  std::size_t misses = 0;
  std::vector<MomentEstimate> moments;

  // Negative-order statistics (k = -1): 1/P is capped at delay_cap.
  Estimate inverse_truncated;
  double inverse_untruncated = 0.0;
  std::size_t censored = 0;

  std::vector<double> y_grid;
  std::vector<double> meta_ccdf;
  double dkw_band = 0.0;  // 95% uniform confidence half-width of meta_ccdf

  // Slot-level delay: histogram[d-1] counts delays of d slots (d <= cap).
  std::vector<std::size_t> delay_histogram;
  Estimate delay;  // censored trials contribute the cap

  double censored_fraction() const {
    const std::size_t hits = realizations - misses;
    return hits == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(hits);
  }
  const Estimate& moment(double k) const {
    for (const auto& m : moments)
      if (m.k == k) return m.value;
    throw std::out_of_range("EmpiricalStats: moment not estimated");
  }
};

inline double dkw_half_width(std::size_t n, double confidence = 0.95) {
  if (n == 0) return 1.0;
  return std::sqrt(std::log(2.0 / (1.0 - confidence)) / (2.0 * static_cast<double>(n)));
}

/// Sample moments of the conditional success probability. Misses are
/// excluded; for k = -1 the estimator is also reported capped at delay_cap.
inline EmpiricalStats moments_from_records(const std::vector<RealizationRecord>& records,
                                           const std::vector<double>& k_list, std::size_t delay_cap) {
  EmpiricalStats st;
  st.realizations = records.size();
  st.misses = static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                     [](const auto& r) { return r.miss(); }));
  for (double k : k_list) {
    auto e = estimate_mean(records, [k](const RealizationRecord& r) -> std::optional<double> {
      if (r.miss()) return std::nullopt;
      return k == 0.0 ? 1.0 : std::pow(r.stp, k);
    });
    st.moments.push_back({k, e});
    if (k == -1.0) {
      const double cap = static_cast<double>(delay_cap);
      st.censored = static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [cap](const auto& r) {
        return !r.miss() && 1.0 / r.stp > cap;
      }));
      st.inverse_truncated = estimate_mean(records, [cap](const RealizationRecord& r) -> std::optional<double> {
        if (r.miss()) return std::nullopt;
        return std::min(1.0 / r.stp, cap);
      });
      st.inverse_untruncated = e.mean;
    }
  }
  return st;
}

inline EmpiricalStats empirical_moments(const NetworkParams& params, double q, const SimConfig& config,
                                        const std::vector<double>& k_list) {
  return moments_from_records(sample_records(params, q, config), k_list, config.delay_cap);
}

/// Empirical CCDF of the conditional success probability with a 95% DKW band.
inline EmpiricalStats meta_from_records(const std::vector<RealizationRecord>& records,
                                        const std::vector<double>& y_grid) {
  EmpiricalStats st;
  st.realizations = records.size();
  std::vector<double> stp;
  stp.reserve(records.size());
  for (const auto& r : records) {
    if (r.miss()) {
      ++st.misses;
    } else {
      stp.push_back(r.stp);
    }
  }
  std::sort(stp.begin(), stp.end());
  st.y_grid = y_grid;
  st.meta_ccdf.resize(y_grid.size());
  const double n = static_cast<double>(stp.size());
  for (std::size_t i = 0; i < y_grid.size(); ++i) {
    const auto above = stp.end() - std::upper_bound(stp.begin(), stp.end(), y_grid[i]);
    st.meta_ccdf[i] = stp.empty() ? 0.0 : static_cast<double>(above) / n;
  }
  st.dkw_band = dkw_half_width(stp.size());
  return st;
}

inline EmpiricalStats empirical_meta(const NetworkParams& params, double q, const SimConfig& config,
                                     const std::vector<double>& y_grid) {
  return meta_from_records(sample_records(params, q, config), y_grid);
}

// ---------------------------------------------------------------------------
// Slot-level delay simulation

/// Slot-by-slot retransmission until success on a fixed realization. In every
/// slot the server and each interferer are active independently w.p. beta and
/// all links see fresh Rayleigh fading; success needs an active server and
/// SIR > theta. Returns the delay in slots, or cap + 1 when censored.
class DelaySimulator {
 public:
  DelaySimulator(const Realization& real, const NetworkParams& params) : beta_(params.beta) {
    if (!real.serving) throw miss_error("DelaySimulator: no serving BS");
    const std::size_t s = *real.serving;
    const double r = real.points[s].distance;
    gains_.reserve(real.size());
    for (std::size_t i = 0; i < real.size(); ++i) {
      if (i == s) continue;
      gains_.push_back(params.theta * std::pow(r / real.points[i].distance, params.alpha));
    }
    if (real.far_field_correction) far_ = far_field_exponent(params, r, real.region_radius);
  }

  bool slot(Rng& rng) const {
    if (!rng.bernoulli(beta_)) return false;
    const double budget = rng.exponential() - far_;
    if (budget <= 0.0) return false;
    double acc = 0.0;
    for (double g : gains_) {
      if (rng.uniform() < beta_) {
        acc += g * rng.exponential();
        if (acc >= budget) return false;
      }
    }
    return true;
  }

  std::size_t trial(Rng& rng, std::size_t cap) const {
    for (std::size_t d = 1; d <= cap; ++d)
      if (slot(rng)) return d;
    return cap + 1;
  }

 private:
  double beta_;
  double far_ = 0.0;
  std::vector<double> gains_;
};

inline void accumulate_delay(EmpiricalStats& st, const std::vector<std::size_t>& delays, std::size_t cap) {
  st.delay_histogram.assign(cap, 0);
  for (std::size_t d : delays) {
    if (d > cap) {
      ++st.censored;
    } else {
      ++st.delay_histogram[d - 1];
    }
  }
  st.delay = estimate_mean(delays, [cap](std::size_t d) -> std::optional<double> {
    return static_cast<double>(std::min(d, cap));
  });
}

/// Per-realization delay trials. Realization i uses the trial stream of
/// index i; misses contribute no trials.
inline EmpiricalStats simulate_local_delay(const NetworkParams& params, double q, const SimConfig& config) {
  params.validate();
  config.validate();
  const std::size_t trials = config.trials_per_realization;
  std::vector<std::size_t> delays(config.realizations * trials, 0);
  std::vector<char> missed(config.realizations, 0);
  for_each_realization(config, [&](std::size_t i) {
    const Realization real = sample_realization(params, q, config, i);
    if (!real.serving) {
      missed[i] = 1;
      return;
    }
    DelaySimulator sim(real, params);
    Rng rng(config.master_seed, i, kTrials);
    for (std::size_t t = 0; t < trials; ++t) delays[i * trials + t] = sim.trial(rng, config.delay_cap);
  });
  EmpiricalStats st;
  st.realizations = config.realizations;
  std::vector<std::size_t> kept;
  kept.reserve(delays.size());
  for (std::size_t i = 0; i < config.realizations; ++i) {
    if (missed[i]) {
      ++st.misses;
      continue;
    }
    kept.insert(kept.end(), delays.begin() + static_cast<std::ptrdiff_t>(i * trials),
                delays.begin() + static_cast<std::ptrdiff_t>((i + 1) * trials));
  }
  accumulate_delay(st, kept, config.delay_cap);
  return st;
}

// ---------------------------------------------------------------------------
// System delay with joint cache placement

/// Whether a BS with placement mark u caches file f under the quantile
/// interval placement: the BS stores the files whose cumulative-probability
/// interval [cum[f], cum[f+1]) contains u + j for some integer j. Every BS
/// then holds exactly C files and file f is cached w.p. q_f.
inline bool interval_caches(double u, double lo, double hi) {
  const double j = std::ceil(lo - u);
  return u + j < hi;
}

struct SystemDelayEstimate {
  Estimate delay;        // one slot-level request per realization
  Estimate conditional;  // per realization: sum_f p_f (1 / P_f + backhaul), P_f conditional STP
  std::size_t censored = 0;
  std::size_t backhaul_requests = 0;
};

/// One request per realization: the file is drawn from the popularity law,
/// served by the nearest BS caching it or, if q_f = 0, by the nearest BS
/// after a backhaul fetch of xi slots.
inline SystemDelayEstimate simulate_system_delay(const Catalog& catalog, const CachingPolicy& policy,
                                                 const NetworkParams& params, double backhaul_delay,
                                                 const SimConfig& config) {
  params.validate();
  config.validate();
  const std::size_t F = catalog.size();
  std::vector<double> cum(F + 1, 0.0);
  for (const auto& v : validate_policy(policy, catalog)) {
    // An under-filled cache is still placeable; anything else is not.
    if (v.kind != PolicyViolation::Kind::capacity)
      throw std::invalid_argument("simulate_system_delay: " + v.describe());
  }
  for (std::size_t f = 0; f < F; ++f) cum[f + 1] = cum[f] + policy.q[f];
  if (cum[F] > static_cast<double>(policy.cache_size) + 1e-9)
    throw std::invalid_argument("simulate_system_delay: caching probabilities exceed the cache size");
  std::vector<double> pop_cum(F + 1, 0.0);
  for (std::size_t f = 0; f < F; ++f) pop_cum[f + 1] = pop_cum[f] + catalog.popularity[f];

  std::vector<double> delays(config.realizations, 0.0);
  std::vector<double> expected(config.realizations, 0.0);
  std::vector<char> censored(config.realizations, 0);
  std::vector<char> backhaul(config.realizations, 0);
  for_each_realization(config, [&](std::size_t i) {
    Rng placement(config.master_seed, i, kPlacement);
    Realization real;
    real.points = sample_points(params.lambda, config.region_radius, placement);
    real.region_radius = config.region_radius;
    real.far_field_correction = config.far_field_correction;

    Rng requests(config.master_seed, i, kRequests);
    const double u = requests.uniform() * pop_cum[F];
    std::size_t f = static_cast<std::size_t>(std::upper_bound(pop_cum.begin() + 1, pop_cum.end(), u) -
                                             (pop_cum.begin() + 1));
    f = std::min(f, F - 1);

    const double cap = static_cast<double>(config.delay_cap);
    real.cache_mark.resize(real.size());
    auto place = [&](std::size_t file) {
      const bool cached = policy.q[file] > 0.0;
      for (std::size_t b = 0; b < real.size(); ++b)
        real.cache_mark[b] = cached ? interval_caches(real.points[b].mark, cum[file], cum[file + 1]) : true;
      assign_serving(real);
      return cached ? 0.0 : backhaul_delay;
    };

    double mix = 0.0;
    std::optional<std::size_t> last_server;
    double last_inv = kInfinity;
    for (std::size_t g = 0; g < F; ++g) {
      const double extra = place(g);
      if (real.serving != last_server || !last_server) {
        last_inv = real.serving ? 1.0 / conditional_stp(real, params) : kInfinity;
        last_server = real.serving;
      }
      mix += catalog.popularity[g] * (std::min(last_inv, cap) + extra);
    }
    expected[i] = mix / pop_cum[F];

    const double extra = place(f);
    if (extra > 0.0) backhaul[i] = 1;
    if (!real.serving) {
      // No BS in the disk caches the file; treat as censored at the cap.
      delays[i] = cap + extra;
      censored[i] = 1;
      return;
    }
    DelaySimulator sim(real, params);
    Rng trials(config.master_seed, i, kTrials);
    const std::size_t d = sim.trial(trials, config.delay_cap);
    if (d > config.delay_cap) censored[i] = 1;
    delays[i] = static_cast<double>(std::min(d, config.delay_cap)) + extra;
  });
  SystemDelayEstimate out;
  out.delay = estimate_mean(delays, [](double d) -> std::optional<double> { return d; });
  out.conditional = estimate_mean(expected, [](double d) -> std::optional<double> { return d; });
  for (std::size_t i = 0; i < config.realizations; ++i) {
    out.censored += censored[i];
    out.backhaul_requests += backhaul[i];
  }
  return out;
}

}  // namespace cachemeta::sim
