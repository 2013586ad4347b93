#pragma once

// Network parameters, file catalog and caching policies.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cachemeta {

/// Physical and protocol parameters of the cellular network.
///
/// theta is the linear SIR threshold. power is carried for the simulator only;
/// no SIR-based quantity depends on it (nor on lambda).
struct NetworkParams {
  double lambda = 1e-4;  // BS density per m^2
  double alpha = 3.0;    // path-loss exponent
  double beta = 1.0;     // DTX active probability
  double theta = 1.0;    // SIR threshold (linear)
  double power = 0.1995; // transmit power in W (23 dBm)

  double delta() const { return 2.0 / alpha; }

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::domain_error("NetworkParams: lambda must be > 0");
    if (!(alpha > 2.0) || !std::isfinite(alpha)) throw std::domain_error("NetworkParams: alpha must be > 2");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::domain_error("NetworkParams: beta must lie in (0, 1]");
    if (!(theta > 0.0) || !std::isfinite(theta)) throw std::domain_error("NetworkParams: theta must be > 0");
    if (!(power > 0.0)) throw std::domain_error("NetworkParams: power must be > 0");
  }

  NetworkParams with_beta(double b) const {
    NetworkParams p = *this;
    p.beta = b;
    return p;
  }
  NetworkParams with_theta(double t) const {
    NetworkParams p = *this;
    p.theta = t;
    return p;
  }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

/// File library ranked by popularity, p[0] being the most requested file.
struct Catalog {
  double zipf_gamma = 0.0;
  std::vector<double> popularity;

  std::size_t size() const { return popularity.size(); }
};

/// Zipf popularity p_f = f^{-gamma} / sum_g g^{-gamma}.
inline std::vector<double> zipf_popularity(std::size_t file_count, double gamma) {
  if (file_count == 0) throw std::domain_error("zipf_popularity: file count must be >= 1");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::domain_error("zipf_popularity: gamma must be >= 0");
  std::vector<double> p(file_count);
  for (std::size_t f = 0; f < file_count; ++f) p[f] = std::pow(static_cast<double>(f + 1), -gamma);
  // Summing smallest terms first keeps the normalization tight for large F.
  double total = 0.0;
  for (std::size_t f = file_count; f-- > 0;) total += p[f];
  for (double& v : p) v /= total;
  return p;
}

inline Catalog make_catalog(std::size_t file_count, double gamma) {
  return Catalog{gamma, zipf_popularity(file_count, gamma)};
}

/// Per-file caching probabilities q with sum(q) = cache_size.
struct CachingPolicy {
  std::vector<double> q;
  std::size_t cache_size = 0;
};

/// Backhaul delay (slots) added to requests for files no BS caches.
struct DelayModel {
  double backhaul_delay = 0.0;

  void validate() const {
    if (!(backhaul_delay >= 0.0) || !std::isfinite(backhaul_delay))
      throw std::domain_error("DelayModel: backhaul delay must be >= 0");
  }
};

/// Most-popular-content caching: the C most popular files with probability 1.
inline CachingPolicy mpc_policy(const Catalog& catalog, std::size_t cache_size) {
  if (cache_size < 1 || cache_size > catalog.size())
    throw std::domain_error("mpc_policy: cache size must satisfy 1 <= C <= F");
  CachingPolicy p{std::vector<double>(catalog.size(), 0.0), cache_size};
  for (std::size_t f = 0; f < cache_size; ++f) p.q[f] = 1.0;
  return p;
}

/// Uniform caching over the N most popular files: q_f = C/N for f <= N.
inline CachingPolicy uc_policy(const Catalog& catalog, std::size_t cache_size, std::size_t cached_count) {
  if (cache_size < 1 || cache_size > catalog.size())
    throw std::domain_error("uc_policy: cache size must satisfy 1 <= C <= F");
  if (cached_count < cache_size || cached_count > catalog.size())
    throw std::domain_error("uc_policy: cached file count must satisfy C <= N <= F");
  CachingPolicy p{std::vector<double>(catalog.size(), 0.0), cache_size};
  const double level = static_cast<double>(cache_size) / static_cast<double>(cached_count);
  for (std::size_t f = 0; f < cached_count; ++f) p.q[f] = level;
  return p;
}

struct PolicyViolation {
  enum class Kind { size_mismatch, below_zero, above_one, capacity };
  Kind kind;
  std::size_t index;  // file index (0-based); unused for size_mismatch and capacity
  double magnitude;   // how far outside the constraint

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::size_mismatch: os << "policy length differs from catalog by " << magnitude; break;
      case Kind::below_zero: os << "q[" << index + 1 << "] below 0 by " << magnitude; break;
      case Kind::above_one: os << "q[" << index + 1 << "] above 1 by " << magnitude; break;
      case Kind::capacity: os << "sum(q) differs from cache size by " << magnitude; break;
    }
    return os.str();
  }
};

/// Checks 0 <= q_f <= 1 and sum(q) = C (within 1e-9); empty result means valid.
inline std::vector<PolicyViolation> validate_policy(const CachingPolicy& policy, const Catalog& catalog) {
  std::vector<PolicyViolation> out;
  if (policy.q.size() != catalog.size()) {
    out.push_back({PolicyViolation::Kind::size_mismatch, 0,
                   std::abs(static_cast<double>(policy.q.size()) - static_cast<double>(catalog.size()))});
  }
  double total = 0.0;
  for (std::size_t f = 0; f < policy.q.size(); ++f) {
    const double q = policy.q[f];
    if (q < 0.0) out.push_back({PolicyViolation::Kind::below_zero, f, -q});
    if (q > 1.0) out.push_back({PolicyViolation::Kind::above_one, f, q - 1.0});
    total += q;
  }
  const double gap = std::abs(total - static_cast<double>(policy.cache_size));
  if (gap > 1e-9) out.push_back({PolicyViolation::Kind::capacity, 0, gap});
  return out;
}

}  // namespace cachemeta
