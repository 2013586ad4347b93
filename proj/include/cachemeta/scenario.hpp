#pragma once

// JSON scenario files and solution serialization.
//
// Thresholds are given in dB and powers in dBm on the file side; everything in
// NetworkParams is linear.

#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cachemeta/model.hpp"
#include "cachemeta/optim.hpp"
#include "cachemeta/sim.hpp"

namespace cachemeta {

class scenario_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PolicyKind { mpc, uc, explicit_q };

struct Scenario {
  NetworkParams network;
  double theta_db = 0.0;
  double power_dbm = 23.0;
  double user_density = 3e-4;
  std::size_t file_count = 30;
  double zipf_gamma = 0.8;
  std::size_t cache_size = 10;
  double backhaul_delay = 10.0;
  double caching_probability = 0.5;  // single-file probe for per-file metrics and validation
  PolicyKind policy = PolicyKind::mpc;
  std::vector<double> explicit_q;
  sim::SimConfig simulation;

  Catalog catalog() const { return make_catalog(file_count, zipf_gamma); }

  CachingPolicy caching_policy() const {
    const Catalog cat = catalog();
    switch (policy) {
      case PolicyKind::mpc: return mpc_policy(cat, cache_size);
      case PolicyKind::uc: return uc_policy(cat, cache_size, file_count);
      case PolicyKind::explicit_q: break;
    }
    CachingPolicy p{explicit_q, cache_size};
    const auto violations = validate_policy(p, cat);
    if (!violations.empty()) throw scenario_error("policy.q: " + violations.front().describe());
    return p;
  }

  /// Sets the SIR threshold from dB and keeps the linear copy in sync.
  void set_theta_db(double db) {
    if (!std::isfinite(db)) throw scenario_error("sir_threshold_db must be finite");
    theta_db = db;
    network.theta = db_to_linear(db);
  }

  void validate() const {
    try {
      network.validate();
      DelayModel{backhaul_delay}.validate();
      simulation.validate();
    } catch (const std::exception& e) {
      throw scenario_error(e.what());
    }
    if (!std::isfinite(theta_db)) throw scenario_error("sir_threshold_db must be finite");
    if (!(user_density > 0.0)) throw scenario_error("user_density must be > 0");
    if (file_count < 1) throw scenario_error("catalog.files must be >= 1");
    if (!(zipf_gamma >= 0.0)) throw scenario_error("catalog.zipf_exponent must be >= 0");
    if (cache_size < 1) throw scenario_error("cache_size must be >= 1");
    if (!(caching_probability > 0.0 && caching_probability <= 1.0))
      throw scenario_error("caching_probability must lie in (0, 1]");
    if (policy == PolicyKind::explicit_q && explicit_q.size() != file_count)
      throw scenario_error("policy.q must list one probability per file");
  }

  /// The optimizers report C > F as infeasible; everything else rejects it
  /// as an input error.
  void validate_capacity() const {
    if (cache_size > file_count) throw scenario_error("cache_size must satisfy C <= F");
  }
};

namespace detail {

/// Accepts numbers and the strings "inf"/"-inf"/"nan" so that non-finite
/// values are reported as domain errors instead of parse errors.
inline double number_field(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-inf" || s == "-Infinity") return -std::numeric_limits<double>::infinity();
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  }
  throw scenario_error(std::string(key) + " must be a number");
}

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  if constexpr (std::is_floating_point_v<T>) {
    out = number_field(j, key);
  } else {
    out = j.at(key).get<T>();
  }
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    if (j.contains("network")) {
      const auto& n = j.at("network");
      detail::read_if(n, "bs_density", s.network.lambda);
      detail::read_if(n, "user_density", s.user_density);
      detail::read_if(n, "path_loss_exponent", s.network.alpha);
      detail::read_if(n, "active_probability", s.network.beta);
      detail::read_if(n, "transmit_power_dbm", s.power_dbm);
      if (n.contains("sir_threshold_db")) s.set_theta_db(detail::number_field(n, "sir_threshold_db"));
    }
    s.network.theta = db_to_linear(s.theta_db);
    s.network.power = dbm_to_watt(s.power_dbm);
    if (j.contains("catalog")) {
      const auto& c = j.at("catalog");
      detail::read_if(c, "files", s.file_count);
      detail::read_if(c, "zipf_exponent", s.zipf_gamma);
    }
    detail::read_if(j, "cache_size", s.cache_size);
    detail::read_if(j, "backhaul_delay", s.backhaul_delay);
    detail::read_if(j, "caching_probability", s.caching_probability);
    if (j.contains("policy")) {
      const auto& p = j.at("policy");
      const std::string kind = p.value("kind", std::string("mpc"));
      if (kind == "mpc") {
        s.policy = PolicyKind::mpc;
      } else if (kind == "uc") {
        s.policy = PolicyKind::uc;
      } else if (kind == "explicit") {
        s.policy = PolicyKind::explicit_q;
        s.explicit_q = p.at("q").get<std::vector<double>>();
      } else {
        throw scenario_error("policy.kind must be mpc, uc or explicit");
      }
    }
    if (j.contains("simulation")) {
      const auto& m = j.at("simulation");
      detail::read_if(m, "region_radius", s.simulation.region_radius);
      detail::read_if(m, "realizations", s.simulation.realizations);
      detail::read_if(m, "trials_per_realization", s.simulation.trials_per_realization);
      detail::read_if(m, "master_seed", s.simulation.master_seed);
      detail::read_if(m, "delay_cap", s.simulation.delay_cap);
      detail::read_if(m, "far_field_correction", s.simulation.far_field_correction);
      detail::read_if(m, "workers", s.simulation.workers);
    }
  } catch (const nlohmann::json::exception& e) {
    throw scenario_error(std::string("malformed scenario: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json policy = {{"kind", s.policy == PolicyKind::mpc ? "mpc" : s.policy == PolicyKind::uc ? "uc" : "explicit"}};
  if (s.policy == PolicyKind::explicit_q) policy["q"] = s.explicit_q;
  return {
      {"network",
       {{"bs_density", s.network.lambda},
        {"user_density", s.user_density},
        {"path_loss_exponent", s.network.alpha},
        {"active_probability", s.network.beta},
        {"sir_threshold_db", s.theta_db},
        {"transmit_power_dbm", s.power_dbm}}},
      {"catalog", {{"files", s.file_count}, {"zipf_exponent", s.zipf_gamma}}},
      {"cache_size", s.cache_size},
      {"backhaul_delay", s.backhaul_delay},
      {"caching_probability", s.caching_probability},
      {"policy", policy},
      {"simulation",
       {{"region_radius", s.simulation.region_radius},
        {"realizations", s.simulation.realizations},
        {"trials_per_realization", s.simulation.trials_per_realization},
        {"master_seed", s.simulation.master_seed},
        {"delay_cap", s.simulation.delay_cap},
        {"far_field_correction", s.simulation.far_field_correction},
        {"workers", s.simulation.workers}}},
  };
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw scenario_error("cannot open scenario file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw scenario_error(std::string("malformed scenario: ") + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Solutions

/// Non-finite numbers become the strings "inf"/"-inf"/"nan".
inline nlohmann::json json_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline nlohmann::json to_json(const Problem1Solution& s, double beta) {
  return {{"q", s.q_star},
          {"beta", beta},
          {"f_c", detail::count_cached(s.q_star)},
          {"objective", json_number(s.objective)},
          {"iterations", 1},
          {"multipliers", {{"tau", json_number(s.tau)}}},
          {"kkt_residual", s.kkt_residual}};
}

inline nlohmann::json to_json(const Problem2Solution& s) {
  nlohmann::json trace = nlohmann::json::array();
  for (double v : s.trace) trace.push_back(json_number(v));
  return {{"q", s.q_star},
          {"beta", s.beta_star},
          {"f_c", s.f_c_star},
          {"objective", json_number(s.objective)},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"multipliers", {{"eta", s.eta}}},
          {"trace", trace}};
}

}  // namespace cachemeta
