#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstring>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "cachemeta/optim.hpp"
#include "cachemeta/sim.hpp"

using namespace cachemeta;
using namespace cachemeta::sim;

namespace {

NetworkParams params(double alpha, double beta, double theta) {
  NetworkParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.theta = theta;
  return p;
}

const NetworkParams kScenario = params(3.0, 0.8, 1.0);

Realization lone_server(double distance) {
  Realization real;
  real.points.push_back({distance, 0.0, distance, 0.0});
  real.cache_mark = {true};
  real.serving = 0;
  return real;
}

}  // namespace

TEST(Realization, CachingExtremes) {
  SimConfig cfg;
  cfg.region_radius = 500.0;
  const auto all = sample_realization(kScenario, 1.0, cfg, 3);
  ASSERT_GT(all.size(), 0u);
  EXPECT_TRUE(std::all_of(all.cache_mark.begin(), all.cache_mark.end(), [](bool b) { return b; }));
  EXPECT_EQ(all.serving, std::optional<std::size_t>(0));
  const auto none = sample_realization(kScenario, 0.0, cfg, 3);
  EXPECT_FALSE(none.serving.has_value());
  EXPECT_THROW(conditional_stp(none, kScenario), miss_error);
  EXPECT_THROW(none.serving_distance(), miss_error);
}

TEST(Realization, PoissonMeanCount) {
  SimConfig cfg;
  cfg.region_radius = 500.0;
  const double mean = kScenario.lambda * std::numbers::pi * 500.0 * 500.0;
  const std::size_t n = 10000;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += static_cast<double>(sample_realization(kScenario, 0.5, cfg, i).size());
  EXPECT_NEAR(total / n, mean, 3.0 * std::sqrt(mean / n));
}

TEST(Realization, PointsSortedInsideDisk) {
  SimConfig cfg;
  const auto real = sample_realization(kScenario, 0.5, cfg, 11);
  for (std::size_t i = 0; i < real.size(); ++i) {
    EXPECT_LE(real.points[i].distance, cfg.region_radius);
    EXPECT_NEAR(std::hypot(real.points[i].x, real.points[i].y), real.points[i].distance, 1e-9);
    if (i) EXPECT_GE(real.points[i].distance, real.points[i - 1].distance);
  }
}

TEST(ConditionalStp, TrivialCases) {
  EXPECT_DOUBLE_EQ(conditional_stp(lone_server(20.0), kScenario), 0.8);
  auto real = lone_server(20.0);
  real.points.push_back({0.0, 20.0, 20.0, 0.5});
  real.cache_mark.push_back(false);
  EXPECT_NEAR(conditional_stp(real, params(3.0, 1.0, 2.0)), 1.0 / 3.0, 1e-15);
}

TEST(ConditionalStp, FarFieldTermMatchesDirectIntegral) {
  // pi lambda r^2 int_{(R/r)^2}^inf beta s / (1 + s) du with s = theta u^{-3/2};
  // u = v^{-2} gives int_0^{r/R} 2 beta theta / (1 + theta v^3) dv.
  const auto p = kScenario;
  const double r = 150.0;
  const double radius = 2000.0;
  double tail = 0.0;
  const int n = 2000;
  const double h = (r / radius) / n;
  for (int i = 0; i <= n; ++i) {
    const double v = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : ((i % 2) ? 4.0 : 2.0);
    tail += w * 2.0 * p.beta * p.theta / (1.0 + p.theta * v * v * v);
  }
  tail *= h / 3.0;
  EXPECT_NEAR(far_field_exponent(p, r, radius) / (std::numbers::pi * p.lambda * r * r * tail), 1.0, 1e-8);
  EXPECT_EQ(far_field_exponent(p, r, kInfinity), 0.0);
}

TEST(ServingDistance, MatchesNearestCacherLaw) {
  SimConfig cfg;
  cfg.realizations = 3000;
  const double q = 0.5;
  const auto records = sample_records(kScenario, q, cfg);
  std::vector<double> r;
  for (const auto& rec : records)
    if (!rec.miss()) r.push_back(rec.serving_distance);
  std::sort(r.begin(), r.end());
  double sup = 0.0;
  const double n = static_cast<double>(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double cdf = 1.0 - std::exp(-std::numbers::pi * kScenario.lambda * q * r[i] * r[i]);
    sup = std::max({sup, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  EXPECT_LE(sup, dkw_half_width(r.size()));
}

TEST(Records, DeterministicAcrossWorkers) {
  SimConfig cfg;
  cfg.realizations = 300;
  cfg.region_radius = 1000.0;
  const auto one = sample_records(kScenario, 0.5, cfg);
  cfg.workers = 3;
  const auto three = sample_records(kScenario, 0.5, cfg);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].n_points, three[i].n_points);
    EXPECT_EQ(std::memcmp(&one[i].stp, &three[i].stp, sizeof(double)), 0);
  }
  const auto d1 = simulate_local_delay(kScenario, 0.5, [&] {
    auto c = cfg;
    c.workers = 1;
    c.realizations = 50;
    return c;
  }());
  const auto d4 = simulate_local_delay(kScenario, 0.5, [&] {
    auto c = cfg;
    c.workers = 4;
    c.realizations = 50;
    return c;
  }());
  EXPECT_EQ(d1.delay_histogram, d4.delay_histogram);
}

TEST(Records, CsvHeader) {
  SimConfig cfg;
  cfg.realizations = 3;
  cfg.region_radius = 300.0;
  std::ostringstream os;
  write_records_csv(os, sample_records(kScenario, 0.5, cfg));
  std::string header;
  std::getline(std::istringstream(os.str()) >> std::ws, header);
  EXPECT_EQ(header, "index,n_points,r,conditional_stp");
}

TEST(Moments, ZerothOrderAndMetaEdges) {
  SimConfig cfg;
  cfg.realizations = 500;
  const auto records = sample_records(kScenario, 0.5, cfg);
  const auto st = moments_from_records(records, {0.0, 1.0}, cfg.delay_cap);
  EXPECT_EQ(st.moment(0.0).mean, 1.0);
  const auto meta = meta_from_records(records, {0.0, 0.8, 0.9});
  EXPECT_EQ(meta.meta_ccdf[0], 1.0);
  EXPECT_EQ(meta.meta_ccdf[1], 0.0);
  EXPECT_EQ(meta.meta_ccdf[2], 0.0);
}

TEST(Moments, FirstMomentWithinThreeStandardErrors) {
  SimConfig cfg;
  const auto st = empirical_moments(kScenario, 0.5, cfg, {1.0});
  const auto& m1 = st.moment(1.0);
  EXPECT_LE(std::abs(m1.mean - moment(1.0, kScenario, 0.5)), 3.0 * m1.std_error);
}

TEST(Moments, DoublingRadiusWithinOneStandardError) {
  SimConfig cfg;
  cfg.realizations = 4000;
  const auto small = empirical_moments(kScenario, 0.5, cfg, {1.0}).moment(1.0);
  cfg.region_radius = 4000.0;
  const auto large = empirical_moments(kScenario, 0.5, cfg, {1.0}).moment(1.0);
  EXPECT_LT(std::abs(small.mean - large.mean), small.std_error);
}

TEST(LocalDelay, NoInterferersIsGeometricInBeta) {
  const auto p = params(3.0, 0.3, 1e-9);
  const DelaySimulator sim(lone_server(10.0), p);
  Rng rng(5, 0, kTrials);
  const int n = 20000;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += static_cast<double>(sim.trial(rng, 100000));
  const double sigma = std::sqrt(1.0 - 0.3) / 0.3;
  EXPECT_NEAR(s / n, 1.0 / 0.3, 3.0 * sigma / std::sqrt(n));
}

TEST(LocalDelay, GeometricLawPerRealization) {
  // Ten fixed realizations with conditional STP above 0.05, 10^4 trials each.
  SimConfig cfg;
  const auto p = kScenario;
  int tested = 0;
  for (std::uint64_t idx = 0; tested < 10 && idx < 200; ++idx) {
    const auto real = sample_realization(p, 0.5, cfg, idx);
    if (!real.serving) continue;
    const double ps = conditional_stp(real, p);
    if (ps < 0.05) continue;
    ++tested;
    const DelaySimulator sim(real, p);
    Rng rng(cfg.master_seed, idx, kTrials);
    const int trials = 10000;
    std::vector<std::size_t> counts;
    double total = 0.0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t d = sim.trial(rng, cfg.delay_cap);
      total += static_cast<double>(d);
      if (counts.size() < d) counts.resize(d, 0);
      ++counts[d - 1];
    }
    EXPECT_NEAR(total / trials * ps, 1.0, 0.03) << idx;

    // Bins d = 1..K with expected count >= 5, plus one tail bin.
    double chi2 = 0.0;
    double tail_prob = 1.0;
    std::size_t tail_count = trials;
    int bins = 0;
    for (std::size_t d = 1;; ++d) {
      const double prob = tail_prob * ps;
      if (trials * (tail_prob - prob) < 5.0) break;
      const double expected = trials * prob;
      const double observed = d <= counts.size() ? static_cast<double>(counts[d - 1]) : 0.0;
      chi2 += (observed - expected) * (observed - expected) / expected;
      tail_prob -= prob;
      tail_count -= static_cast<std::size_t>(observed);
      ++bins;
    }
    const double expected_tail = trials * tail_prob;
    chi2 += (tail_count - expected_tail) * (tail_count - expected_tail) / expected_tail;
    ++bins;
    const boost::math::chi_squared dist(bins - 1);
    EXPECT_LT(chi2, boost::math::quantile(dist, 0.99)) << idx << " p=" << ps;
  }
  EXPECT_EQ(tested, 10);
}

TEST(SystemDelay, PlacementRealizesMarginals) {
  const std::vector<double> q{0.9, 0.7, 0.4};
  std::vector<double> cum{0.0};
  for (double v : q) cum.push_back(cum.back() + v);
  Rng rng(1, 0, kPlacement);
  const int n = 200000;
  std::vector<int> hits(3, 0);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    int per_bs = 0;
    for (int f = 0; f < 3; ++f)
      if (interval_caches(u, cum[f], cum[f + 1])) {
        ++hits[f];
        ++per_bs;
      }
    ASSERT_TRUE(per_bs == 2);
  }
  for (int f = 0; f < 3; ++f) EXPECT_NEAR(hits[f] / static_cast<double>(n), q[f], 4e-3);
}

TEST(SystemDelay, Anchors) {
  const auto cat = make_catalog(4, 1.0);
  SimConfig cfg;
  cfg.realizations = 3000;
  cfg.region_radius = 1000.0;
  const auto p = params(3.0, 0.4, 1e-9);
  const auto full = simulate_system_delay(cat, CachingPolicy{std::vector<double>(4, 1.0), 4}, p, 5.0, cfg);
  EXPECT_NEAR(full.conditional.mean, 2.5, 1e-4);
  EXPECT_EQ(full.backhaul_requests, 0u);
  const auto none = simulate_system_delay(cat, CachingPolicy{std::vector<double>(4, 0.0), 1}, p, 5.0, cfg);
  EXPECT_NEAR(none.conditional.mean, uncached_delay(p, 5.0), 1e-4);
  EXPECT_EQ(none.backhaul_requests, cfg.realizations);
  EXPECT_NEAR(none.delay.mean, 7.5, 3.0 * none.delay.std_error);
}

TEST(SystemDelay, MatchesAnalyticAtOptimizedCaching) {
  const auto cat = make_catalog(5, 1.0);
  const auto p = params(3.0, 0.3, 1.0);
  // At this beta every F_c > C either is infeasible or costs more, so the
  // optimal caching is the most popular content.
  const auto best = solve_subproblem1(cat, p, 2, 2, 10.0);
  EXPECT_GT(solve_subproblem1(cat, p, 2, 3, 10.0).delay, best.delay);
  SimConfig cfg;
  cfg.realizations = 50000;
  const auto est = simulate_system_delay(cat, CachingPolicy{best.q, 2}, p, 10.0, cfg);
  EXPECT_NEAR(est.conditional.mean / best.delay, 1.0, 0.05);
  EXPECT_LE(std::abs(est.delay.mean - best.delay), 4.0 * est.delay.std_error);
  EXPECT_LT(est.censored, cfg.realizations / 1000);
}
