#include <doctest.h>

#include <cmath>

#include "weakspk/aggregation.hpp"
#include "weakspk/rng.hpp"

using namespace weakspk;

TEST_CASE("constant vector aggregates to itself for both kinds") {
  for (double v : {-0.7, 0.0, 0.42}) {
    const Vector o = Vector::Constant(5, v);
    CHECK(aggregate(o, AggregationKind::Max, 0.0) == doctest::Approx(v));
    for (double tau : {0.05, 0.5, 2.0})
      CHECK(aggregate(o, AggregationKind::LogSumExp, tau) ==
            doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("log-sum-exp against a high-precision oracle") {
  Vector o(3);
  o << 0.9, -0.2, 0.1;
  const double tau = 0.5;
  // Long-double evaluation of tau*log((1/C) sum exp(o/tau)).
  const long double oracle =
      0.5L * std::log((std::exp(1.8L) + std::exp(-0.4L) + std::exp(0.2L)) /
                      3.0L);
  const double got = aggregate(o, AggregationKind::LogSumExp, tau);
  CHECK(std::abs(got - static_cast<double>(oracle)) < 1e-12);
  CHECK(got == doctest::Approx(0.4867367748057514).epsilon(1e-12));
  CHECK(got <= 0.9);
  CHECK(got >= 0.9 - tau * std::log(3.0));
}

TEST_CASE("tiny temperature collapses to max") {
  Vector o(3);
  o << 0.9, -0.2, 0.1;
  const double got = aggregate(o, AggregationKind::LogSumExp, 1e-4);
  CHECK(std::abs(got - 0.9) <= 1e-4 * std::log(3.0));
}

TEST_CASE("sandwich, bounds, permutation and monotonicity properties") {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const int c = 1 + rng.uniform_int(8);
    const double tau = rng.uniform(0.01, 2.0);
    Vector o(c);
    for (int i = 0; i < c; ++i) o(i) = rng.uniform(-1.0, 1.0);

    const double lse = aggregate(o, AggregationKind::LogSumExp, tau);
    const double mx = aggregate(o, AggregationKind::Max, 0.0);
    CHECK(mx == o.maxCoeff());
    CHECK(lse <= mx + 1e-12);
    CHECK(lse >= mx - tau * std::log(static_cast<double>(c)) - 1e-12);
    CHECK(lse >= -1.0 - 1e-12);
    CHECK(lse <= 1.0 + 1e-12);

    // Permutation invariance.
    std::vector<int> perm(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    Vector po(c);
    for (int i = 0; i < c; ++i) po(i) = o(perm[static_cast<size_t>(i)]);
    CHECK(aggregate(po, AggregationKind::LogSumExp, tau) ==
          doctest::Approx(lse).epsilon(1e-12));
    CHECK(aggregate(po, AggregationKind::Max, 0.0) == mx);

    // Increasing any entry never decreases either aggregation.
    const int bump = rng.uniform_int(c);
    Vector o2 = o;
    o2(bump) += rng.uniform(0.0, 0.5);
    CHECK(aggregate(o2, AggregationKind::LogSumExp, tau) >= lse - 1e-12);
    CHECK(aggregate(o2, AggregationKind::Max, 0.0) >= mx);
  }
}

TEST_CASE("aggregation weights are cluster posteriors") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 1 + rng.uniform_int(6);
    const double tau = rng.uniform(0.05, 1.0);
    Vector o(c);
    for (int i = 0; i < c; ++i) o(i) = rng.uniform(-1.0, 1.0);
    const Vector w = aggregation_weights(o, AggregationKind::LogSumExp, tau);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.minCoeff() >= 0.0);
    // Direct softmax oracle.
    for (int i = 0; i < c; ++i) {
      double z = 0;
      for (int k = 0; k < c; ++k) z += std::exp((o(k) - o(i)) / tau);
      CHECK(w(i) == doctest::Approx(1.0 / z).epsilon(1e-9));
    }
  }
}

TEST_CASE("max weights are one-hot with lowest-index tie-break") {
  Vector o(4);
  o << 0.2, 0.7, 0.7, -0.1;
  const Vector w = aggregation_weights(o, AggregationKind::Max, 0.0);
  CHECK(w(0) == 0.0);
  CHECK(w(1) == 1.0);
  CHECK(w(2) == 0.0);
  CHECK(w(3) == 0.0);
}

TEST_CASE("lse with non-positive temperature is a config error") {
  Vector o = Vector::Zero(3);
  CHECK_THROWS_AS(aggregate(o, AggregationKind::LogSumExp, 0.0), ConfigError);
  CHECK_THROWS_AS(aggregation_weights(o, AggregationKind::LogSumExp, -1.0),
                  ConfigError);
  AggregationConfig bad;
  bad.tau_start = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("temperature schedule hits both endpoints") {
  AggregationConfig cfg;
  cfg.tau_start = 0.5;
  cfg.tau_end = 0.1;
  cfg.schedule = TemperatureSchedule::LinearPerEpoch;
  CHECK(cfg.tau_at(0, 10) == doctest::Approx(0.5));
  CHECK(cfg.tau_at(9, 10) == doctest::Approx(0.1));
  CHECK(cfg.tau_at(4, 10) > cfg.tau_at(5, 10));
  cfg.schedule = TemperatureSchedule::Constant;
  CHECK(cfg.tau_at(9, 10) == doctest::Approx(0.5));
}
