#include <doctest.h>

#include <cmath>

#include "weakspk/aam.hpp"
#include "weakspk/rng.hpp"

using namespace weakspk;

TEST_CASE("zero margin with symmetric logits gives ln 2") {
  AamConfig aam;
  aam.margin = 0.0;
  aam.scale = 30.0;
  Vector l(2);
  l << 0.3, 0.3;
  const AamResult r = aam_loss(l, 0, aam);
  CHECK(r.posterior(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.posterior(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("margin strictly shrinks the target logit on the main branch") {
  const double m = 0.1;
  for (double l = -std::cos(m) + 1e-3; l < 1.0; l += 0.01) {
    const double penalized = margin_penalize(l, m);
    CHECK(penalized < l);
  }
  // Fallback branch below cos(pi - m).
  const double low = -std::cos(m) - 0.05;
  CHECK(margin_penalize(low, m) ==
        doctest::Approx(low - m * std::sin(m)).epsilon(1e-12));
}

TEST_CASE("posterior matches a direct softmax oracle") {
  Rng rng(99);
  AamConfig aam;
  for (int trial = 0; trial < 200; ++trial) {
    Vector l(5);
    for (int j = 0; j < 5; ++j) l(j) = rng.uniform(-1.0, 1.0);
    const int target = rng.uniform_int(5);
    const AamResult r = aam_loss(l, target, aam);
    CHECK(r.posterior.sum() == doctest::Approx(1.0).epsilon(1e-12));

    Vector scaled = l;
    scaled(target) = margin_penalize(l(target), aam.margin);
    scaled *= aam.scale;
    double z = 0;
    for (int j = 0; j < 5; ++j) z += std::exp(scaled(j));
    for (int j = 0; j < 5; ++j)
      CHECK(r.posterior(j) ==
            doctest::Approx(std::exp(scaled(j)) / z).epsilon(1e-9));
    CHECK(r.loss ==
          doctest::Approx(-std::log(std::exp(scaled(target)) / z))
              .epsilon(1e-9));
  }
}

TEST_CASE("loss gradients: normalizations and the error-signal norm") {
  Rng rng(123);
  AamConfig aam;
  for (AggregationKind kind :
       {AggregationKind::LogSumExp, AggregationKind::Max}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int clusters = 1 + rng.uniform_int(5);
      const int classes = 2 + rng.uniform_int(5);
      const double tau = rng.uniform(0.05, 1.0);
      Matrix o(clusters, classes);
      for (int i = 0; i < o.size(); ++i)
        o.data()[i] = rng.uniform(-1.0, 1.0);
      const int target = rng.uniform_int(classes);
      const RecordingLoss rl = recording_loss(o, target, kind, tau, aam);

      // Cluster posteriors sum to one per class.
      for (int j = 0; j < classes; ++j) {
        const Vector w = aggregation_weights(o.col(j), kind, tau);
        CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
      }
      // Error signals over classes sum to zero.
      double eps_sum = 0;
      for (int j = 0; j < classes; ++j)
        eps_sum += rl.posterior(j) - (j == target ? 1.0 : 0.0);
      CHECK(eps_sum == doctest::Approx(0.0).epsilon(1e-12));

      // For a non-target class the L1 norm of the gradient column equals
      // s * p(j|S): small posterior means small gradient.
      for (int j = 0; j < classes; ++j) {
        if (j == target) continue;
        CHECK(rl.d_logits.col(j).lpNorm<1>() ==
              doctest::Approx(aam.scale * rl.posterior(j)).epsilon(1e-9));
      }

      if (kind == AggregationKind::Max) {
        // Gradient sparsity: only the argmax cluster carries gradient.
        for (int j = 0; j < classes; ++j) {
          const int arg = argmax_lowest(o.col(j));
          for (int c = 0; c < clusters; ++c)
            if (c != arg) CHECK(rl.d_logits(c, j) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("aam config validation") {
  AamConfig bad;
  bad.scale = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.scale = 30;
  bad.margin = 1.6;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.margin = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
