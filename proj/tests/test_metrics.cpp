#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "weakspk/features.hpp"
#include "weakspk/metrics.hpp"
#include "weakspk/rng.hpp"

using namespace weakspk;

namespace {

ScoreSet make_scores(const std::vector<double>& targets,
                     const std::vector<double>& nontargets) {
  ScoreSet s;
  for (double v : targets) s.scores.push_back(ScoredTrial{0, 1, v, true});
  for (double v : nontargets) s.scores.push_back(ScoredTrial{0, 1, v, false});
  return s;
}

// Independent exhaustive-threshold oracle: recount misses and false alarms
// for every candidate threshold by brute force, then apply the same
// interpolation rule at the crossing.
double eer_oracle(const ScoreSet& scores) {
  std::vector<double> thresholds;
  for (const auto& s : scores.scores) thresholds.push_back(s.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double nt = 0, nn = 0;
  for (const auto& s : scores.scores) (s.is_target ? nt : nn) += 1;

  std::vector<std::pair<double, double>> points{{0.0, 1.0}};
  for (double th : thresholds) {
    double miss = 0, fa = 0;
    for (const auto& s : scores.scores) {
      if (s.is_target && s.score < th) miss += 1;
      if (!s.is_target && s.score >= th) fa += 1;
    }
    points.emplace_back(miss / nt, fa / nn);
  }
  points.emplace_back(1.0, 0.0);
  for (size_t i = 1; i < points.size(); ++i) {
    const double d0 = points[i - 1].first - points[i - 1].second;
    const double d1 = points[i].first - points[i].second;
    if (d1 < 0) continue;
    if (d1 == 0.0) return std::min(points[i].first, 0.5);
    const double t = -d0 / (d1 - d0);
    return std::min(
        points[i - 1].first + t * (points[i].first - points[i - 1].first),
        0.5);
  }
  return 0.5;
}

double min_dcf_oracle(const ScoreSet& scores, double p_tar) {
  std::vector<double> thresholds;
  for (const auto& s : scores.scores) thresholds.push_back(s.score);
  thresholds.push_back(std::numeric_limits<double>::infinity());
  double nt = 0, nn = 0;
  for (const auto& s : scores.scores) (s.is_target ? nt : nn) += 1;
  double best = std::numeric_limits<double>::infinity();
  for (double th : thresholds) {
    double miss = 0, fa = 0;
    for (const auto& s : scores.scores) {
      if (s.is_target && s.score < th) miss += 1;
      if (!s.is_target && s.score >= th) fa += 1;
    }
    best = std::min(best, p_tar * miss / nt + (1 - p_tar) * fa / nn);
  }
  // Accept-all corresponds to any threshold at or below the minimum score.
  best = std::min(best, 1 - p_tar);
  return best / std::min(p_tar, 1 - p_tar);
}

ScoreSet random_scores(Rng& rng, int n) {
  ScoreSet s;
  for (int i = 0; i < n; ++i) {
    const bool target = rng.uniform() < 0.4;
    // Weak separation so crossings land between operating points.
    const double score =
        (target ? 0.3 : -0.3) + rng.normal() * 1.2;
    s.scores.push_back(ScoredTrial{i, i + 1, score, target});
  }
  return s;
}

}  // namespace

TEST_CASE("eer closed forms") {
  CHECK(eer(make_scores({2, 3}, {0, 1})) == 0.0);
  CHECK(eer(make_scores({1, 3}, {0, 2})) == 0.5);
}

TEST_CASE("min dcf closed forms") {
  CHECK(min_dcf(make_scores({2, 3}, {0, 1})) == 0.0);
  // All-equal scores: accept-all or reject-all, whichever is cheaper.
  CHECK(min_dcf(make_scores({1, 1, 1}, {1, 1})) == 1.0);
}

TEST_CASE("eer and min dcf match the exhaustive oracle on random sets") {
  Rng rng(404);
  for (int rep = 0; rep < 20; ++rep) {
    const ScoreSet s = random_scores(rng, 1000);
    CHECK(std::abs(eer(s) - eer_oracle(s)) < 1e-12);
    CHECK(std::abs(min_dcf(s, 0.05) - min_dcf_oracle(s, 0.05)) < 1e-12);
  }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
  Rng rng(405);
  const ScoreSet s = random_scores(rng, 400);
  const double base_eer = eer(s);
  const double base_dcf = min_dcf(s);
  ScoreSet tanh_scores = s, affine_scores = s, exp_scores = s;
  for (size_t i = 0; i < s.scores.size(); ++i) {
    tanh_scores.scores[i].score = std::tanh(s.scores[i].score);
    affine_scores.scores[i].score = 3.5 * s.scores[i].score + 11.0;
    exp_scores.scores[i].score = std::exp(s.scores[i].score);
  }
  for (const ScoreSet* t : {&tanh_scores, &affine_scores, &exp_scores}) {
    CHECK(eer(*t) == doctest::Approx(base_eer).epsilon(1e-12));
    CHECK(min_dcf(*t) == doctest::Approx(base_dcf).epsilon(1e-12));
  }
}

TEST_CASE("metrics stay in their stated ranges") {
  Rng rng(406);
  for (int rep = 0; rep < 50; ++rep) {
    ScoreSet s;
    const int n = 20 + rng.uniform_int(200);
    for (int i = 0; i < n; ++i)
      s.scores.push_back(
          ScoredTrial{0, 1, rng.normal(), rng.uniform() < 0.5});
    bool has_t = false, has_n = false;
    for (const auto& x : s.scores) (x.is_target ? has_t : has_n) = true;
    if (!has_t || !has_n) continue;
    const double e = eer(s);
    CHECK(e >= 0.0);
    CHECK(e <= 0.5);
    const double d = min_dcf(s);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0 + 1e-12);
  }
}

TEST_CASE("duplicating one trial moves eer by at most 1/min-class-count") {
  Rng rng(407);
  for (int rep = 0; rep < 20; ++rep) {
    const ScoreSet s = random_scores(rng, 120);
    int nt = 0, nn = 0;
    for (const auto& x : s.scores) (x.is_target ? nt : nn)++;
    const double before = eer(s);
    ScoreSet dup = s;
    dup.scores.push_back(
        s.scores[static_cast<size_t>(rng.uniform_int(120))]);
    const double after = eer(dup);
    CHECK(std::abs(after - before) <=
          1.0 / static_cast<double>(std::min(nt, nn)) + 1e-12);
  }
}

TEST_CASE("score set validation requires both trial kinds") {
  ScoreSet s = make_scores({1.0}, {});
  CHECK_THROWS_AS(eer(s), ConfigError);
}

TEST_CASE("trial scoring equals the pairwise dot-product oracle") {
  Rng rng(408);
  NetConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = {8};
  cfg.embedding_dim = 6;
  const EmbeddingNet net = EmbeddingNet::init(cfg, rng);

  std::vector<FeatureMatrix> storage(4);
  std::map<int, const FeatureMatrix*> utts;
  for (int u = 0; u < 4; ++u) {
    storage[static_cast<size_t>(u)].frames = Matrix(5, 50);
    for (int i = 0; i < storage[static_cast<size_t>(u)].frames.size(); ++i)
      storage[static_cast<size_t>(u)].frames.data()[i] = rng.normal();
    utts[u] = &storage[static_cast<size_t>(u)];
  }
  storage[3] = storage[2];  // identical utterances

  TrialList trials;
  trials.trials = {Trial{0, 1, false}, Trial{1, 2, false}, Trial{2, 3, true},
                   Trial{0, 2, false}};
  const ScoreSet scores = score_trials(net, trials, utts);

  const auto embed = [&](int u) {
    Matrix m = utts.at(u)->frames;
    instance_normalize_inplace(m);
    return forward_embed(net, m);
  };
  for (size_t i = 0; i < trials.trials.size(); ++i) {
    const Vector a = embed(trials.trials[i].enroll_id);
    const Vector b = embed(trials.trials[i].test_id);
    CHECK(scores.scores[i].score == doctest::Approx(a.dot(b)).epsilon(1e-9));
    CHECK(scores.scores[i].score <= 1.0 + 1e-6);
    CHECK(scores.scores[i].score >= -1.0 - 1e-6);
  }
  // Identical utterances score 1.
  CHECK(scores.scores[2].score == doctest::Approx(1.0).epsilon(1e-6));

  TrialList missing;
  missing.trials = {Trial{0, 99, false}};
  CHECK_THROWS_AS(score_trials(net, missing, utts), MissingArtifactError);
}
