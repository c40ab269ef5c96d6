#include <doctest.h>

#include <cmath>
#include <sstream>

#include "weakspk/diarization.hpp"
#include "weakspk/rng.hpp"

using namespace weakspk;

namespace {

Matrix gaussian_stream(Rng& rng, const Vector& mean, double stddev,
                       int frames) {
  Matrix out(mean.size(), frames);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < mean.size(); ++d)
      out(d, t) = mean(d) + stddev * rng.normal();
  return out;
}

// Direct (non-cumulative) Gaussian statistics for oracle checks.
SegmentGaussian direct_stats(const Matrix& frames) {
  SegmentGaussian g;
  g.count = static_cast<double>(frames.cols());
  g.mean = frames.rowwise().mean();
  Matrix centered = frames.colwise() - g.mean;
  g.covariance = centered * centered.transpose() / g.count;
  return g;
}

FeatureMatrix wrap(Matrix m) {
  FeatureMatrix f;
  f.frames = std::move(m);
  return f;
}

}  // namespace

TEST_CASE("cumulative interval stats match direct evaluation") {
  Rng rng(5);
  const Matrix frames = gaussian_stream(rng, Vector::Zero(4), 1.0, 200);
  const CumulativeStats stats(frames);
  for (auto [a, b] : std::vector<std::pair<int, int>>{
           {0, 200}, {10, 50}, {150, 200}, {99, 101}}) {
    const SegmentGaussian fast = stats.interval(a, b);
    const SegmentGaussian slow = direct_stats(frames.middleCols(a, b - a));
    CHECK((fast.mean - slow.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fast.covariance - slow.covariance).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("delta BIC is symmetric") {
  Rng rng(6);
  const Matrix a = gaussian_stream(rng, Vector::Zero(5), 1.0, 300);
  Vector shifted = Vector::Constant(5, 2.0);
  const Matrix b = gaussian_stream(rng, shifted, 1.3, 250);
  const SegmentGaussian ga = direct_stats(a), gb = direct_stats(b);
  Matrix joint_frames(5, 550);
  joint_frames << a, b;
  const SegmentGaussian gj = direct_stats(joint_frames);
  const double ab = delta_bic(ga, gb, gj, 1.0);
  const double ba = delta_bic(gb, ga, gj, 1.0);
  CHECK(std::abs(ab - ba) < 1e-9);
}

TEST_CASE("stationary stream yields one chunk; oracle sees no positive dBIC") {
  Rng rng(7);
  const int total = 1200, dim = 6, win = 150, min_chunk = 100;
  const Matrix frames = gaussian_stream(rng, Vector::Zero(dim), 1.0, total);
  const auto chunks = change_detect(wrap(frames), 0, win, 1.0, min_chunk);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].start_frame == 0);
  CHECK(chunks[0].end_frame == total);

  // Oracle: evaluate dBIC directly at every admissible frame.
  for (int t = min_chunk; t <= total - min_chunk; t += 7) {
    const int w = std::min({win, t, total - t});
    const SegmentGaussian left = direct_stats(frames.middleCols(t - w, w));
    const SegmentGaussian right = direct_stats(frames.middleCols(t, w));
    const SegmentGaussian joint =
        direct_stats(frames.middleCols(t - w, 2 * w));
    CHECK(delta_bic(left, right, joint, 1.0) <= 0.0);
  }
}

TEST_CASE("a clean source switch is found within 30 frames") {
  Rng rng(8);
  const int dim = 6;
  Vector mean_b = Vector::Zero(dim);
  mean_b.head(3).setConstant(3.0);
  Matrix frames(dim, 1000);
  frames << gaussian_stream(rng, Vector::Zero(dim), 0.7, 500),
      gaussian_stream(rng, mean_b, 0.7, 500);
  const auto chunks = change_detect(wrap(frames), 0, 150, 1.0, 100);
  REQUIRE(chunks.size() == 2);
  CHECK(std::abs(chunks[0].end_frame - 500) <= 30);
}

TEST_CASE("short input degenerates to a single chunk") {
  Rng rng(9);
  const Matrix frames = gaussian_stream(rng, Vector::Zero(4), 1.0, 150);
  const auto chunks = change_detect(wrap(frames), 3, 150, 1.0, 100);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].recording_id == 3);
  CHECK(chunks[0].length() == 150);
}

TEST_CASE("ahc merges identically distributed chunks (sign oracle)") {
  Rng rng(10);
  const int dim = 5;
  Matrix frames(dim, 1200);
  frames << gaussian_stream(rng, Vector::Zero(dim), 1.0, 600),
      gaussian_stream(rng, Vector::Zero(dim), 1.0, 600);
  const std::vector<Chunk> chunks{{0, 0, 600}, {0, 600, 1200}};
  // Oracle: the stated formula is negative for same-distribution halves.
  const SegmentGaussian a = direct_stats(frames.middleCols(0, 600));
  const SegmentGaussian b = direct_stats(frames.middleCols(600, 600));
  const SegmentGaussian j = direct_stats(frames);
  CHECK(delta_bic(a, b, j, 2.5) < 0.0);

  const Clustering clustering = bic_ahc(chunks, wrap(frames), 2.5);
  CHECK(clustering.num_clusters() == 1);
  CHECK(clustering.clusters[0].size() == 2);
}

TEST_CASE("ahc keeps well-separated sources apart with perfect purity") {
  Rng rng(11);
  const int dim = 5;
  Vector far = Vector::Constant(dim, 4.0);
  Matrix frames(dim, 1600);
  frames << gaussian_stream(rng, Vector::Zero(dim), 0.6, 400),
      gaussian_stream(rng, far, 0.6, 400),
      gaussian_stream(rng, Vector::Zero(dim), 0.6, 400),
      gaussian_stream(rng, far, 0.6, 400);
  const std::vector<Chunk> chunks{
      {0, 0, 400}, {0, 400, 800}, {0, 800, 1200}, {0, 1200, 1600}};
  const Clustering clustering = bic_ahc(chunks, wrap(frames), 2.5);
  REQUIRE(clustering.num_clusters() == 2);
  std::vector<int> gt(1600);
  for (int t = 0; t < 1600; ++t) gt[static_cast<size_t>(t)] = (t / 400) % 2;
  const auto [purity, coverage] = purity_coverage(clustering, gt);
  CHECK(purity == doctest::Approx(1.0));
  CHECK(coverage == doctest::Approx(1.0));
}

TEST_CASE("ahc of a single chunk is the identity clustering") {
  Rng rng(12);
  const Matrix frames = gaussian_stream(rng, Vector::Zero(4), 1.0, 300);
  const Clustering clustering =
      bic_ahc({Chunk{7, 0, 300}}, wrap(frames), 2.5);
  CHECK(clustering.recording_id == 7);
  REQUIRE(clustering.num_clusters() == 1);
  CHECK(clustering.clusters[0][0].length() == 300);
}

TEST_CASE("lower lambda never reduces the cluster count") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    Rng rng(seed);
    const int dim = 5;
    Vector far = Vector::Constant(dim, 2.5);
    Matrix frames(dim, 1200);
    frames << gaussian_stream(rng, Vector::Zero(dim), 0.9, 300),
        gaussian_stream(rng, far, 0.9, 300),
        gaussian_stream(rng, Vector::Zero(dim), 0.9, 300),
        gaussian_stream(rng, far, 0.9, 300);
    const std::vector<Chunk> chunks{
        {0, 0, 300}, {0, 300, 600}, {0, 600, 900}, {0, 900, 1200}};
    int prev = -1;
    for (double lambda : {0.5, 1.0, 2.5, 5.0, 10.0}) {
      const int count =
          bic_ahc(chunks, wrap(frames), lambda).num_clusters();
      if (prev >= 0) CHECK(count <= prev);
      prev = count;
    }
  }
}

TEST_CASE("viterbi refinement is a fixed point on correct boundaries") {
  Rng rng(31);
  const int dim = 6;
  Vector far = Vector::Constant(dim, 3.5);
  Matrix frames(dim, 1000);
  frames << gaussian_stream(rng, Vector::Zero(dim), 0.7, 500),
      gaussian_stream(rng, far, 0.7, 500);
  Clustering correct;
  correct.recording_id = 0;
  correct.clusters = {{Chunk{0, 0, 500}}, {Chunk{0, 500, 1000}}};
  DiarizationConfig cfg;
  const Clustering refined = viterbi_refine(correct, wrap(frames), cfg);
  REQUIRE(refined.num_clusters() == 2);
  // Boundary stays within 5 frames of 500.
  const int end0 = refined.clusters[0].back().end_frame;
  CHECK(std::abs(end0 - 500) <= 5);
}

TEST_CASE("viterbi refinement shrinks a perturbed boundary error") {
  Rng rng(32);
  const int dim = 6;
  Vector far = Vector::Constant(dim, 3.5);
  Matrix frames(dim, 1000);
  frames << gaussian_stream(rng, Vector::Zero(dim), 0.7, 500),
      gaussian_stream(rng, far, 0.7, 500);
  Clustering perturbed;
  perturbed.recording_id = 0;
  perturbed.clusters = {{Chunk{0, 0, 520}}, {Chunk{0, 520, 1000}}};
  DiarizationConfig cfg;
  const Clustering refined = viterbi_refine(perturbed, wrap(frames), cfg);
  REQUIRE(refined.num_clusters() == 2);
  const int end0 = refined.clusters[0].back().end_frame;
  CHECK(std::abs(end0 - 500) < 20);
}

TEST_CASE("viterbi with a single cluster returns the input") {
  Rng rng(33);
  const Matrix frames = gaussian_stream(rng, Vector::Zero(4), 1.0, 400);
  Clustering one;
  one.recording_id = 5;
  one.clusters = {{Chunk{5, 0, 250}, Chunk{5, 250, 400}}};
  DiarizationConfig cfg;
  const Clustering refined = viterbi_refine(one, wrap(frames), cfg);
  CHECK(refined.num_clusters() == 1);
  CHECK(refined.clusters[0].size() == 2);
  CHECK(refined.clusters[0][0].end_frame == 250);
}

TEST_CASE("diag gmm: separates its own data and falls back when tiny") {
  Rng rng(41);
  Matrix a = gaussian_stream(rng, Vector::Zero(4), 0.5, 300);
  Vector far = Vector::Constant(4, 3.0);
  Matrix b = gaussian_stream(rng, far, 0.5, 300);
  const DiagGmm gmm_a = train_diag_gmm(a, 4, 10);
  const DiagGmm gmm_b = train_diag_gmm(b, 4, 10);
  int wins = 0;
  for (int t = 0; t < 300; ++t)
    if (gmm_a.log_pdf(a.col(t)) > gmm_b.log_pdf(a.col(t))) ++wins;
  CHECK(wins > 290);

  const DiagGmm tiny = train_diag_gmm(a.leftCols(5), 8, 10);
  CHECK(tiny.log_weights.size() == 1);  // single-Gaussian fallback
}

TEST_CASE("purity and coverage counting") {
  // Ground truth: two speakers, 100 frames each.
  std::vector<int> gt(200);
  for (int t = 100; t < 200; ++t) gt[static_cast<size_t>(t)] = 1;

  Clustering identity;
  identity.clusters = {{Chunk{0, 0, 100}}, {Chunk{0, 100, 200}}};
  auto [p1, c1] = purity_coverage(identity, gt);
  CHECK(p1 == doctest::Approx(1.0));
  CHECK(c1 == doctest::Approx(1.0));

  // Every ground-truth chunk its own cluster: purity 1, coverage is the
  // largest per-speaker chunk fraction.
  Clustering shattered;
  shattered.clusters = {{Chunk{0, 0, 60}},
                        {Chunk{0, 60, 100}},
                        {Chunk{0, 100, 170}},
                        {Chunk{0, 170, 200}}};
  auto [p2, c2] = purity_coverage(shattered, gt);
  CHECK(p2 == doctest::Approx(1.0));
  CHECK(c2 == doctest::Approx(0.5 * (0.6 + 0.7)));

  // One cluster holding everything, equal speakers: purity 0.5.
  Clustering lumped;
  lumped.clusters = {{Chunk{0, 0, 200}}};
  auto [p3, c3] = purity_coverage(lumped, gt);
  CHECK(p3 == doctest::Approx(0.5));
  CHECK(c3 == doctest::Approx(1.0));
}

TEST_CASE("rttm lines are bit-exact") {
  Clustering clustering;
  clustering.recording_id = 12;
  clustering.clusters = {{Chunk{12, 0, 150}, Chunk{12, 350, 500}},
                         {Chunk{12, 150, 350}}};
  std::ostringstream os;
  write_rttm(os, "rec_00012", clustering, 10.0);
  CHECK(os.str() ==
        "SPEAKER rec_00012 1 0.00 1.50 <NA> <NA> c0 <NA> <NA>\n"
        "SPEAKER rec_00012 1 1.50 2.00 <NA> <NA> c1 <NA> <NA>\n"
        "SPEAKER rec_00012 1 3.50 1.50 <NA> <NA> c0 <NA> <NA>\n");
}

TEST_CASE("full diarize partitions the recording") {
  Rng rng(55);
  const int dim = 5;
  Vector far = Vector::Constant(dim, 3.5);
  Matrix frames(dim, 1500);
  frames << gaussian_stream(rng, Vector::Zero(dim), 0.7, 500),
      gaussian_stream(rng, far, 0.7, 600),
      gaussian_stream(rng, Vector::Zero(dim), 0.7, 400);
  DiarizationConfig cfg;
  const Clustering clustering = diarize(wrap(frames), 1, cfg);
  CHECK(clustering.num_clusters() >= 2);
  // Chunks tile [0, T) without overlap.
  const auto chunks = clustering.all_chunks();
  int expected_start = 0;
  for (const auto& c : chunks) {
    CHECK(c.start_frame == expected_start);
    expected_start = c.end_frame;
  }
  CHECK(expected_start == 1500);
}
