#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "util/fd_check.hpp"
#include "weakspk/net.hpp"
#include "weakspk/rng.hpp"

using namespace weakspk;

namespace {

EmbeddingNet small_net(uint64_t seed, int input_dim = 6, int embedding = 8) {
  Rng rng(seed);
  NetConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden = {16, 16};
  cfg.embedding_dim = embedding;
  return EmbeddingNet::init(cfg, rng);
}

Matrix random_segment(Rng& rng, int dim, int frames) {
  Matrix m(dim, frames);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("embeddings are unit norm") {
  Rng rng(1);
  const EmbeddingNet net = small_net(2);
  for (int i = 0; i < 20; ++i) {
    const Vector z = forward_embed(net, random_segment(rng, 6, 30));
    CHECK(std::abs(z.norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("statistics pooling is order invariant over time") {
  Rng rng(3);
  const EmbeddingNet net = small_net(4);
  const Matrix seg = random_segment(rng, 6, 40);
  const Vector z = forward_embed(net, seg);
  std::vector<int> perm(40);
  for (int i = 0; i < 40; ++i) perm[static_cast<size_t>(i)] = i;
  rng.shuffle(perm);
  Matrix shuffled(6, 40);
  for (int i = 0; i < 40; ++i)
    shuffled.col(i) = seg.col(perm[static_cast<size_t>(i)]);
  const Vector z2 = forward_embed(net, shuffled);
  CHECK((z - z2).norm() < 1e-6);
}

TEST_CASE("similarities: self-dot, orthogonality and a brute-force oracle") {
  Rng rng(5);
  ClassificationHead head = ClassificationHead::init(3, 1, 4, rng);
  // z equal to a head row scores 1 on that class.
  Matrix z = head.rows.row(1).transpose();
  Matrix o = segment_similarities(head, z);
  CHECK(o(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

  // Orthogonal embedding scores zero.
  Vector v = head.rows.row(0).transpose();
  Vector other(4);
  other << v(1), -v(0), v(3), -v(2);  // orthogonal by construction
  CHECK(std::abs(v.dot(other)) < 1e-12);
  o = segment_similarities(head, Matrix(other));
  CHECK(std::abs(o(0, 0)) < 1e-9);

  // Random batch against an elementwise dot-product oracle.
  Matrix embeddings(4, 5);
  for (int i = 0; i < embeddings.size(); ++i)
    embeddings.data()[i] = rng.normal();
  embeddings.colwise().normalize();
  o = segment_similarities(head, embeddings);
  for (int c = 0; c < 5; ++c)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int d = 0; d < 4; ++d) dot += head.rows(j, d) * embeddings(d, c);
      CHECK(o(c, j) == doctest::Approx(dot).epsilon(1e-9));
      CHECK(o(c, j) <= 1.0 + 1e-6);
      CHECK(o(c, j) >= -1.0 - 1e-6);
    }
}

TEST_CASE("sub-center similarities take the max, ties to the lower index") {
  Rng rng(6);
  ClassificationHead head = ClassificationHead::init(2, 2, 4, rng);
  head.rows.row(0) << 1, 0, 0, 0;
  head.rows.row(1) << 1, 0, 0, 0;  // identical sub-centers: tie
  head.rows.row(2) << 0, 1, 0, 0;
  head.rows.row(3) << 0, 0, 1, 0;
  Vector z(4);
  z << 0.5, 0.1, 0.8, 0.0;
  z.normalize();
  Eigen::MatrixXi which;
  const Matrix o = segment_similarities(head, Matrix(z), &which);
  CHECK(o(0, 0) == doctest::Approx(z(0)));
  CHECK(which(0, 0) == 0);  // tie broken to sub-center 0
  CHECK(o(0, 1) == doctest::Approx(std::max(z(1), z(2))));
  CHECK(which(0, 1) == 1);
  // Max dominance over both sub-centers.
  CHECK(o(0, 1) >= z(1));
  CHECK(o(0, 1) >= z(2));
}

TEST_CASE("backward pass matches central finite differences") {
  using namespace weakspk::testutil;
  AamConfig aam;
  aam.margin = 0.1;
  const FdInstance inst = make_instance(3, 4, 8, 6, 12, 1, 77);
  CHECK(max_fd_rel_error(inst, AggregationKind::LogSumExp, 0.3, aam, 1e-5) <
        1e-5);
  CHECK(max_fd_rel_error(inst, AggregationKind::Max, 0.0, aam, 1e-5) < 1e-5);
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Rng rng(9);
  Checkpoint ckpt;
  ckpt.net = small_net(10);
  ckpt.head = ClassificationHead::init(5, 2, 8, rng, {3, 7, 9, 11, 20});
  ckpt.seed = 99;
  ckpt.config_hash = 0xdeadbeefcafe1234ull;
  const auto path = std::filesystem::temp_directory_path() /
                    "weakspk_test_ckpt.bin";
  save_checkpoint(path, ckpt);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.seed == ckpt.seed);
  CHECK(loaded.config_hash == ckpt.config_hash);
  CHECK(loaded.head.class_ids == ckpt.head.class_ids);
  CHECK(loaded.net.cfg.hidden == ckpt.net.cfg.hidden);
  for (size_t l = 0; l < ckpt.net.weights.size(); ++l) {
    CHECK(loaded.net.weights[l] == ckpt.net.weights[l]);
    CHECK(loaded.net.biases[l] == ckpt.net.biases[l]);
  }
  CHECK(loaded.head.rows == ckpt.head.rows);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path = std::filesystem::temp_directory_path() /
                    "weakspk_bad_ckpt.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTACKPTxxxxxxxxxxxxxxxx", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"),
                  MissingArtifactError);
  std::filesystem::remove(path);
}
