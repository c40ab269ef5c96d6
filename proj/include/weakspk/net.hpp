#pragma once

#include <filesystem>
#include <vector>

#include "weakspk/rng.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

struct NetConfig {
  int input_dim = 20;
  std::vector<int> hidden = {128, 128};
  int embedding_dim = 64;
};

// Segment embedding extractor: a frame-wise affine+tanh stack, statistics
// pooling (per-dimension mean and standard deviation over time), an affine
// projection, and length normalization.  Embeddings are unit-norm.
struct EmbeddingNet {
  NetConfig cfg;
  std::vector<Matrix> weights;  // hidden layers then the output projection
  std::vector<Vector> biases;

  static EmbeddingNet init(const NetConfig& cfg, Rng& rng);
  int num_layers() const { return static_cast<int>(weights.size()); }
};

// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> activations;  // per hidden layer, width x T
  Vector mean;
  Vector stddev;    // sqrt(var + 1e-8)
  Vector pooled;    // [mean; stddev]
  Vector pre_norm;  // affine output before length normalization
  Vector embedding; // unit norm
};

// segment is F x T, already instance-normalized.
void forward_embed(const EmbeddingNet& net, const Matrix& segment,
                   ForwardTrace& trace);
Vector forward_embed(const EmbeddingNet& net, const Matrix& segment);

struct NetGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static NetGrads zeros_like(const EmbeddingNet& net);
  void set_zero();
  void add(const NetGrads& other, double scale);
  bool all_finite() const;
};

// Accumulates dL/dparams given dL/dembedding; explicit adjoints through the
// length normalization, the pooling statistics and the tanh stack.
void backward_embed(const EmbeddingNet& net, const Matrix& segment,
                    const ForwardTrace& trace, const Vector& d_embedding,
                    NetGrads& grads);

// Per-celebrity unit vectors, optionally K sub-centers per class.  Rows are
// re-normalized after every optimizer step.
struct ClassificationHead {
  int num_classes = 0;
  int sub_centers = 1;
  Matrix rows;                 // (J*K) x D, unit rows
  std::vector<int> class_ids;  // celebrity id per class

  static ClassificationHead init(int num_classes, int sub_centers,
                                 int embedding_dim, Rng& rng,
                                 std::vector<int> class_ids = {});
  void renormalize_rows();
};

// o(c, j) = max_k h_{j,k}^T z_c.  With K=1 this is a plain dot product.
// `which_sub` (C x J), when given, records the winning sub-center for the
// backward route (ties resolve to the lowest sub-center index).
Matrix segment_similarities(const ClassificationHead& head,
                            const Matrix& embeddings /* D x C */,
                            Eigen::MatrixXi* which_sub = nullptr);

// Model checkpoint: versioned header, dimensions, class ids, then
// little-endian 64-bit float parameter blocks.
struct Checkpoint {
  EmbeddingNet net;
  ClassificationHead head;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace weakspk
