#pragma once

#include <vector>

#include "weakspk/aam.hpp"
#include "weakspk/aggregation.hpp"
#include "weakspk/net.hpp"
#include "weakspk/rng.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

struct TrainConfig {
  int epochs = 20;
  int batch_segments = 32;   // minibatch budget B, counted in segments
  int segment_frames = 200;  // fixed crop length T_seg
  // The AAM scale multiplies gradients by s=30, so the stable step size for
  // this small network sits well below ResNet-scale defaults.
  double learning_rate = 0.003;
  double momentum = 0.9;
  double warmup_fraction = 0.05;  // of the planned step count
  int plateau_patience = 3;
  std::vector<int> hidden = {128, 128};
  int embedding_dim = 64;
  int threads = 1;

  void validate() const;
};

// Uniform random crop of T_seg frames; shorter chunks are cyclically tiled
// starting from a random rotation.
Matrix crop_segment(const Matrix& chunk_features, int segment_frames,
                    Rng& rng);

// Training-visible view of one recording: features, weak label (as an index
// into the classification head) and the fixed diarization clustering.
// Ground truth never appears here.
struct TrainRecording {
  int recording_id = 0;
  int target_class = 0;
  const FeatureMatrix* features = nullptr;
  const Clustering* clustering = nullptr;
};

// One recording inside a minibatch: exactly one instance-normalized segment
// per cluster.
struct BatchEntry {
  int recording_id = 0;
  int target_class = 0;
  std::vector<Matrix> segments;
};
using Minibatch = std::vector<BatchEntry>;

// Epoch plan: recordings shuffled and drawn without replacement; a recording
// joins the open batch only if its cluster count fits the remaining budget,
// otherwise it starts the next batch.  Recordings with more clusters than
// the whole budget are skipped (reported via `skipped`).
std::vector<Minibatch> build_epoch(const std::vector<TrainRecording>& train,
                                   int segment_frames, int budget, Rng& rng,
                                   std::vector<int>* skipped = nullptr);

// Forward + explicit backward over one minibatch.  Per-segment passes may
// run in parallel; gradients are reduced in fixed segment order, so any
// thread count reproduces the single-threaded bits.  Returns the mean
// recording loss; gradients come back scaled the same way.
double batch_forward_backward(const EmbeddingNet& net,
                              const ClassificationHead& head,
                              const Minibatch& batch, AggregationKind kind,
                              double tau, const AamConfig& aam, int threads,
                              NetGrads& net_grads, Matrix& head_grads);

// Classical momentum SGD with linear warm-up from lr/100 to lr over the
// first warmup_steps steps, then halving on cross-validation plateau.
// Head rows are re-normalized to unit length after every applied step.
class SgdOptimizer {
 public:
  SgdOptimizer(const EmbeddingNet& net, const ClassificationHead& head,
               double learning_rate, double momentum, int warmup_steps,
               int patience);

  // Returns false (and counts the incident) when any gradient is non-finite.
  bool step(EmbeddingNet& net, ClassificationHead& head,
            const NetGrads& net_grads, const Matrix& head_grads);

  void on_cv_loss(double cv_loss);

  double current_lr() const;
  int steps_applied() const { return steps_; }
  int steps_skipped() const { return skipped_; }

 private:
  NetGrads net_velocity_;
  Matrix head_velocity_;
  double lr_target_;
  double momentum_;
  int warmup_steps_;
  int patience_;
  double plateau_lr_;
  double best_cv_ = std::numeric_limits<double>::infinity();
  int stall_ = 0;
  int steps_ = 0;
  int skipped_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double cv_loss = 0;
  double cv_accuracy = 0;
  double learning_rate = 0;
  double tau = 0;
  double margin = 0;
  int skipped_steps = 0;
};

struct TrainResult {
  EmbeddingNet net;
  ClassificationHead head;
  std::vector<EpochLog> log;
};

// Recording-level loss/accuracy on a held-out set, using deterministic
// center crops (longest chunk per cluster), so repeated evaluations agree.
struct CvStats {
  double loss = 0;
  double accuracy = 0;
};
CvStats evaluate_recordings(const EmbeddingNet& net,
                            const ClassificationHead& head,
                            const std::vector<TrainRecording>& recordings,
                            int segment_frames, AggregationKind kind,
                            double tau, const AamConfig& aam);

// Stage-1 weakly supervised training: sample one segment per cluster,
// aggregate similarities over the cluster dimension, apply the AAM loss on
// the recording level and backpropagate through the hand-derived adjoints.
TrainResult train_stage1(const std::vector<TrainRecording>& train,
                         const std::vector<TrainRecording>& cv,
                         int num_classes, const TrainConfig& cfg,
                         const AggregationConfig& aggregation,
                         const AamConfig& aam, uint64_t seed);

}  // namespace weakspk
