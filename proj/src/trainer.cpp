#include "weakspk/trainer.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "weakspk/features.hpp"
#include "weakspk/threading.hpp"

namespace weakspk {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_segments < 1) throw ConfigError("batch_segments must be >= 1");
  if (segment_frames < 2) throw ConfigError("segment_frames must be >= 2");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be > 0");
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("momentum must be in [0, 1)");
  if (warmup_fraction < 0 || warmup_fraction > 1)
    throw ConfigError("warmup_fraction must be in [0, 1]");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (hidden.empty() || embedding_dim < 1)
    throw ConfigError("network needs hidden layers and embedding_dim >= 1");
}

Matrix crop_segment(const Matrix& chunk_features, int segment_frames,
                    Rng& rng) {
  const int len = static_cast<int>(chunk_features.cols());
  if (len < 1) throw ConfigError("crop_segment needs a non-empty chunk");
  if (len >= segment_frames) {
    const int offset = rng.uniform_int(len - segment_frames + 1);
    return chunk_features.middleCols(offset, segment_frames);
  }
  // Cyclic tiling from a random rotation.
  const int offset = rng.uniform_int(len);
  Matrix out(chunk_features.rows(), segment_frames);
  for (int t = 0; t < segment_frames; ++t)
    out.col(t) = chunk_features.col((offset + t) % len);
  return out;
}

std::vector<Minibatch> build_epoch(const std::vector<TrainRecording>& train,
                                   int segment_frames, int budget, Rng& rng,
                                   std::vector<int>* skipped) {
  std::vector<int> order;
  for (size_t i = 0; i < train.size(); ++i) {
    const int clusters = train[i].clustering->num_clusters();
    if (clusters >= 1 && clusters <= budget)
      order.push_back(static_cast<int>(i));
    else if (skipped)
      skipped->push_back(train[i].recording_id);
  }
  rng.shuffle(order);

  std::vector<Minibatch> batches;
  Minibatch current;
  int used = 0;
  for (int idx : order) {
    const TrainRecording& rec = train[static_cast<size_t>(idx)];
    const int clusters = rec.clustering->num_clusters();
    if (used + clusters > budget) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    BatchEntry entry;
    entry.recording_id = rec.recording_id;
    entry.target_class = rec.target_class;
    for (const auto& cluster : rec.clustering->clusters) {
      const int pick = rng.uniform_int(static_cast<int>(cluster.size()));
      const Chunk& chunk = cluster[static_cast<size_t>(pick)];
      Matrix segment = crop_segment(
          rec.features->frames.middleCols(chunk.start_frame, chunk.length()),
          segment_frames, rng);
      instance_normalize_inplace(segment);
      entry.segments.push_back(std::move(segment));
    }
    current.push_back(std::move(entry));
    used += clusters;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

double batch_forward_backward(const EmbeddingNet& net,
                              const ClassificationHead& head,
                              const Minibatch& batch, AggregationKind kind,
                              double tau, const AamConfig& aam, int threads,
                              NetGrads& net_grads, Matrix& head_grads) {
  struct SegmentRef {
    int entry;
    int cluster;
  };
  std::vector<SegmentRef> flat;
  for (size_t e = 0; e < batch.size(); ++e)
    for (size_t c = 0; c < batch[e].segments.size(); ++c)
      flat.push_back(SegmentRef{static_cast<int>(e), static_cast<int>(c)});
  const int num_segments = static_cast<int>(flat.size());

  std::vector<ForwardTrace> traces(static_cast<size_t>(num_segments));
  parallel_for(num_segments, threads, [&](int i) {
    const auto& ref = flat[static_cast<size_t>(i)];
    forward_embed(net,
                  batch[static_cast<size_t>(ref.entry)]
                      .segments[static_cast<size_t>(ref.cluster)],
                  traces[static_cast<size_t>(i)]);
  });

  // Recording-level losses and the dL/dz routing are cheap; they run
  // serially in entry order so head gradients accumulate deterministically.
  const int dim = net.cfg.embedding_dim;
  head_grads.setZero(head.rows.rows(), head.rows.cols());
  std::vector<Vector> d_embeddings(static_cast<size_t>(num_segments));
  double total_loss = 0.0;
  int flat_base = 0;
  for (size_t e = 0; e < batch.size(); ++e) {
    const int clusters = static_cast<int>(batch[e].segments.size());
    Matrix embeddings(dim, clusters);
    for (int c = 0; c < clusters; ++c)
      embeddings.col(c) =
          traces[static_cast<size_t>(flat_base + c)].embedding;
    Eigen::MatrixXi which_sub;
    const Matrix o = segment_similarities(head, embeddings, &which_sub);
    const RecordingLoss rl =
        recording_loss(o, batch[e].target_class, kind, tau, aam);
    total_loss += rl.loss;
    for (int c = 0; c < clusters; ++c) {
      Vector dz = Vector::Zero(dim);
      for (int j = 0; j < head.num_classes; ++j) {
        const double g = rl.d_logits(c, j);
        if (g == 0.0) continue;
        const int row = j * head.sub_centers + which_sub(c, j);
        dz += g * head.rows.row(row).transpose();
        head_grads.row(row) += g * embeddings.col(c).transpose();
      }
      d_embeddings[static_cast<size_t>(flat_base + c)] = std::move(dz);
    }
    flat_base += clusters;
  }

  // Per-segment parameter gradients, then a fixed-order reduction.
  std::vector<NetGrads> per_segment(static_cast<size_t>(num_segments));
  parallel_for(num_segments, threads, [&](int i) {
    const auto& ref = flat[static_cast<size_t>(i)];
    per_segment[static_cast<size_t>(i)] = NetGrads::zeros_like(net);
    backward_embed(net,
                   batch[static_cast<size_t>(ref.entry)]
                       .segments[static_cast<size_t>(ref.cluster)],
                   traces[static_cast<size_t>(i)],
                   d_embeddings[static_cast<size_t>(i)],
                   per_segment[static_cast<size_t>(i)]);
  });
  net_grads.set_zero();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (int i = 0; i < num_segments; ++i)
    net_grads.add(per_segment[static_cast<size_t>(i)], scale);
  head_grads *= scale;
  return total_loss * scale;
}

SgdOptimizer::SgdOptimizer(const EmbeddingNet& net,
                           const ClassificationHead& head,
                           double learning_rate, double momentum,
                           int warmup_steps, int patience)
    : net_velocity_(NetGrads::zeros_like(net)),
      head_velocity_(Matrix::Zero(head.rows.rows(), head.rows.cols())),
      lr_target_(learning_rate),
      momentum_(momentum),
      warmup_steps_(warmup_steps),
      patience_(patience),
      plateau_lr_(learning_rate) {}

double SgdOptimizer::current_lr() const {
  if (steps_ < warmup_steps_) {
    const double t = warmup_steps_ > 1
                         ? static_cast<double>(steps_) / (warmup_steps_ - 1)
                         : 1.0;
    return lr_target_ * (0.01 + 0.99 * t);
  }
  return plateau_lr_;
}

bool SgdOptimizer::step(EmbeddingNet& net, ClassificationHead& head,
                        const NetGrads& net_grads, const Matrix& head_grads) {
  if (!net_grads.all_finite() || !head_grads.allFinite()) {
    ++skipped_;
    return false;
  }
  const double lr = current_lr();
  for (size_t l = 0; l < net.weights.size(); ++l) {
    net_velocity_.weights[l] =
        momentum_ * net_velocity_.weights[l] + net_grads.weights[l];
    net.weights[l] -= lr * net_velocity_.weights[l];
    net_velocity_.biases[l] =
        momentum_ * net_velocity_.biases[l] + net_grads.biases[l];
    net.biases[l] -= lr * net_velocity_.biases[l];
  }
  head_velocity_ = momentum_ * head_velocity_ + head_grads;
  head.rows -= lr * head_velocity_;
  head.renormalize_rows();
  ++steps_;
  return true;
}

void SgdOptimizer::on_cv_loss(double cv_loss) {
  if (steps_ < warmup_steps_) return;
  if (cv_loss < best_cv_) {
    best_cv_ = cv_loss;
    stall_ = 0;
    return;
  }
  if (++stall_ >= patience_) {
    plateau_lr_ *= 0.5;
    stall_ = 0;
  }
}

namespace {

// Deterministic stand-in for the training crop: the longest chunk of each
// cluster (earliest on ties), center-cropped or tiled from offset 0.
Matrix center_segment(const Matrix& chunk_features, int segment_frames) {
  const int len = static_cast<int>(chunk_features.cols());
  if (len >= segment_frames) {
    const int offset = (len - segment_frames) / 2;
    return chunk_features.middleCols(offset, segment_frames);
  }
  Matrix out(chunk_features.rows(), segment_frames);
  for (int t = 0; t < segment_frames; ++t)
    out.col(t) = chunk_features.col(t % len);
  return out;
}

}  // namespace

CvStats evaluate_recordings(const EmbeddingNet& net,
                            const ClassificationHead& head,
                            const std::vector<TrainRecording>& recordings,
                            int segment_frames, AggregationKind kind,
                            double tau, const AamConfig& aam) {
  CvStats stats;
  if (recordings.empty()) return stats;
  int correct = 0;
  for (const auto& rec : recordings) {
    const int clusters = rec.clustering->num_clusters();
    Matrix embeddings(net.cfg.embedding_dim, clusters);
    for (int c = 0; c < clusters; ++c) {
      const auto& chunk_list = rec.clustering->clusters[static_cast<size_t>(c)];
      const Chunk* longest = &chunk_list.front();
      for (const auto& chunk : chunk_list)
        if (chunk.length() > longest->length()) longest = &chunk;
      Matrix segment = center_segment(
          rec.features->frames.middleCols(longest->start_frame,
                                          longest->length()),
          segment_frames);
      instance_normalize_inplace(segment);
      embeddings.col(c) = forward_embed(net, segment);
    }
    const Matrix o = segment_similarities(head, embeddings);
    const RecordingLoss rl = recording_loss(o, rec.target_class, kind, tau, aam);
    stats.loss += rl.loss;
    if (rl.predicted == rec.target_class) ++correct;
  }
  stats.loss /= static_cast<double>(recordings.size());
  stats.accuracy = static_cast<double>(correct) / recordings.size();
  return stats;
}

TrainResult train_stage1(const std::vector<TrainRecording>& train,
                         const std::vector<TrainRecording>& cv,
                         int num_classes, const TrainConfig& cfg,
                         const AggregationConfig& aggregation,
                         const AamConfig& aam, uint64_t seed) {
  cfg.validate();
  aggregation.validate();
  aam.validate();
  if (train.empty()) throw ConfigError("train_stage1 needs training recordings");

  const Rng base(seed);
  Rng init_rng = base.fork("stage1_init");
  NetConfig net_cfg{static_cast<int>(train.front().features->dim()),
                    cfg.hidden, cfg.embedding_dim};
  TrainResult result;
  result.net = EmbeddingNet::init(net_cfg, init_rng);
  result.head = ClassificationHead::init(num_classes, 1, cfg.embedding_dim,
                                         init_rng);

  // Warm-up length: a fraction of the planned steps, where the plan assumes
  // every epoch packs like the first one.
  std::vector<int> skipped_ids;
  {
    Rng probe = base.fork("sampler").fork(uint64_t{0});
    const auto probe_batches = build_epoch(train, cfg.segment_frames,
                                           cfg.batch_segments, probe,
                                           &skipped_ids);
    const int planned =
        cfg.epochs * std::max<int>(1, static_cast<int>(probe_batches.size()));
    const int warmup =
        std::max(1, static_cast<int>(std::lround(cfg.warmup_fraction * planned)));
    result.log.reserve(static_cast<size_t>(cfg.epochs));
    SgdOptimizer opt(result.net, result.head, cfg.learning_rate, cfg.momentum,
                     warmup, cfg.plateau_patience);
    for (int id : skipped_ids)
      std::cerr << "[weakspk] warning: recording " << id
                << " has more clusters than the batch budget; skipped\n";

    NetGrads net_grads = NetGrads::zeros_like(result.net);
    Matrix head_grads;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double tau = aggregation.tau_at(epoch, cfg.epochs);
      Rng epoch_rng = base.fork("sampler").fork(static_cast<uint64_t>(epoch));
      const auto batches = build_epoch(train, cfg.segment_frames,
                                       cfg.batch_segments, epoch_rng);
      double epoch_loss = 0.0;
      for (const auto& batch : batches) {
        const double loss = batch_forward_backward(
            result.net, result.head, batch, aggregation.kind, tau, aam,
            cfg.threads, net_grads, head_grads);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "training diverged: non-finite loss at epoch " << epoch
              << ", step " << opt.steps_applied() << ", lr "
              << opt.current_lr() << ", tau " << tau;
          throw NumericalError(msg.str());
        }
        epoch_loss += loss;
        opt.step(result.net, result.head, net_grads, head_grads);
      }
      const CvStats cv_stats =
          evaluate_recordings(result.net, result.head, cv, cfg.segment_frames,
                              aggregation.kind, tau, aam);
      EpochLog entry;
      entry.epoch = epoch;
      entry.train_loss = batches.empty() ? 0.0 : epoch_loss / batches.size();
      entry.cv_loss = cv_stats.loss;
      entry.cv_accuracy = cv_stats.accuracy;
      entry.learning_rate = opt.current_lr();
      entry.tau = tau;
      entry.margin = aam.margin;
      entry.skipped_steps = opt.steps_skipped();
      result.log.push_back(entry);
      if (!cv.empty()) opt.on_cv_loss(cv_stats.loss);
    }
  }
  return result;
}

}  // namespace weakspk
