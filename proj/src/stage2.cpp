#include "weakspk/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "weakspk/features.hpp"

namespace weakspk {

void Stage2Config::validate() const {
  train.validate();
  if (sub_centers < 1) throw ConfigError("sub_centers must be >= 1");
  if (margin_start < 0 || margin_end < margin_start ||
      margin_end >= 1.5707963267948966)
    throw ConfigError("margin schedule endpoints must satisfy "
                      "0 <= start <= end < pi/2");
  if (min_chunks_per_class < 1)
    throw ConfigError("min_chunks_per_class must be >= 1");
  if (cv_every < 2) throw ConfigError("cv_every must be >= 2");
}

double stage2_margin_at(int epoch, int num_epochs, int warmup_epochs,
                        double margin_start, double margin_end) {
  if (epoch >= num_epochs - 1) return margin_end;
  if (epoch <= warmup_epochs || num_epochs - 1 <= warmup_epochs)
    return margin_start;
  const double t = static_cast<double>(epoch - warmup_epochs) /
                   (num_epochs - 1 - warmup_epochs);
  return margin_start + (margin_end - margin_start) * t;
}

namespace {

Matrix chunk_view(const PseudoChunk& pc) {
  return pc.features->frames.middleCols(pc.chunk.start_frame,
                                        pc.chunk.length());
}

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

struct SegmentCvStats {
  double loss = 0;
  double accuracy = 0;
};

SegmentCvStats evaluate_segments(const EmbeddingNet& net,
                                 const ClassificationHead& head,
                                 const std::vector<const PseudoChunk*>& cv,
                                 const std::map<int, int>& class_index,
                                 int segment_frames, const AamConfig& aam) {
  SegmentCvStats stats;
  if (cv.empty()) return stats;
  int correct = 0;
  for (const PseudoChunk* pc : cv) {
    Matrix segment = center_segment(chunk_view(*pc), segment_frames);
    instance_normalize_inplace(segment);
    const Vector z = forward_embed(net, segment);
    const Matrix o = segment_similarities(head, z);
    const int target = class_index.at(pc->celebrity);
    const RecordingLoss rl =
        recording_loss(o, target, AggregationKind::Max, 1.0, aam);
    stats.loss += rl.loss;
    if (rl.predicted == target) ++correct;
  }
  stats.loss /= static_cast<double>(cv.size());
  stats.accuracy = static_cast<double>(correct) / cv.size();
  return stats;
}

}  // namespace

TrainResult train_stage2(const std::vector<PseudoChunk>& chunks,
                         const Stage2Config& cfg, uint64_t seed) {
  cfg.validate();
  if (chunks.empty())
    throw ConfigError("train_stage2 needs a non-empty self-labeled set");

  // Stable chunk order, then the class floor and the CV slice.
  std::vector<const PseudoChunk*> ordered;
  ordered.reserve(chunks.size());
  for (const auto& c : chunks) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [](const PseudoChunk* a, const PseudoChunk* b) {
              if (a->recording_id != b->recording_id)
                return a->recording_id < b->recording_id;
              return a->chunk.start_frame < b->chunk.start_frame;
            });
  std::map<int, int> chunk_counts;
  for (const PseudoChunk* c : ordered) chunk_counts[c->celebrity]++;
  std::map<int, int> class_index;
  std::vector<int> class_ids;
  for (const auto& [celebrity, count] : chunk_counts) {
    if (count >= cfg.min_chunks_per_class) {
      class_index[celebrity] = static_cast<int>(class_ids.size());
      class_ids.push_back(celebrity);
    } else {
      std::cerr << "[weakspk] celebrity " << celebrity << " has only " << count
                << " self-labeled chunk(s); excluded from stage-2 classes\n";
    }
  }
  if (class_ids.size() < 2)
    throw ConfigError("stage-2 training needs at least 2 classes after the "
                      "chunk floor");

  std::vector<const PseudoChunk*> train_chunks, cv_chunks;
  int kept_index = 0;
  for (const PseudoChunk* c : ordered) {
    if (!class_index.count(c->celebrity)) continue;
    if (kept_index % cfg.cv_every == 0)
      cv_chunks.push_back(c);
    else
      train_chunks.push_back(c);
    ++kept_index;
  }
  if (train_chunks.empty())
    throw ConfigError("stage-2 training has no chunks after the CV split");

  const Rng base(seed);
  Rng init_rng = base.fork("stage2_init");
  NetConfig net_cfg{static_cast<int>(chunks.front().features->dim()),
                    cfg.train.hidden, cfg.train.embedding_dim};
  TrainResult result;
  result.net = EmbeddingNet::init(net_cfg, init_rng);
  result.head = ClassificationHead::init(static_cast<int>(class_ids.size()),
                                         cfg.sub_centers,
                                         cfg.train.embedding_dim, init_rng,
                                         class_ids);

  const int steps_per_epoch = std::max<int>(
      1, static_cast<int>((train_chunks.size() + cfg.train.batch_segments - 1) /
                          cfg.train.batch_segments));
  const int planned = cfg.train.epochs * steps_per_epoch;
  const int warmup = std::max(
      1, static_cast<int>(std::lround(cfg.train.warmup_fraction * planned)));
  const int warmup_epochs = warmup / steps_per_epoch;
  SgdOptimizer opt(result.net, result.head, cfg.train.learning_rate,
                   cfg.train.momentum, warmup, cfg.train.plateau_patience);

  AamConfig aam;
  aam.scale = cfg.aam_scale;
  NetGrads net_grads = NetGrads::zeros_like(result.net);
  Matrix head_grads;
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    aam.margin = stage2_margin_at(epoch, cfg.train.epochs, warmup_epochs,
                                  cfg.margin_start, cfg.margin_end);
    aam.validate();
    Rng epoch_rng = base.fork("sampler").fork(static_cast<uint64_t>(epoch));
    std::vector<int> order(train_chunks.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches_done = 0;
    for (size_t at = 0; at < order.size(); at += cfg.train.batch_segments) {
      Minibatch batch;
      const size_t end =
          std::min(order.size(), at + cfg.train.batch_segments);
      for (size_t i = at; i < end; ++i) {
        const PseudoChunk* pc = train_chunks[static_cast<size_t>(
            order[i])];
        Matrix segment = crop_segment(chunk_view(*pc),
                                      cfg.train.segment_frames, epoch_rng);
        instance_normalize_inplace(segment);
        BatchEntry entry;
        entry.recording_id = pc->recording_id;
        entry.target_class = class_index.at(pc->celebrity);
        entry.segments.push_back(std::move(segment));
        batch.push_back(std::move(entry));
      }
      const double loss = batch_forward_backward(
          result.net, result.head, batch, AggregationKind::Max, 1.0, aam,
          cfg.train.threads, net_grads, head_grads);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "stage-2 training diverged: non-finite loss at epoch " << epoch
            << ", step " << opt.steps_applied();
        throw NumericalError(msg.str());
      }
      epoch_loss += loss;
      ++batches_done;
      opt.step(result.net, result.head, net_grads, head_grads);
    }

    const SegmentCvStats cv_stats =
        evaluate_segments(result.net, result.head, cv_chunks, class_index,
                          cfg.train.segment_frames, aam);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = batches_done > 0 ? epoch_loss / batches_done : 0.0;
    entry.cv_loss = cv_stats.loss;
    entry.cv_accuracy = cv_stats.accuracy;
    entry.learning_rate = opt.current_lr();
    entry.tau = 0.0;
    entry.margin = aam.margin;
    entry.skipped_steps = opt.steps_skipped();
    result.log.push_back(entry);
    if (!cv_chunks.empty()) opt.on_cv_loss(cv_stats.loss);
  }
  return result;
}

}  // namespace weakspk
