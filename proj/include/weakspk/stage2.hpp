#pragma once

#include <vector>

#include "weakspk/trainer.hpp"

namespace weakspk {

struct Stage2Config {
  int sub_centers = 1;  // K; with K=2 the class logit is the sub-center max
  double margin_start = 0.1;
  double margin_end = 0.3;
  double aam_scale = 30.0;
  int min_chunks_per_class = 2;  // celebrities below this floor are dropped
  int cv_every = 20;             // every Nth chunk is held out for CV
  TrainConfig train;

  void validate() const;
};

// One pseudo-labeled chunk: the label is the recording's celebrity, kept
// because the stage-1 model classified the chunk as that celebrity.
struct PseudoChunk {
  int recording_id = 0;
  Chunk chunk;
  int celebrity = 0;
  const FeatureMatrix* features = nullptr;  // whole-recording features
};

// Margin schedule: hold the starting margin while warm-up runs, then ramp
// linearly so the final epoch lands exactly on margin_end.
double stage2_margin_at(int epoch, int num_epochs, int warmup_epochs,
                        double margin_start, double margin_end);

// Standard supervised AAM training on pseudo-labeled chunks, from a fresh
// random initialization.  Each minibatch element is a single cropped
// segment; no aggregation is involved.
TrainResult train_stage2(const std::vector<PseudoChunk>& chunks,
                         const Stage2Config& cfg, uint64_t seed);

}  // namespace weakspk
