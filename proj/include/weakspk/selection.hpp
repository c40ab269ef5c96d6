#pragma once

#include <filesystem>
#include <map>
#include <vector>

#include "weakspk/net.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

struct SelectionConfig {
  int min_frames = 100;   // chunks shorter than this are never classified
  int max_frames = 2000;  // longer chunks are center-cropped
  int threads = 1;
};

// Whole-chunk classification: embed the chunk (center-cropped at
// max_frames), take the argmax over per-celebrity similarities.  Neither the
// AAM margin nor the scale is applied; both preserve the argmax.
int classify_chunk(const EmbeddingNet& net, const ClassificationHead& head,
                   const Matrix& chunk_features, int max_frames = 2000);

struct SelfLabeledChunk {
  int recording_id = 0;
  Chunk chunk;
};

struct SelfLabeledSet {
  // celebrity -> kept chunks; a celebrity with no kept chunks is absent.
  std::map<int, std::vector<SelfLabeledChunk>> by_celebrity;
  int speakers_retained = 0;
  int num_chunks = 0;
  double hours = 0;

  void recompute_summary(double frame_shift_ms);
};

// Input view for selection: a recording's features, weak label, and the
// boundary-refined chunks (cluster identity is not consulted).
struct SelectionRecording {
  int recording_id = 0;
  int weak_label = 0;
  const FeatureMatrix* features = nullptr;
  std::vector<Chunk> chunks;
};

// Keeps a chunk iff the model classifies it as the recording's celebrity.
SelfLabeledSet build_self_labeled(const EmbeddingNet& net,
                                  const ClassificationHead& head,
                                  const std::vector<SelectionRecording>& recs,
                                  const SelectionConfig& cfg);

// Frame-weighted precision/recall of the kept chunks against true
// target-speaker frames.  An empty selection reports precision 1.0
// (vacuous; flagged by the caller) and recall 0.0.
struct SelectionMetrics {
  double precision = 1.0;
  double recall = 0.0;
  double hours_kept = 0.0;
  bool empty_selection = false;
};
SelectionMetrics selection_metrics(
    const SelfLabeledSet& selection,
    const std::map<int, const std::vector<int>*>& ground_truth,
    const std::map<int, int>& weak_labels, double frame_shift_ms);

// Manifest: one line per kept chunk, "recording_id start_s end_s celebrity",
// times in seconds with two decimals (exact at a 10 ms hop).
void write_self_labeled(const std::filesystem::path& path,
                        const SelfLabeledSet& set, double frame_shift_ms);
SelfLabeledSet read_self_labeled(const std::filesystem::path& path,
                                 double frame_shift_ms);

}  // namespace weakspk
