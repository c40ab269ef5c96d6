#include "weakspk/selection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "weakspk/features.hpp"
#include "weakspk/io.hpp"
#include "weakspk/threading.hpp"

namespace weakspk {

int classify_chunk(const EmbeddingNet& net, const ClassificationHead& head,
                   const Matrix& chunk_features, int max_frames) {
  Matrix segment = chunk_features;
  if (segment.cols() > max_frames) {
    const int offset = (static_cast<int>(segment.cols()) - max_frames) / 2;
    segment = segment.middleCols(offset, max_frames).eval();
  }
  instance_normalize_inplace(segment);
  const Vector z = forward_embed(net, segment);
  const Matrix o = segment_similarities(head, z);
  int best = 0;
  for (int j = 1; j < head.num_classes; ++j)
    if (o(0, j) > o(0, best)) best = j;
  return head.class_ids[static_cast<size_t>(best)];
}

void SelfLabeledSet::recompute_summary(double frame_shift_ms) {
  speakers_retained = static_cast<int>(by_celebrity.size());
  num_chunks = 0;
  long long frames = 0;
  for (const auto& [celebrity, chunks] : by_celebrity) {
    num_chunks += static_cast<int>(chunks.size());
    for (const auto& c : chunks) frames += c.chunk.length();
  }
  hours = static_cast<double>(frames) * frame_shift_ms / 1000.0 / 3600.0;
}

SelfLabeledSet build_self_labeled(const EmbeddingNet& net,
                                  const ClassificationHead& head,
                                  const std::vector<SelectionRecording>& recs,
                                  const SelectionConfig& cfg) {
  // Classification is embarrassingly parallel over chunks; the kept set is
  // assembled in recording order afterwards so the output is deterministic.
  struct Work {
    const SelectionRecording* rec;
    Chunk chunk;
    int predicted = -1;
  };
  std::vector<Work> work;
  for (const auto& rec : recs)
    for (const auto& chunk : rec.chunks)
      if (chunk.length() >= cfg.min_frames)
        work.push_back(Work{&rec, chunk, -1});

  parallel_for(static_cast<int>(work.size()), cfg.threads, [&](int i) {
    Work& w = work[static_cast<size_t>(i)];
    const Matrix view = w.rec->features->frames.middleCols(
        w.chunk.start_frame, w.chunk.length());
    w.predicted = classify_chunk(net, head, view, cfg.max_frames);
  });

  SelfLabeledSet out;
  const double frame_shift_ms =
      recs.empty() ? 10.0 : recs.front().features->frame_shift_ms;
  for (const auto& w : work) {
    if (w.predicted == w.rec->weak_label)
      out.by_celebrity[w.rec->weak_label].push_back(
          SelfLabeledChunk{w.rec->recording_id, w.chunk});
  }
  out.recompute_summary(frame_shift_ms);
  return out;
}

SelectionMetrics selection_metrics(
    const SelfLabeledSet& selection,
    const std::map<int, const std::vector<int>*>& ground_truth,
    const std::map<int, int>& weak_labels, double frame_shift_ms) {
  SelectionMetrics m;
  long long kept = 0, kept_target = 0, total_target = 0;
  for (const auto& [rec_id, gt] : ground_truth) {
    const int target = weak_labels.at(rec_id);
    for (int label : *gt)
      if (label == target) ++total_target;
  }
  for (const auto& [celebrity, chunks] : selection.by_celebrity) {
    for (const auto& c : chunks) {
      const auto it = ground_truth.find(c.recording_id);
      if (it == ground_truth.end()) continue;
      const std::vector<int>& gt = *it->second;
      for (int t = c.chunk.start_frame; t < c.chunk.end_frame; ++t) {
        ++kept;
        if (gt[static_cast<size_t>(t)] == celebrity) ++kept_target;
      }
    }
  }
  m.empty_selection = kept == 0;
  m.precision = kept > 0 ? static_cast<double>(kept_target) / kept : 1.0;
  m.recall = total_target > 0
                 ? static_cast<double>(kept_target) / total_target
                 : 0.0;
  m.hours_kept = static_cast<double>(kept) * frame_shift_ms / 1000.0 / 3600.0;
  return m;
}

void write_self_labeled(const std::filesystem::path& path,
                        const SelfLabeledSet& set, double frame_shift_ms) {
  struct Row {
    int rec;
    int start;
    int end;
    int celebrity;
  };
  std::vector<Row> rows;
  for (const auto& [celebrity, chunks] : set.by_celebrity)
    for (const auto& c : chunks)
      rows.push_back(
          Row{c.recording_id, c.chunk.start_frame, c.chunk.end_frame,
              celebrity});
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.rec != b.rec) return a.rec < b.rec;
    return a.start < b.start;
  });
  std::ostringstream os;
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d\t%.2f\t%.2f\t%d\n", r.rec,
                  r.start * frame_shift_ms / 1000.0,
                  r.end * frame_shift_ms / 1000.0, r.celebrity);
    os << buf;
  }
  write_text_file(path, os.str());
}

SelfLabeledSet read_self_labeled(const std::filesystem::path& path,
                                 double frame_shift_ms) {
  if (!std::filesystem::exists(path))
    throw MissingArtifactError("missing self-labeled manifest " +
                               path.string() + "; run `weakspk select` first");
  std::istringstream in(read_text_file(path));
  SelfLabeledSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int rec, celebrity;
    double start_s, end_s;
    if (!(ls >> rec >> start_s >> end_s >> celebrity))
      throw FormatError("bad self-labeled line in " + path.string() + ": " +
                        line);
    const int start =
        static_cast<int>(std::lround(start_s * 1000.0 / frame_shift_ms));
    const int end =
        static_cast<int>(std::lround(end_s * 1000.0 / frame_shift_ms));
    out.by_celebrity[celebrity].push_back(
        SelfLabeledChunk{rec, Chunk{rec, start, end}});
  }
  out.recompute_summary(frame_shift_ms);
  return out;
}

}  // namespace weakspk
