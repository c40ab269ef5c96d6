#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace weakspk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error categories map onto the CLI exit codes:
// usage/config error -> 1, missing artifact -> 2, numerical failure -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class FeatureKind { Fbank, Mfcc, Synthetic };

// Frame features with one column per frame (F x T).  The on-disk layout
// (frame-major float32) matches Eigen's column-major storage, so a column
// here is one frame.
struct FeatureMatrix {
  Matrix frames;
  double frame_shift_ms = 10.0;
  FeatureKind kind = FeatureKind::Synthetic;

  int dim() const { return static_cast<int>(frames.rows()); }
  int num_frames() const { return static_cast<int>(frames.cols()); }
};

// Half-open frame interval [start_frame, end_frame) of one recording.
struct Chunk {
  int recording_id = 0;
  int start_frame = 0;
  int end_frame = 0;

  int length() const { return end_frame - start_frame; }
};

// Partition of a recording's chunks into clusters.  Clusters are disjoint,
// non-empty, and their union tiles the diarized span.
struct Clustering {
  int recording_id = 0;
  std::vector<std::vector<Chunk>> clusters;

  int num_clusters() const { return static_cast<int>(clusters.size()); }
  int total_frames() const {
    int n = 0;
    for (const auto& cl : clusters)
      for (const auto& c : cl) n += c.length();
    return n;
  }
  // All chunks of all clusters, sorted by start frame.
  std::vector<Chunk> all_chunks() const;
};

}  // namespace weakspk
