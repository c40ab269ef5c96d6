#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "weakspk/types.hpp"

namespace weakspk {

// Binary feature file: magic "WSPKFEAT", u32 version, u32 T, u32 F, then
// T*F little-endian float32 values, frame-major (frame t is a contiguous
// block of F floats).
void write_feature_file(const std::filesystem::path& path,
                        const FeatureMatrix& features);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

// Per-frame speaker labels: magic "WSPKLABS", u32 version, u32 T, then
// T little-endian int32 speaker ids.
void write_label_file(const std::filesystem::path& path,
                      const std::vector<int>& labels);
std::vector<int> read_label_file(const std::filesystem::path& path);

// Manifest: one line per recording, tab-separated "id weak_label path",
// path relative to the manifest's directory.
struct ManifestEntry {
  int recording_id = 0;
  int weak_label = 0;
  std::string path;
};
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Verification trials: tab-separated "enroll_id test_id target|nontarget".
struct Trial {
  int enroll_id = 0;
  int test_id = 0;
  bool is_target = false;
};
struct TrialList {
  std::vector<Trial> trials;
};
void write_trials(const std::filesystem::path& path, const TrialList& trials);
TrialList read_trials(const std::filesystem::path& path);

// Cached clusterings: tab-separated
// "recording_id cluster_index start_frame end_frame", sorted.
void write_clusterings(const std::filesystem::path& path,
                       const std::vector<Clustering>& clusterings);
std::vector<Clustering> read_clusterings(const std::filesystem::path& path);

// FNV-1a over a string; used to fingerprint configs in emitted artifacts.
uint64_t fnv1a_hash(const std::string& s);

// Writes text atomically-ish (single ofstream in binary mode, LF endings)
// so repeated runs produce byte-identical files.
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace weakspk
