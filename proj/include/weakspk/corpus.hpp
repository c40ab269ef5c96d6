#pragma once

#include <filesystem>
#include <vector>

#include "weakspk/io.hpp"
#include "weakspk/rng.hpp"
#include "weakspk/types.hpp"

namespace weakspk {

// Synthetic stand-in for a speaker: a diagonal-covariance GMM in feature
// space, so ground truth exists for every emitted frame.
struct SpeakerSource {
  int speaker_id = 0;
  Vector mixture_weights;     // G, sums to 1
  Matrix component_means;     // F x G
  Matrix component_variances; // F x G, strictly positive

  Vector sample_frame(Rng& rng) const;
};

struct Turn {
  int speaker_id = 0;
  int duration_frames = 0;
};

struct RecordingScript {
  int recording_id = 0;
  std::vector<Turn> turns;
  int target_id = 0;  // the celebrity label j*
};

struct WeaklyLabeledRecording {
  int recording_id = 0;
  FeatureMatrix features;
  int weak_label = 0;
  // Per-frame speaker ids; evaluation-only, never passed to training.
  std::vector<int> ground_truth;
};

enum class Split { Train, CrossValidation, Eval };

struct CorpusConfig {
  int num_celebrities = 32;
  int interferer_pool = 64;
  int recordings_per_celebrity = 8;
  // Held-out recordings for the cross-validation set: the first cv_speakers
  // celebrities each contribute cv_recordings_per_speaker extra recordings
  // that never enter training batches.
  int cv_speakers = 8;
  int cv_recordings_per_speaker = 2;
  // Held-out verification speakers, disjoint from the celebrities; each
  // gets single-speaker utterances for the trial list.
  int eval_speakers = 16;
  int eval_utterances_per_speaker = 6;

  int feature_dim = 20;
  int gmm_components = 4;
  int speakers_per_recording_min = 2;  // including the target
  int speakers_per_recording_max = 4;
  int turns_min = 6;
  int turns_max = 14;
  int turn_frames_min = 100;  // 1 s at 10 ms hop
  int turn_frames_max = 600;
  double target_speech_fraction = 0.45;
  int eval_frames_min = 200;
  int eval_frames_max = 500;

  // Raw speaker centers drive diarization (BIC sees means); the identity
  // that survives per-segment instance normalization is the component
  // geometry, so component_spread is the main speaker fingerprint knob.
  double mean_scale = 1.0;          // std of speaker center coordinates
  double min_mean_distance = 3.0;   // pairwise floor, training speakers
  double eval_mean_scale = 0.4;     // eval speakers crowd closer together
  double eval_min_mean_distance = 0.8;
  double component_spread = 1.0;    // component mean scatter around center
  double eval_component_spread = 0.6;  // weaker fingerprints: harder trials
  double variance_min = 0.05;       // per-dimension component variance range
  double variance_max = 0.2;
  double noise_sigma = 0.0;         // optional additive Gaussian noise

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<SpeakerSource> sources;  // celebrities, interferers, eval
  std::vector<WeaklyLabeledRecording> recordings;
  std::vector<Split> split;            // parallel to recordings
  std::vector<RecordingScript> scripts;
};

// Deterministic in (config, seed); each recording draws from a substream
// keyed by its id, so any generation order gives identical bits.
SyntheticCorpus synthesize_corpus(const CorpusConfig& config, uint64_t seed);

// Balanced ordered verification trials over held-out utterances.  Per
// speaker: floor(n/2) target and ceil(n/2) non-target trials, no self-pairs.
TrialList emit_trials(const std::vector<WeaklyLabeledRecording>& held_out,
                      int trials_per_speaker, uint64_t seed);

// On-disk layout: one directory per recording (features.feat,
// frames.labels) plus per-split manifests manifest_train.tsv,
// manifest_cv.tsv, manifest_eval.tsv.
void write_corpus(const SyntheticCorpus& corpus,
                  const std::filesystem::path& dir);

struct LoadedRecording {
  int recording_id = 0;
  int weak_label = 0;
  FeatureMatrix features;
  std::vector<int> ground_truth;  // empty unless requested
};

std::vector<LoadedRecording> load_corpus_split(
    const std::filesystem::path& dir, const std::string& split,
    bool with_ground_truth);

}  // namespace weakspk
