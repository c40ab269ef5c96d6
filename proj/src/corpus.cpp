#include "weakspk/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace weakspk {

namespace {

std::string recording_dir_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rec_%05d", id);
  return buf;
}

Vector sample_center(int dim, double scale, Rng& rng) {
  Vector c(dim);
  for (int i = 0; i < dim; ++i) c(i) = scale * rng.normal();
  return c;
}

// Speaker centers with a pairwise distance floor; rejection-sampled.
std::vector<Vector> sample_centers(int count, int dim, double scale,
                                   double min_distance, Rng& rng) {
  std::vector<Vector> centers;
  centers.reserve(static_cast<size_t>(count));
  const int max_tries = 1000 * std::max(count, 1);
  int tries = 0;
  while (static_cast<int>(centers.size()) < count) {
    if (++tries > max_tries)
      throw ConfigError(
          "could not place speaker means with the requested minimum pairwise "
          "distance; lower min_mean_distance or raise mean_scale");
    Vector c = sample_center(dim, scale, rng);
    bool ok = true;
    for (const auto& other : centers)
      if ((c - other).norm() < min_distance) {
        ok = false;
        break;
      }
    if (ok) centers.push_back(std::move(c));
  }
  return centers;
}

SpeakerSource make_source(int speaker_id, const Vector& center,
                          const CorpusConfig& cfg, double component_spread,
                          Rng& rng) {
  const int f = cfg.feature_dim;
  const int g = cfg.gmm_components;
  SpeakerSource s;
  s.speaker_id = speaker_id;
  s.mixture_weights.resize(g);
  for (int k = 0; k < g; ++k) s.mixture_weights(k) = rng.uniform(0.5, 1.5);
  s.mixture_weights /= s.mixture_weights.sum();
  s.component_means.resize(f, g);
  s.component_variances.resize(f, g);
  for (int k = 0; k < g; ++k) {
    for (int i = 0; i < f; ++i) {
      s.component_means(i, k) = center(i) + component_spread * rng.normal();
      s.component_variances(i, k) = rng.uniform(cfg.variance_min,
                                                cfg.variance_max);
    }
  }
  return s;
}

int sample_duration(const CorpusConfig& cfg, Rng& rng) {
  const double d = rng.log_uniform(cfg.turn_frames_min, cfg.turn_frames_max);
  return std::clamp(static_cast<int>(std::lround(d)), cfg.turn_frames_min,
                    cfg.turn_frames_max);
}

RecordingScript make_script(int recording_id, int target_id,
                            const std::vector<int>& interferers,
                            const CorpusConfig& cfg, Rng& rng) {
  RecordingScript script;
  script.recording_id = recording_id;
  script.target_id = target_id;
  const int num_turns =
      cfg.turns_min + rng.uniform_int(cfg.turns_max - cfg.turns_min + 1);
  script.turns.resize(static_cast<size_t>(num_turns));
  for (auto& turn : script.turns) {
    if (interferers.empty() || rng.uniform() < cfg.target_speech_fraction)
      turn.speaker_id = target_id;
    else
      turn.speaker_id =
          interferers[static_cast<size_t>(rng.uniform_int(
              static_cast<int>(interferers.size())))];
    turn.duration_frames = sample_duration(cfg, rng);
  }
  // Break immediate repetitions where an alternative exists.
  for (size_t t = 1; t < script.turns.size(); ++t) {
    if (script.turns[t].speaker_id != script.turns[t - 1].speaker_id) continue;
    if (script.turns[t].speaker_id == target_id && !interferers.empty())
      script.turns[t].speaker_id = interferers[static_cast<size_t>(
          rng.uniform_int(static_cast<int>(interferers.size())))];
    else if (script.turns[t].speaker_id != target_id)
      script.turns[t].speaker_id = target_id;
  }
  // The weak label must actually speak, and multi-speaker recordings must
  // contain at least one interferer turn.
  const auto has_speaker = [&](int id) {
    return std::any_of(script.turns.begin(), script.turns.end(),
                       [&](const Turn& t) { return t.speaker_id == id; });
  };
  if (!has_speaker(target_id))
    script.turns[static_cast<size_t>(rng.uniform_int(num_turns))].speaker_id =
        target_id;
  if (!interferers.empty()) {
    const bool any_interferer =
        std::any_of(script.turns.begin(), script.turns.end(), [&](const Turn& t) {
          return t.speaker_id != target_id;
        });
    if (!any_interferer && num_turns >= 2) {
      // Flip a non-first turn so the forced target turn above survives.
      size_t idx = 1 + static_cast<size_t>(rng.uniform_int(num_turns - 1));
      script.turns[idx].speaker_id = interferers[static_cast<size_t>(
          rng.uniform_int(static_cast<int>(interferers.size())))];
    }
  }
  return script;
}

WeaklyLabeledRecording render_script(
    const RecordingScript& script,
    const std::map<int, const SpeakerSource*>& sources, double noise_sigma,
    Rng& rng) {
  int total = 0;
  for (const auto& t : script.turns) total += t.duration_frames;
  WeaklyLabeledRecording rec;
  rec.recording_id = script.recording_id;
  rec.weak_label = script.target_id;
  rec.ground_truth.resize(static_cast<size_t>(total));
  const int dim =
      static_cast<int>(sources.begin()->second->component_means.rows());
  rec.features.frames.resize(dim, total);
  rec.features.kind = FeatureKind::Synthetic;
  int frame = 0;
  for (const auto& turn : script.turns) {
    const SpeakerSource* src = sources.at(turn.speaker_id);
    for (int i = 0; i < turn.duration_frames; ++i, ++frame) {
      Vector x = src->sample_frame(rng);
      if (noise_sigma > 0)
        for (int d = 0; d < dim; ++d) x(d) += noise_sigma * rng.normal();
      rec.features.frames.col(frame) = x;
      rec.ground_truth[static_cast<size_t>(frame)] = turn.speaker_id;
    }
  }
  return rec;
}

}  // namespace

Vector SpeakerSource::sample_frame(Rng& rng) const {
  const int g = static_cast<int>(mixture_weights.size());
  double u = rng.uniform();
  int comp = g - 1;
  for (int k = 0; k < g; ++k) {
    u -= mixture_weights(k);
    if (u < 0) {
      comp = k;
      break;
    }
  }
  const int dim = static_cast<int>(component_means.rows());
  Vector x(dim);
  for (int d = 0; d < dim; ++d)
    x(d) = component_means(d, comp) +
           std::sqrt(component_variances(d, comp)) * rng.normal();
  return x;
}

void CorpusConfig::validate() const {
  if (num_celebrities < 2)
    throw ConfigError("corpus needs at least 2 celebrities");
  if (recordings_per_celebrity < 1)
    throw ConfigError("recordings_per_celebrity must be >= 1");
  if (feature_dim < 1 || gmm_components < 1)
    throw ConfigError("feature_dim and gmm_components must be >= 1");
  if (turn_frames_min <= 0 || turn_frames_max < turn_frames_min)
    throw ConfigError("turn duration range is empty or non-positive");
  if (turns_min < 1 || turns_max < turns_min)
    throw ConfigError("turns range is empty");
  if (speakers_per_recording_min < 1 ||
      speakers_per_recording_max < speakers_per_recording_min)
    throw ConfigError("speakers-per-recording range is empty");
  if (speakers_per_recording_max > 1 && interferer_pool < 1)
    throw ConfigError("multi-speaker recordings need a non-empty interferer pool");
  if (speakers_per_recording_min >= 2 && turns_min < 2)
    throw ConfigError("multi-speaker recordings need at least 2 turns");
  if (target_speech_fraction <= 0 || target_speech_fraction > 1)
    throw ConfigError("target_speech_fraction must be in (0, 1]");
  if (cv_speakers > num_celebrities)
    throw ConfigError("cv_speakers cannot exceed num_celebrities");
  if (variance_min <= 0 || variance_max < variance_min)
    throw ConfigError("component variance range must be strictly positive");
  if (eval_frames_min < 2 || eval_frames_max < eval_frames_min)
    throw ConfigError("eval utterance frame range is empty");
}

SyntheticCorpus synthesize_corpus(const CorpusConfig& config, uint64_t seed) {
  config.validate();
  SyntheticCorpus corpus;
  const Rng base(seed);

  // Speaker sources.  Celebrities and interferers share one id space;
  // eval speakers follow after them.
  Rng speakers_rng = base.fork("speakers");
  const int num_train_sources = config.num_celebrities + config.interferer_pool;
  auto centers = sample_centers(num_train_sources, config.feature_dim,
                                config.mean_scale, config.min_mean_distance,
                                speakers_rng);
  for (int s = 0; s < num_train_sources; ++s)
    corpus.sources.push_back(make_source(s, centers[static_cast<size_t>(s)],
                                         config, config.component_spread,
                                         speakers_rng));
  Rng eval_rng = base.fork("eval_speakers");
  auto eval_centers =
      sample_centers(config.eval_speakers, config.feature_dim,
                     config.eval_mean_scale, config.eval_min_mean_distance,
                     eval_rng);
  for (int s = 0; s < config.eval_speakers; ++s)
    corpus.sources.push_back(make_source(num_train_sources + s,
                                         eval_centers[static_cast<size_t>(s)],
                                         config, config.eval_component_spread,
                                         eval_rng));

  std::map<int, const SpeakerSource*> by_id;
  for (const auto& s : corpus.sources) by_id[s.speaker_id] = &s;

  const auto add_weak_recording = [&](int recording_id, int celebrity,
                                      Split split) {
    Rng rec_rng = base.fork("recording").fork(
        static_cast<uint64_t>(recording_id));
    const int extra =
        config.speakers_per_recording_min - 1 +
        rec_rng.uniform_int(config.speakers_per_recording_max -
                            config.speakers_per_recording_min + 1);
    std::vector<int> pool(static_cast<size_t>(config.interferer_pool));
    for (int i = 0; i < config.interferer_pool; ++i)
      pool[static_cast<size_t>(i)] = config.num_celebrities + i;
    rec_rng.shuffle(pool);
    pool.resize(static_cast<size_t>(std::min(extra, config.interferer_pool)));
    RecordingScript script =
        make_script(recording_id, celebrity, pool, config, rec_rng);
    corpus.recordings.push_back(
        render_script(script, by_id, config.noise_sigma, rec_rng));
    corpus.split.push_back(split);
    corpus.scripts.push_back(std::move(script));
  };

  int next_id = 0;
  for (int j = 0; j < config.num_celebrities; ++j)
    for (int r = 0; r < config.recordings_per_celebrity; ++r)
      add_weak_recording(next_id++, j, Split::Train);
  for (int j = 0; j < config.cv_speakers; ++j)
    for (int r = 0; r < config.cv_recordings_per_speaker; ++r)
      add_weak_recording(next_id++, j, Split::CrossValidation);

  // Single-speaker held-out utterances for verification trials.
  for (int s = 0; s < config.eval_speakers; ++s) {
    const int speaker_id = num_train_sources + s;
    for (int u = 0; u < config.eval_utterances_per_speaker; ++u) {
      const int recording_id = next_id++;
      Rng rec_rng = base.fork("recording").fork(
          static_cast<uint64_t>(recording_id));
      RecordingScript script;
      script.recording_id = recording_id;
      script.target_id = speaker_id;
      const int frames =
          config.eval_frames_min +
          rec_rng.uniform_int(config.eval_frames_max - config.eval_frames_min +
                              1);
      script.turns.push_back(Turn{speaker_id, frames});
      corpus.recordings.push_back(
          render_script(script, by_id, config.noise_sigma, rec_rng));
      corpus.split.push_back(Split::Eval);
      corpus.scripts.push_back(std::move(script));
    }
  }
  return corpus;
}

TrialList emit_trials(const std::vector<WeaklyLabeledRecording>& held_out,
                      int trials_per_speaker, uint64_t seed) {
  std::map<int, std::vector<int>> by_speaker;  // speaker -> utterance ids
  for (const auto& rec : held_out)
    by_speaker[rec.weak_label].push_back(rec.recording_id);
  if (by_speaker.size() < 2)
    throw ConfigError("emit_trials needs at least 2 held-out speakers");
  const int num_target = trials_per_speaker / 2;
  const int num_nontarget = trials_per_speaker - num_target;

  const Rng base(seed);
  TrialList out;
  for (const auto& [speaker, utts] : by_speaker) {
    Rng rng = base.fork("trials").fork(static_cast<uint64_t>(speaker));
    const int n = static_cast<int>(utts.size());
    // Ordered same-speaker pairs, no self-pairs.
    std::vector<std::pair<int, int>> target_pairs;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b) target_pairs.emplace_back(utts[static_cast<size_t>(a)],
                                              utts[static_cast<size_t>(b)]);
    if (static_cast<int>(target_pairs.size()) < num_target)
      throw ConfigError(
          "speaker " + std::to_string(speaker) + " has too few utterances (" +
          std::to_string(n) + ") for " + std::to_string(num_target) +
          " target trials; target trials need >= 2 utterances per speaker");
    rng.shuffle(target_pairs);
    for (int i = 0; i < num_target; ++i)
      out.trials.push_back(
          Trial{target_pairs[static_cast<size_t>(i)].first,
                target_pairs[static_cast<size_t>(i)].second, true});

    std::vector<std::pair<int, int>> nontarget_pairs;
    for (const auto& [other, other_utts] : by_speaker) {
      if (other == speaker) continue;
      for (int e : utts)
        for (int t : other_utts) nontarget_pairs.emplace_back(e, t);
    }
    if (static_cast<int>(nontarget_pairs.size()) < num_nontarget)
      throw ConfigError("not enough cross-speaker pairs for speaker " +
                        std::to_string(speaker));
    rng.shuffle(nontarget_pairs);
    for (int i = 0; i < num_nontarget; ++i)
      out.trials.push_back(
          Trial{nontarget_pairs[static_cast<size_t>(i)].first,
                nontarget_pairs[static_cast<size_t>(i)].second, false});
  }
  return out;
}

void write_corpus(const SyntheticCorpus& corpus,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> train, cv, eval;
  for (size_t i = 0; i < corpus.recordings.size(); ++i) {
    const auto& rec = corpus.recordings[i];
    const std::string name = recording_dir_name(rec.recording_id);
    write_feature_file(dir / name / "features.feat", rec.features);
    write_label_file(dir / name / "frames.labels", rec.ground_truth);
    ManifestEntry e{rec.recording_id, rec.weak_label, name + "/features.feat"};
    switch (corpus.split[i]) {
      case Split::Train: train.push_back(e); break;
      case Split::CrossValidation: cv.push_back(e); break;
      case Split::Eval: eval.push_back(e); break;
    }
  }
  write_manifest(dir / "manifest_train.tsv", train);
  write_manifest(dir / "manifest_cv.tsv", cv);
  write_manifest(dir / "manifest_eval.tsv", eval);
}

std::vector<LoadedRecording> load_corpus_split(
    const std::filesystem::path& dir, const std::string& split,
    bool with_ground_truth) {
  const auto manifest_path = dir / ("manifest_" + split + ".tsv");
  if (!std::filesystem::exists(manifest_path))
    throw MissingArtifactError("missing manifest " + manifest_path.string() +
                               "; run `weakspk synth` (or ingest) first");
  std::vector<LoadedRecording> out;
  for (const auto& e : read_manifest(manifest_path)) {
    LoadedRecording rec;
    rec.recording_id = e.recording_id;
    rec.weak_label = e.weak_label;
    rec.features = read_feature_file(dir / e.path);
    if (with_ground_truth) {
      const auto label_path =
          dir / std::filesystem::path(e.path).parent_path() / "frames.labels";
      if (std::filesystem::exists(label_path))
        rec.ground_truth = read_label_file(label_path);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace weakspk
