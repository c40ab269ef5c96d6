#include "weakspk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "weakspk/features.hpp"
#include "weakspk/metrics.hpp"
#include "weakspk/threading.hpp"

namespace weakspk {

using nlohmann::json;

namespace {

template <typename T>
void opt_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string hex64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::string recording_dir_name(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rec_%05d", id);
  return buf;
}

json corpus_to_json(const CorpusConfig& c) {
  return json{{"num_celebrities", c.num_celebrities},
              {"interferer_pool", c.interferer_pool},
              {"recordings_per_celebrity", c.recordings_per_celebrity},
              {"cv_speakers", c.cv_speakers},
              {"cv_recordings_per_speaker", c.cv_recordings_per_speaker},
              {"eval_speakers", c.eval_speakers},
              {"eval_utterances_per_speaker", c.eval_utterances_per_speaker},
              {"feature_dim", c.feature_dim},
              {"gmm_components", c.gmm_components},
              {"speakers_per_recording_min", c.speakers_per_recording_min},
              {"speakers_per_recording_max", c.speakers_per_recording_max},
              {"turns_min", c.turns_min},
              {"turns_max", c.turns_max},
              {"turn_frames_min", c.turn_frames_min},
              {"turn_frames_max", c.turn_frames_max},
              {"target_speech_fraction", c.target_speech_fraction},
              {"eval_frames_min", c.eval_frames_min},
              {"eval_frames_max", c.eval_frames_max},
              {"mean_scale", c.mean_scale},
              {"min_mean_distance", c.min_mean_distance},
              {"eval_mean_scale", c.eval_mean_scale},
              {"eval_min_mean_distance", c.eval_min_mean_distance},
              {"component_spread", c.component_spread},
              {"eval_component_spread", c.eval_component_spread},
              {"variance_min", c.variance_min},
              {"variance_max", c.variance_max},
              {"noise_sigma", c.noise_sigma}};
}

void corpus_from_json(const json& j, CorpusConfig& c) {
  opt_get(j, "num_celebrities", c.num_celebrities);
  opt_get(j, "interferer_pool", c.interferer_pool);
  opt_get(j, "recordings_per_celebrity", c.recordings_per_celebrity);
  opt_get(j, "cv_speakers", c.cv_speakers);
  opt_get(j, "cv_recordings_per_speaker", c.cv_recordings_per_speaker);
  opt_get(j, "eval_speakers", c.eval_speakers);
  opt_get(j, "eval_utterances_per_speaker", c.eval_utterances_per_speaker);
  opt_get(j, "feature_dim", c.feature_dim);
  opt_get(j, "gmm_components", c.gmm_components);
  opt_get(j, "speakers_per_recording_min", c.speakers_per_recording_min);
  opt_get(j, "speakers_per_recording_max", c.speakers_per_recording_max);
  opt_get(j, "turns_min", c.turns_min);
  opt_get(j, "turns_max", c.turns_max);
  opt_get(j, "turn_frames_min", c.turn_frames_min);
  opt_get(j, "turn_frames_max", c.turn_frames_max);
  opt_get(j, "target_speech_fraction", c.target_speech_fraction);
  opt_get(j, "eval_frames_min", c.eval_frames_min);
  opt_get(j, "eval_frames_max", c.eval_frames_max);
  opt_get(j, "mean_scale", c.mean_scale);
  opt_get(j, "min_mean_distance", c.min_mean_distance);
  opt_get(j, "eval_mean_scale", c.eval_mean_scale);
  opt_get(j, "eval_min_mean_distance", c.eval_min_mean_distance);
  opt_get(j, "component_spread", c.component_spread);
  opt_get(j, "eval_component_spread", c.eval_component_spread);
  opt_get(j, "variance_min", c.variance_min);
  opt_get(j, "variance_max", c.variance_max);
  opt_get(j, "noise_sigma", c.noise_sigma);
}

json diar_to_json(const DiarizationConfig& d) {
  return json{{"lambda_change", d.lambda_change},
              {"lambda_ahc", d.lambda_ahc},
              {"window_frames", d.window_frames},
              {"min_chunk_frames", d.min_chunk_frames},
              {"gmm_components", d.gmm_components},
              {"em_iterations", d.em_iterations},
              {"refine_iterations", d.refine_iterations},
              {"min_duration_frames", d.min_duration_frames},
              {"self_loop_alpha", d.self_loop_alpha}};
}

void diar_from_json(const json& j, DiarizationConfig& d) {
  opt_get(j, "lambda_change", d.lambda_change);
  opt_get(j, "lambda_ahc", d.lambda_ahc);
  opt_get(j, "window_frames", d.window_frames);
  opt_get(j, "min_chunk_frames", d.min_chunk_frames);
  opt_get(j, "gmm_components", d.gmm_components);
  opt_get(j, "em_iterations", d.em_iterations);
  opt_get(j, "refine_iterations", d.refine_iterations);
  opt_get(j, "min_duration_frames", d.min_duration_frames);
  opt_get(j, "self_loop_alpha", d.self_loop_alpha);
}

json train_to_json(const TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"batch_segments", t.batch_segments},
              {"segment_frames", t.segment_frames},
              {"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"warmup_fraction", t.warmup_fraction},
              {"plateau_patience", t.plateau_patience},
              {"hidden", t.hidden},
              {"embedding_dim", t.embedding_dim}};
}

void train_from_json(const json& j, TrainConfig& t) {
  opt_get(j, "epochs", t.epochs);
  opt_get(j, "batch_segments", t.batch_segments);
  opt_get(j, "segment_frames", t.segment_frames);
  opt_get(j, "learning_rate", t.learning_rate);
  opt_get(j, "momentum", t.momentum);
  opt_get(j, "warmup_fraction", t.warmup_fraction);
  opt_get(j, "plateau_patience", t.plateau_patience);
  opt_get(j, "hidden", t.hidden);
  opt_get(j, "embedding_dim", t.embedding_dim);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::filesystem::path& path) {
  return json::parse(read_text_file(path));
}

// JSON-lines training log; the first line records provenance.
void write_training_log(const std::filesystem::path& path,
                        const std::vector<EpochLog>& log, uint64_t seed,
                        uint64_t config_hash) {
  std::ostringstream os;
  os << json{{"config_hash", hex64(config_hash)}, {"seed", seed}}.dump()
     << '\n';
  for (const auto& e : log) {
    os << json{{"epoch", e.epoch},
               {"train_loss", e.train_loss},
               {"cv_loss", e.cv_loss},
               {"cv_accuracy", e.cv_accuracy},
               {"lr", e.learning_rate},
               {"tau", e.tau},
               {"margin", e.margin},
               {"skipped_steps", e.skipped_steps}}
              .dump()
       << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return from_json_text(os.str());
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " +
                      e.what());
  }
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  PipelineConfig cfg;
  opt_get(j, "seed", cfg.seed);
  opt_get(j, "threads", cfg.threads);
  if (j.contains("paths")) {
    std::string corpus_dir = cfg.corpus_dir.string();
    std::string work_dir = cfg.work_dir.string();
    opt_get(j.at("paths"), "corpus_dir", corpus_dir);
    opt_get(j.at("paths"), "work_dir", work_dir);
    cfg.corpus_dir = corpus_dir;
    cfg.work_dir = work_dir;
  }
  if (j.contains("corpus")) corpus_from_json(j.at("corpus"), cfg.corpus);
  opt_get(j, "trials_per_speaker", cfg.trials_per_speaker);
  if (j.contains("diarization"))
    diar_from_json(j.at("diarization"), cfg.diarization);
  if (j.contains("stage1")) {
    const json& s = j.at("stage1");
    opt_get(s, "run_name", cfg.stage1_run);
    train_from_json(s, cfg.stage1_train);
    if (s.contains("aggregation")) {
      const json& a = s.at("aggregation");
      std::string kind = to_string(cfg.stage1_aggregation.kind);
      opt_get(a, "kind", kind);
      cfg.stage1_aggregation.kind = aggregation_kind_from_string(kind);
      opt_get(a, "tau_start", cfg.stage1_aggregation.tau_start);
      opt_get(a, "tau_end", cfg.stage1_aggregation.tau_end);
      std::string schedule =
          cfg.stage1_aggregation.schedule == TemperatureSchedule::Constant
              ? "constant"
              : "linear";
      opt_get(a, "schedule", schedule);
      if (schedule == "constant")
        cfg.stage1_aggregation.schedule = TemperatureSchedule::Constant;
      else if (schedule == "linear")
        cfg.stage1_aggregation.schedule = TemperatureSchedule::LinearPerEpoch;
      else
        throw ConfigError("unknown tau schedule: " + schedule);
    }
    opt_get(s, "margin", cfg.stage1_aam.margin);
    opt_get(s, "scale", cfg.stage1_aam.scale);
  }
  if (j.contains("selection")) {
    const json& s = j.at("selection");
    opt_get(s, "model_run", cfg.selection_model);
    opt_get(s, "min_frames", cfg.selection.min_frames);
    opt_get(s, "max_frames", cfg.selection.max_frames);
  }
  if (j.contains("stage2")) {
    const json& s = j.at("stage2");
    opt_get(s, "run_name", cfg.stage2_run);
    opt_get(s, "sub_centers", cfg.stage2.sub_centers);
    opt_get(s, "margin_start", cfg.stage2.margin_start);
    opt_get(s, "margin_end", cfg.stage2.margin_end);
    opt_get(s, "scale", cfg.stage2.aam_scale);
    opt_get(s, "min_chunks_per_class", cfg.stage2.min_chunks_per_class);
    opt_get(s, "cv_every", cfg.stage2.cv_every);
    train_from_json(s, cfg.stage2.train);
  }
  if (j.contains("eval"))
    opt_get(j.at("eval"), "max_frames", cfg.eval_max_frames);
  return cfg;
}

namespace {

json pipeline_to_json(const PipelineConfig& cfg, bool include_runtime) {
  json s1 = train_to_json(cfg.stage1_train);
  s1["run_name"] = cfg.stage1_run;
  s1["aggregation"] =
      json{{"kind", to_string(cfg.stage1_aggregation.kind)},
           {"tau_start", cfg.stage1_aggregation.tau_start},
           {"tau_end", cfg.stage1_aggregation.tau_end},
           {"schedule", cfg.stage1_aggregation.schedule ==
                                TemperatureSchedule::Constant
                            ? "constant"
                            : "linear"}};
  s1["margin"] = cfg.stage1_aam.margin;
  s1["scale"] = cfg.stage1_aam.scale;

  json s2 = train_to_json(cfg.stage2.train);
  s2["run_name"] = cfg.stage2_run;
  s2["sub_centers"] = cfg.stage2.sub_centers;
  s2["margin_start"] = cfg.stage2.margin_start;
  s2["margin_end"] = cfg.stage2.margin_end;
  s2["scale"] = cfg.stage2.aam_scale;
  s2["min_chunks_per_class"] = cfg.stage2.min_chunks_per_class;
  s2["cv_every"] = cfg.stage2.cv_every;

  json j{{"seed", cfg.seed},
         {"corpus", corpus_to_json(cfg.corpus)},
         {"trials_per_speaker", cfg.trials_per_speaker},
         {"diarization", diar_to_json(cfg.diarization)},
         {"stage1", s1},
         {"selection",
          json{{"model_run", cfg.selection_model},
               {"min_frames", cfg.selection.min_frames},
               {"max_frames", cfg.selection.max_frames}}},
         {"stage2", s2},
         {"eval", json{{"max_frames", cfg.eval_max_frames}}}};
  if (include_runtime) {
    j["threads"] = cfg.threads;
    j["paths"] = json{{"corpus_dir", cfg.corpus_dir.string()},
                      {"work_dir", cfg.work_dir.string()}};
  }
  return j;
}

}  // namespace

std::string PipelineConfig::canonical_json() const {
  return pipeline_to_json(*this, true).dump(2);
}

uint64_t PipelineConfig::config_hash() const {
  return fnv1a_hash(pipeline_to_json(*this, false).dump());
}

void cmd_synth(const PipelineConfig& cfg) {
  const SyntheticCorpus corpus = synthesize_corpus(cfg.corpus, cfg.seed);
  write_corpus(corpus, cfg.corpus_dir);
  std::vector<WeaklyLabeledRecording> eval_recs;
  for (size_t i = 0; i < corpus.recordings.size(); ++i)
    if (corpus.split[i] == Split::Eval)
      eval_recs.push_back(corpus.recordings[i]);
  const TrialList trials =
      emit_trials(eval_recs, cfg.trials_per_speaker, cfg.seed);
  write_trials(cfg.corpus_dir / "trials.tsv", trials);
  write_json_file(cfg.corpus_dir / "meta.json",
                  json{{"seed", cfg.seed},
                       {"config_hash", hex64(cfg.config_hash())},
                       {"recordings", corpus.recordings.size()},
                       {"trials", trials.trials.size()}});
  std::cerr << "[weakspk] synthesized " << corpus.recordings.size()
            << " recordings, " << trials.trials.size() << " trials\n";
}

void cmd_ingest(const PipelineConfig& cfg, const std::filesystem::path& wav_dir,
                const std::filesystem::path& ingest_manifest) {
  std::ifstream in(ingest_manifest);
  if (!in)
    throw MissingArtifactError("cannot open ingest manifest: " +
                               ingest_manifest.string());
  std::vector<ManifestEntry> train_entries;
  std::string line;
  FbankConfig fb_cfg;
  fb_cfg.n_mels = 80;
  MfccConfig mfcc_cfg;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int id, label;
    std::string rel;
    if (!(ls >> id >> label >> rel))
      throw FormatError("bad ingest manifest line: " + line);
    const Waveform wav = read_wav(wav_dir / rel);
    const FeatureMatrix fb = fbank(wav, fb_cfg);
    const FeatureMatrix mf = mfcc(wav, mfcc_cfg);
    const std::string name = recording_dir_name(id);
    write_feature_file(cfg.corpus_dir / name / "features.feat", fb);
    write_feature_file(cfg.corpus_dir / name / "diar.feat", mf);
    train_entries.push_back(ManifestEntry{id, label, name + "/features.feat"});
  }
  write_manifest(cfg.corpus_dir / "manifest_train.tsv", train_entries);
  write_manifest(cfg.corpus_dir / "manifest_cv.tsv", {});
  write_manifest(cfg.corpus_dir / "manifest_eval.tsv", {});
  write_json_file(cfg.corpus_dir / "meta.json",
                  json{{"seed", cfg.seed},
                       {"config_hash", hex64(cfg.config_hash())},
                       {"recordings", train_entries.size()},
                       {"ingested", true}});
  std::cerr << "[weakspk] ingested " << train_entries.size()
            << " recordings\n";
}

namespace {

// Diarization runs on diar.feat when present (ingested audio: MFCC),
// otherwise on the training features themselves (synthetic corpus).
FeatureMatrix diarization_features(const std::filesystem::path& corpus_dir,
                                   const std::string& feature_path) {
  const auto diar_path = corpus_dir /
                         std::filesystem::path(feature_path).parent_path() /
                         "diar.feat";
  if (std::filesystem::exists(diar_path)) return read_feature_file(diar_path);
  return read_feature_file(corpus_dir / feature_path);
}

std::vector<ManifestEntry> weak_manifests(const PipelineConfig& cfg) {
  std::vector<ManifestEntry> entries;
  for (const char* split : {"train", "cv"}) {
    const auto path =
        cfg.corpus_dir / ("manifest_" + std::string(split) + ".tsv");
    if (!std::filesystem::exists(path))
      throw MissingArtifactError("missing " + path.string() +
                                 "; run `weakspk synth` first");
    for (auto& e : read_manifest(path)) entries.push_back(std::move(e));
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) {
              return a.recording_id < b.recording_id;
            });
  return entries;
}

std::map<int, Clustering> load_clusterings_map(const PipelineConfig& cfg) {
  const auto path = cfg.work_dir / "clusters.tsv";
  if (!std::filesystem::exists(path))
    throw MissingArtifactError("missing " + path.string() +
                               "; run `weakspk diarize` first");
  std::map<int, Clustering> out;
  for (auto& c : read_clusterings(path)) out[c.recording_id] = std::move(c);
  return out;
}

}  // namespace

void cmd_diarize(const PipelineConfig& cfg) {
  const auto entries = weak_manifests(cfg);
  std::vector<Clustering> clusterings(entries.size());
  parallel_for(static_cast<int>(entries.size()), cfg.threads, [&](int i) {
    const auto& e = entries[static_cast<size_t>(i)];
    const FeatureMatrix features =
        diarization_features(cfg.corpus_dir, e.path);
    clusterings[static_cast<size_t>(i)] =
        diarize(features, e.recording_id, cfg.diarization);
  });
  std::filesystem::create_directories(cfg.work_dir);
  write_clusterings(cfg.work_dir / "clusters.tsv", clusterings);
  std::ostringstream rttm;
  for (const auto& c : clusterings)
    write_rttm(rttm, recording_dir_name(c.recording_id), c, 10.0);
  write_text_file(cfg.work_dir / "diarization.rttm", rttm.str());
  write_json_file(cfg.work_dir / "diarization.meta.json",
                  json{{"seed", cfg.seed},
                       {"config_hash", hex64(cfg.config_hash())},
                       {"recordings", clusterings.size()}});
  std::cerr << "[weakspk] diarized " << clusterings.size() << " recordings\n";
}

namespace {

struct WeakTrainingData {
  std::vector<LoadedRecording> recordings;  // owns features
  std::map<int, Clustering> clusterings;    // owns clusterings
  std::vector<TrainRecording> train;
  std::vector<TrainRecording> cv;
};

WeakTrainingData load_weak_training_data(const PipelineConfig& cfg) {
  WeakTrainingData data;
  auto train_recs = load_corpus_split(cfg.corpus_dir, "train", false);
  auto cv_recs = load_corpus_split(cfg.corpus_dir, "cv", false);
  const size_t train_count = train_recs.size();
  data.recordings = std::move(train_recs);
  for (auto& r : cv_recs) data.recordings.push_back(std::move(r));
  data.clusterings = load_clusterings_map(cfg);
  for (size_t i = 0; i < data.recordings.size(); ++i) {
    const auto& rec = data.recordings[i];
    const auto it = data.clusterings.find(rec.recording_id);
    if (it == data.clusterings.end())
      throw MissingArtifactError(
          "no clustering for recording " + std::to_string(rec.recording_id) +
          "; re-run `weakspk diarize`");
    if (rec.weak_label < 0 || rec.weak_label >= cfg.corpus.num_celebrities)
      throw FormatError("weak label " + std::to_string(rec.weak_label) +
                        " outside the configured celebrity range");
    const TrainRecording tr{rec.recording_id, rec.weak_label, &rec.features,
                            &it->second};
    if (i < train_count)
      data.train.push_back(tr);
    else
      data.cv.push_back(tr);
  }
  return data;
}

}  // namespace

void cmd_train_weak(const PipelineConfig& cfg) {
  WeakTrainingData data = load_weak_training_data(cfg);
  TrainConfig train_cfg = cfg.stage1_train;
  train_cfg.threads = cfg.threads;
  const auto base = cfg.work_dir / cfg.stage1_run;
  TrainResult result;
  try {
    result = train_stage1(data.train, data.cv, cfg.corpus.num_celebrities,
                          train_cfg, cfg.stage1_aggregation, cfg.stage1_aam,
                          Rng::derive(cfg.seed, "stage1"));
  } catch (const NumericalError& e) {
    write_json_file(base.string() + ".diverged.json",
                    json{{"error", e.what()},
                         {"seed", cfg.seed},
                         {"config_hash", hex64(cfg.config_hash())}});
    throw;
  }
  save_checkpoint(base.string() + ".ckpt",
                  Checkpoint{result.net, result.head, cfg.seed,
                             cfg.config_hash()});
  write_training_log(base.string() + ".log.jsonl", result.log, cfg.seed,
                     cfg.config_hash());
  std::cerr << "[weakspk] stage-1 run " << cfg.stage1_run
            << ": final cv accuracy "
            << (result.log.empty() ? 0.0 : result.log.back().cv_accuracy)
            << "\n";
}

void cmd_select(const PipelineConfig& cfg) {
  const std::string model =
      cfg.selection_model.empty() ? cfg.stage1_run : cfg.selection_model;
  const auto ckpt_path = cfg.work_dir / (model + ".ckpt");
  if (!std::filesystem::exists(ckpt_path))
    throw MissingArtifactError("missing checkpoint " + ckpt_path.string() +
                               "; run `weakspk train-weak` first");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const auto recordings = load_corpus_split(cfg.corpus_dir, "train", false);
  auto clusterings = load_clusterings_map(cfg);

  std::vector<SelectionRecording> sel;
  for (const auto& rec : recordings) {
    const auto it = clusterings.find(rec.recording_id);
    if (it == clusterings.end())
      throw MissingArtifactError(
          "no clustering for recording " + std::to_string(rec.recording_id) +
          "; re-run `weakspk diarize`");
    sel.push_back(SelectionRecording{rec.recording_id, rec.weak_label,
                                     &rec.features,
                                     it->second.all_chunks()});
  }
  SelectionConfig sel_cfg = cfg.selection;
  sel_cfg.threads = cfg.threads;
  const SelfLabeledSet set =
      build_self_labeled(ckpt.net, ckpt.head, sel, sel_cfg);
  write_self_labeled(cfg.work_dir / "self_labeled.tsv", set, 10.0);
  write_json_file(cfg.work_dir / "self_labeled.summary.json",
                  json{{"speakers", set.speakers_retained},
                       {"chunks", set.num_chunks},
                       {"hours", set.hours},
                       {"model", model},
                       {"seed", cfg.seed},
                       {"config_hash", hex64(cfg.config_hash())}});
  std::cerr << "[weakspk] self-labeled set: " << set.speakers_retained
            << " speakers, " << set.num_chunks << " chunks, " << set.hours
            << " h\n";
}

void cmd_train_strong(const PipelineConfig& cfg) {
  const auto recordings = load_corpus_split(cfg.corpus_dir, "train", false);
  std::map<int, const FeatureMatrix*> features_by_id;
  for (const auto& rec : recordings)
    features_by_id[rec.recording_id] = &rec.features;
  const SelfLabeledSet set =
      read_self_labeled(cfg.work_dir / "self_labeled.tsv", 10.0);
  std::vector<PseudoChunk> chunks;
  for (const auto& [celebrity, list] : set.by_celebrity) {
    for (const auto& c : list) {
      const auto it = features_by_id.find(c.recording_id);
      if (it == features_by_id.end())
        throw MissingArtifactError(
            "self-labeled chunk references unknown recording " +
            std::to_string(c.recording_id) + "; re-run `weakspk select`");
      chunks.push_back(PseudoChunk{c.recording_id, c.chunk, celebrity,
                                   it->second});
    }
  }
  Stage2Config s2 = cfg.stage2;
  s2.train.threads = cfg.threads;
  const auto base = cfg.work_dir / cfg.stage2_run;
  TrainResult result;
  try {
    result = train_stage2(chunks, s2, Rng::derive(cfg.seed, "stage2"));
  } catch (const NumericalError& e) {
    write_json_file(base.string() + ".diverged.json",
                    json{{"error", e.what()},
                         {"seed", cfg.seed},
                         {"config_hash", hex64(cfg.config_hash())}});
    throw;
  }
  save_checkpoint(base.string() + ".ckpt",
                  Checkpoint{result.net, result.head, cfg.seed,
                             cfg.config_hash()});
  write_training_log(base.string() + ".log.jsonl", result.log, cfg.seed,
                     cfg.config_hash());
  std::cerr << "[weakspk] stage-2 run " << cfg.stage2_run
            << ": final cv accuracy "
            << (result.log.empty() ? 0.0 : result.log.back().cv_accuracy)
            << "\n";
}

void cmd_eval(const PipelineConfig& cfg,
              const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto eval_recs = load_corpus_split(cfg.corpus_dir, "eval", false);
  const auto trials_path = cfg.corpus_dir / "trials.tsv";
  if (!std::filesystem::exists(trials_path))
    throw MissingArtifactError("missing " + trials_path.string() +
                               "; run `weakspk synth` first");
  const TrialList trials = read_trials(trials_path);
  std::map<int, const FeatureMatrix*> utterances;
  for (const auto& rec : eval_recs)
    utterances[rec.recording_id] = &rec.features;
  const ScoreSet scores = score_trials(ckpt.net, trials, utterances,
                                       cfg.eval_max_frames, cfg.threads);
  const double eer_value = eer(scores);
  const double dcf_value = min_dcf(scores, 0.05, 1.0, 1.0);

  const std::string stem = checkpoint.stem().string();
  std::filesystem::create_directories(cfg.work_dir);
  write_scores_csv(cfg.work_dir / (stem + ".scores.csv"), scores);

  json metrics{{"run", stem},
               {"eer", eer_value},
               {"min_dcf", dcf_value},
               {"p_tar", 0.05},
               {"num_trials", scores.scores.size()},
               {"seed", cfg.seed},
               {"config_hash", hex64(cfg.config_hash())}};

  // Run description, when the checkpoint matches a configured run.
  if (stem == cfg.stage1_run) {
    metrics["supervision"] = "weak";
    metrics["aggregation"] = to_string(cfg.stage1_aggregation.kind);
    metrics["tau_start"] = cfg.stage1_aggregation.tau_start;
    metrics["tau_end"] = cfg.stage1_aggregation.tau_end;
    metrics["margin"] = cfg.stage1_aam.margin;
    metrics["sub_centers"] = 1;
  } else if (stem == cfg.stage2_run) {
    metrics["supervision"] = "pseudo";
    metrics["aggregation"] = "none";
    metrics["margin"] = cfg.stage2.margin_end;
    metrics["sub_centers"] = cfg.stage2.sub_centers;
  }

  // Diarization quality against hidden ground truth, when cached
  // clusterings exist.
  const auto clusters_path = cfg.work_dir / "clusters.tsv";
  if (std::filesystem::exists(clusters_path)) {
    auto clusterings = load_clusterings_map(cfg);
    double purity_sum = 0, coverage_sum = 0;
    int counted = 0;
    for (const char* split : {"train", "cv"}) {
      for (const auto& rec :
           load_corpus_split(cfg.corpus_dir, split, true)) {
        if (rec.ground_truth.empty()) continue;
        const auto it = clusterings.find(rec.recording_id);
        if (it == clusterings.end()) continue;
        const auto [purity, coverage] =
            purity_coverage(it->second, rec.ground_truth);
        purity_sum += purity;
        coverage_sum += coverage;
        ++counted;
      }
    }
    if (counted > 0) {
      metrics["purity"] = purity_sum / counted;
      metrics["coverage"] = coverage_sum / counted;
    }
  }

  // Selection quality, when a self-labeled manifest exists.
  const auto sl_path = cfg.work_dir / "self_labeled.tsv";
  if (std::filesystem::exists(sl_path)) {
    const SelfLabeledSet set = read_self_labeled(sl_path, 10.0);
    const auto train_recs = load_corpus_split(cfg.corpus_dir, "train", true);
    std::map<int, const std::vector<int>*> ground_truth;
    std::map<int, int> weak_labels;
    for (const auto& rec : train_recs) {
      if (rec.ground_truth.empty()) continue;
      ground_truth[rec.recording_id] = &rec.ground_truth;
      weak_labels[rec.recording_id] = rec.weak_label;
    }
    if (!ground_truth.empty()) {
      const SelectionMetrics sm =
          selection_metrics(set, ground_truth, weak_labels, 10.0);
      metrics["selection_precision"] = sm.precision;
      metrics["selection_recall"] = sm.recall;
      metrics["selection_hours"] = sm.hours_kept;
      if (sm.empty_selection) metrics["selection_empty"] = true;
    }
  }

  // Final cross-validation accuracy from the matching training log.
  const auto log_path = cfg.work_dir / (stem + ".log.jsonl");
  if (std::filesystem::exists(log_path)) {
    std::istringstream in(read_text_file(log_path));
    std::string line, last;
    while (std::getline(in, line))
      if (!line.empty() && line.find("\"epoch\"") != std::string::npos)
        last = line;
    if (!last.empty()) {
      const json e = json::parse(last);
      if (e.contains("cv_accuracy"))
        metrics["cv_accuracy"] = e.at("cv_accuracy").get<double>();
    }
  }

  write_json_file(cfg.work_dir / (stem + ".metrics.json"), metrics);
  std::cerr << "[weakspk] " << stem << ": EER " << eer_value << ", minDCF "
            << dcf_value << "\n";
}

void cmd_report(const PipelineConfig& cfg) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::exists(cfg.work_dir))
    throw MissingArtifactError("work dir " + cfg.work_dir.string() +
                               " does not exist; run `weakspk eval` first");
  for (const auto& entry : std::filesystem::directory_iterator(cfg.work_dir)) {
    const auto name = entry.path().filename().string();
    if (name.size() > 13 &&
        name.substr(name.size() - 13) == ".metrics.json")
      files.push_back(entry.path());
  }
  if (files.empty())
    throw MissingArtifactError("no *.metrics.json under " +
                               cfg.work_dir.string() +
                               "; run `weakspk eval` first");
  std::sort(files.begin(), files.end());

  json rows = json::array();
  for (const auto& f : files) rows.push_back(read_json_file(f));
  write_json_file(cfg.work_dir / "report.json",
                  json{{"seed", cfg.seed},
                       {"config_hash", hex64(cfg.config_hash())},
                       {"runs", rows}});

  const auto cell = [](const json& row, const char* key) -> std::string {
    if (!row.contains(key)) return "";
    const auto& v = row.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer())
      return std::to_string(v.get<long long>());
    return format_double(v.get<double>());
  };
  std::ostringstream csv;
  csv << "run,supervision,aggregation,tau_start,tau_end,margin,sub_centers,"
         "eer,min_dcf,cv_accuracy,selection_precision,selection_recall\n";
  for (const auto& row : rows) {
    csv << cell(row, "run") << ',' << cell(row, "supervision") << ','
        << cell(row, "aggregation") << ',' << cell(row, "tau_start") << ','
        << cell(row, "tau_end") << ',' << cell(row, "margin") << ','
        << cell(row, "sub_centers") << ',' << cell(row, "eer") << ','
        << cell(row, "min_dcf") << ',' << cell(row, "cv_accuracy") << ','
        << cell(row, "selection_precision") << ','
        << cell(row, "selection_recall") << '\n';
  }
  write_text_file(cfg.work_dir / "report.csv", csv.str());
  std::cerr << "[weakspk] report over " << rows.size() << " run(s)\n";
}

int run_cli(int argc, char** argv) {
  CLI::App app{"weakspk: weakly supervised speaker embedding pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config JSON")
      ->required();
  int64_t seed_override = -1;
  app.add_option("--seed", seed_override, "override the config seed");
  int threads_override = 0;
  app.add_option("--threads", threads_override,
                 "worker threads (1 = bit-exact reference order)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  std::string wav_dir, ingest_manifest;
  auto* ingest =
      app.add_subcommand("ingest", "compute features for real recordings");
  ingest->add_option("--wav-dir", wav_dir, "directory with wav files")
      ->required();
  ingest
      ->add_option("--manifest", ingest_manifest,
                   "lines: id label relative_wav_path")
      ->required();
  auto* diarize_cmd =
      app.add_subcommand("diarize", "run the baseline diarizer");
  auto* train_weak =
      app.add_subcommand("train-weak", "stage-1 weakly supervised training");
  auto* select = app.add_subcommand("select", "self-label chunks (stage 1.5)");
  auto* train_strong =
      app.add_subcommand("train-strong", "stage-2 supervised training");
  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "score trials and emit metrics");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint path")
      ->required();
  auto* report = app.add_subcommand("report", "consolidate run metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    PipelineConfig cfg = PipelineConfig::from_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (threads_override > 0) cfg.threads = threads_override;

    if (synth->parsed()) cmd_synth(cfg);
    if (ingest->parsed()) cmd_ingest(cfg, wav_dir, ingest_manifest);
    if (diarize_cmd->parsed()) cmd_diarize(cfg);
    if (train_weak->parsed()) cmd_train_weak(cfg);
    if (select->parsed()) cmd_select(cfg);
    if (train_strong->parsed()) cmd_train_strong(cfg);
    if (eval_cmd->parsed()) cmd_eval(cfg, checkpoint);
    if (report->parsed()) cmd_report(cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "weakspk: config error: " << e.what() << "\n";
    return 1;
  } catch (const MissingArtifactError& e) {
    std::cerr << "weakspk: missing artifact: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "weakspk: bad file: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "weakspk: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "weakspk: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace weakspk
