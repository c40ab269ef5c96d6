#pragma once

#include <filesystem>
#include <string>

#include "weakspk/corpus.hpp"
#include "weakspk/diarization.hpp"
#include "weakspk/selection.hpp"
#include "weakspk/stage2.hpp"
#include "weakspk/trainer.hpp"

namespace weakspk {

// Everything one experiment needs, loadable from a single JSON file.  The
// config hash covers the semantic fields only: paths and the thread count
// never change emitted bytes.
struct PipelineConfig {
  uint64_t seed = 17;
  int threads = 1;
  std::filesystem::path corpus_dir = "corpus";
  std::filesystem::path work_dir = "work";

  CorpusConfig corpus;
  int trials_per_speaker = 20;
  DiarizationConfig diarization;

  std::string stage1_run = "s1_lse";
  TrainConfig stage1_train;
  AggregationConfig stage1_aggregation;
  AamConfig stage1_aam;

  SelectionConfig selection;
  std::string selection_model;  // empty means stage1_run

  std::string stage2_run = "s2_k1";
  Stage2Config stage2;

  int eval_max_frames = 2000;

  static PipelineConfig from_file(const std::filesystem::path& path);
  static PipelineConfig from_json_text(const std::string& text);
  std::string canonical_json() const;  // effective config, sorted keys
  uint64_t config_hash() const;        // over canonical_json minus paths/threads
};

// Subcommand bodies; each is idempotent given unchanged inputs and errors
// with MissingArtifactError when a prior stage has not run.
void cmd_synth(const PipelineConfig& cfg);
void cmd_ingest(const PipelineConfig& cfg, const std::filesystem::path& wav_dir,
                const std::filesystem::path& ingest_manifest);
void cmd_diarize(const PipelineConfig& cfg);
void cmd_train_weak(const PipelineConfig& cfg);
void cmd_select(const PipelineConfig& cfg);
void cmd_train_strong(const PipelineConfig& cfg);
void cmd_eval(const PipelineConfig& cfg,
              const std::filesystem::path& checkpoint);
void cmd_report(const PipelineConfig& cfg);

// Full CLI: parses argv, dispatches, maps errors onto exit codes
// (1 usage/config, 2 missing artifact or bad file, 3 numerical failure).
int run_cli(int argc, char** argv);

}  // namespace weakspk
