#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmridec/brain_encoder.hpp"
#include "fmridec/checkpoint.hpp"
#include "fmridec/config.hpp"
#include "fmridec/corpus.hpp"
#include "fmridec/inference.hpp"
#include "fmridec/metrics.hpp"
#include "fmridec/synth.hpp"
#include "fmridec/text_teacher.hpp"

namespace fmridec::run {

// Persisted description of a prepared split: where the corpus lives, how it
// was windowed, the derived vocabulary, and a content hash so downstream
// commands notice when the data changed underneath them.
struct SplitManifest {
  std::string root;
  std::string subject;
  double window_seconds = 20.0;
  double lag_seconds = 0.0;
  std::vector<std::string> test_story_ids;
  std::vector<std::string> vocab;
  std::string split_hash;
  std::string config_hash;

  void save(const std::string& path) const;
  static SplitManifest load(const std::string& path);
};

struct LoadedSplit {
  CorpusSplit split;
  Tokenizer tokenizer;
  SplitManifest manifest;
};

std::string hash_split(const CorpusSplit& split);

SplitManifest cmd_prepare(const std::string& root, const std::string& subject,
                          const std::vector<std::string>& test_story_ids,
                          const RunConfig& cfg, const std::string& out_path);

// Re-windows the corpus per the manifest and verifies the content hash.
LoadedSplit load_split(const std::string& manifest_path);

struct SynthArgs {
  std::string out_root;
  std::string subject = "sub01";
  int vocab = 30;
  int stories = 5;
  int words_per_story = 240;
  int voxels = 64;
  double tr_seconds = 2.0;
  double window_seconds = 20.0;
  double noise_sigma = 0.0;
  double words_per_second = 2.0;
  uint64_t seed = 1;
};

void cmd_synth(const SynthArgs& args);

struct TrainResult {
  std::string checkpoint_path;
  double final_loss = 0.0;
  std::vector<TrainLogRow> log;
};

// stage 1 trains the text teacher; stage 2 needs stage1_ckpt and trains the
// fMRI encoder against the frozen teacher prompts. Writes the checkpoint
// and a step-level loss log (<out>.loss.tsv).
TrainResult cmd_train(int stage, const RunConfig& cfg, const std::string& split_path,
                      const std::string& out_ckpt,
                      const std::string& stage1_ckpt = std::string());

struct DecodeArgs {
  std::string checkpoint;
  std::string split;
  StopStrategy strategy = StopStrategy::alignment;
  bool decode_train_subset = false;  // default decodes the held-out windows
  std::string out_path;
};

std::vector<DecodeResult> cmd_decode(const DecodeArgs& args);

enum class ReportFormat { table, json_lines };

struct EvaluateArgs {
  std::string results_path;
  std::string split_path;
  RunConfig cfg;  // supplies the metric embedder configuration
  ReportFormat format = ReportFormat::table;
  std::string out_path;  // empty: stdout only
};

metrics::MetricReport cmd_evaluate(const EvaluateArgs& args);

struct AblateArgs {
  RunConfig cfg;
  std::string split_path;
  std::vector<uint64_t> seeds = {1, 2, 3};
  bool contrastive_grid = true;  // alpha on/off  x  inference strategy
  bool finetune_grid = true;     // lm fine-tune on/off  x  inference strategy
  std::string work_dir;
};

struct AblateCell {
  std::string setting;  // e.g. "align", "align(noC)", "wr(noF)"
  uint64_t seed = 0;
  double bleu1 = 0.0;
  double meteor = 0.0;
  double bertscore_f1 = 0.0;
};

struct AblateReport {
  std::vector<AblateCell> cells;
  std::string table;  // mean-over-seeds comparison, printable
};

AblateReport cmd_ablate(const AblateArgs& args);

// Loads lm.* tensors from cfg.lm_pretrained_path (resolved under
// $FMRIDEC_CACHE_DIR when relative) into the backend, when set.
void maybe_load_pretrained_lm(GptLm& backend, const RunConfig& cfg);

// Model construction from a config, with per-component seed streams derived
// from cfg.seed. Checkpoint loading assumes models were built this way.
GptLm build_backend(const RunConfig& cfg, int vocab);
MappingNetwork build_mapper(const RunConfig& cfg);
FmriEncoder build_encoder(const RunConfig& cfg, int voxels);
TextFeatureExtractor build_extractor(const RunConfig& cfg);

void write_metric_report(const metrics::MetricReport& report, ReportFormat format,
                         const std::string& out_path, const RunConfig& cfg,
                         const std::string& results_config_hash);

}  // namespace fmridec::run
