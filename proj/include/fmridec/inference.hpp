#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmridec/brain_encoder.hpp"
#include "fmridec/corpus.hpp"
#include "fmridec/lm.hpp"

namespace fmridec {

// Ridge regressor from a flattened window's voxel responses to the number
// of words spoken in that window; the word-count stopping strategy reads
// its prediction. Fit by SVD shrinkage; predictions round half away from
// zero and clamp to [1, hard_cap].
struct WordRateModel {
  Eigen::VectorXd weights;  // one per flattened fMRI entry
  double intercept = 0.0;
  int hard_cap = 1;
  double train_mae = 0.0;
  double validation_mae = 0.0;

  double predict_raw(const FmriWindow& window) const;
  int predict(const FmriWindow& window) const;
};

WordRateModel train_word_rate(const CorpusSplit& corpus, double ridge_lambda, int hard_cap);

enum class StopStrategy { alignment, wordrate };

inline const char* to_string(StopStrategy s) {
  return s == StopStrategy::alignment ? "alignment" : "wordrate";
}

struct DecodeResult {
  std::string story_id;
  int window_index = 0;
  std::string hypothesis;  // alignment tokens stripped, space-joined
  std::vector<int> token_ids;
  bool truncated = false;
  StopStrategy stop_kind = StopStrategy::alignment;
  std::string error;  // non-empty when this window failed and was recorded

  std::vector<std::string> hypothesis_words() const;
};

struct DecodeOptions {
  StopStrategy strategy = StopStrategy::alignment;
  DecodeConfig decode;
  int hard_cap = 0;  // 0: derive as 4x the mean train-window token count
  // required when strategy == wordrate
  std::optional<WordRateModel> word_rate;
};

// Resolves hard_cap = 4 x mean train-window token count (rounded up).
int default_hard_cap(const std::vector<WindowPair>& train_windows);

DecodeResult decode_window(FmriEncoder& encoder, LmBackend& backend,
                           const FmriWindow& fmri, const DecodeOptions& opts,
                           const Tokenizer& tokenizer);

// Order-stable map of decode_window over `windows`; per-window failures are
// recorded in the result and the run continues.
std::vector<DecodeResult> decode_windows(FmriEncoder& encoder, LmBackend& backend,
                                         const std::vector<WindowPair>& windows,
                                         const DecodeOptions& opts,
                                         const Tokenizer& tokenizer);

// Decodes the split's test windows.
std::vector<DecodeResult> decode_corpus(FmriEncoder& encoder, LmBackend& backend,
                                        const CorpusSplit& split, const DecodeOptions& opts,
                                        const Tokenizer& tokenizer);

// Line-delimited records {story_id, window_index, hypothesis, reference,
// truncated, stop_kind}, preceded by one meta record carrying the config
// and split hashes.
void write_decode_results(const std::string& path, const std::vector<DecodeResult>& results,
                          const std::vector<WindowPair>& windows, const Tokenizer& tokenizer,
                          const std::string& config_hash, const std::string& split_hash);

struct DecodeResultsFile {
  std::string config_hash;
  std::string split_hash;
  std::vector<DecodeResult> results;
  std::vector<std::pair<std::string, std::string>> references;  // key "story:index"
};

DecodeResultsFile read_decode_results(const std::string& path);

}  // namespace fmridec
