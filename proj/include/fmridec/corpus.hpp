#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "fmridec/tokenizer.hpp"

namespace fmridec {

using Mat = Eigen::MatrixXd;

struct TranscriptWord {
  std::string text;  // lowercase, punctuation-free
  double onset = 0.0;
  double offset = 0.0;
};

struct Story {
  std::string id;
  std::vector<TranscriptWord> words;
  Mat fmri;  // [T_tr x V]
  double tr_seconds = 0.0;

  Eigen::Index n_tr() const { return fmri.rows(); }
  Eigen::Index voxels() const { return fmri.cols(); }
};

struct FmriWindow {
  std::string story_id;
  int window_index = 0;
  Mat data;  // [n_tr x V]

  int n_tr() const { return static_cast<int>(data.rows()); }
  int voxels() const { return static_cast<int>(data.cols()); }
};

struct TranscriptWindow {
  std::string story_id;
  int window_index = 0;
  std::vector<int> token_ids;
  std::vector<int> alignment_positions;  // indices into token_ids
  int word_count = 0;                    // source words, alignment tokens excluded
};

struct WindowPair {
  FmriWindow fmri;
  TranscriptWindow text;
};

struct CorpusSplit {
  std::vector<WindowPair> train;
  std::vector<WindowPair> test;
  std::vector<std::string> held_out_story_ids;
};

// Normalization applied to every transcript word at ingestion: lowercase
// ASCII, strip punctuation. Returns "" when nothing survives.
std::string normalize_word(const std::string& raw);

// Reads <root>/<subject>/<story>.resp + .words pairs. Validates finiteness,
// word ordering, and a consistent voxel count across stories.
std::vector<Story> load_corpus(const std::string& root_path, const std::string& subject_id);

// Splits one story into consecutive zero-overlap windows. window_seconds
// must be an integer multiple of tr_seconds; a trailing partial window is
// dropped. lag_seconds shifts the fMRI slice relative to the audio clock by
// whole TRs (also a multiple of tr_seconds).
std::vector<WindowPair> window_story(const Story& story, double window_seconds,
                                     const Tokenizer& tokenizer, double lag_seconds = 0.0);

// Interleaves alignment tokens into a draft window whose token_ids hold one
// word token per onset: [words of TR 0] $ [words of TR 1] $ ... $.
TranscriptWindow insert_alignment_tokens(const TranscriptWindow& draft,
                                         const std::vector<double>& word_onsets,
                                         double tr_seconds, int n_tr,
                                         int alignment_token_id);

CorpusSplit make_split(const std::vector<Story>& stories,
                       const std::vector<std::string>& test_story_ids,
                       double window_seconds, const Tokenizer& tokenizer,
                       double lag_seconds = 0.0);

// Exact TR count per window; throws config error unless window_seconds is an
// integer multiple of tr_seconds.
int trs_per_window(double window_seconds, double tr_seconds);

}  // namespace fmridec
