#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fmridec {
struct TranscriptWindow;
class Tokenizer;
struct DecodeResult;
}  // namespace fmridec

namespace fmridec::metrics {

using Mat = Eigen::MatrixXd;

// Provider of contextual token embeddings for BERTScore: one row per word.
class TokenEmbedder {
 public:
  virtual ~TokenEmbedder() = default;
  virtual Mat embed(const std::vector<std::string>& words) const = 0;
};

// Clipped unigram precision times brevity penalty. Empty hypothesis scores 0.
double bleu1(const std::vector<std::string>& hypothesis,
             const std::vector<std::string>& reference);

struct MeteorDetail {
  int matches = 0;
  int chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

// Unigram alignment with exact then stem matching (maximal per stage,
// earliest-reference tie-break), recall-weighted harmonic mean 9:1, and the
// fragmentation penalty 0.5 * (chunks/matches)^3.
MeteorDetail meteor_detail(const std::vector<std::string>& hypothesis,
                           const std::vector<std::string>& reference);
double meteor(const std::vector<std::string>& hypothesis,
              const std::vector<std::string>& reference);

// Classic Porter stemming, used by the METEOR stem-match stage.
std::string porter_stem(const std::string& word);

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy-max cosine matching of contextual embeddings, no idf weighting, no
// baseline rescaling. An empty side scores 0 with a warning.
BertScore bertscore(const std::vector<std::string>& hypothesis,
                    const std::vector<std::string>& reference,
                    const TokenEmbedder& embedder);

struct WindowScore {
  std::string story_id;
  int window_index = 0;
  double bleu1 = 0.0;
  double meteor = 0.0;
  double bertscore_p = 0.0;
  double bertscore_r = 0.0;
  double bertscore_f1 = 0.0;
};

struct MetricReport {
  std::vector<WindowScore> per_window;
  double avg_bleu1 = 0.0;
  double avg_meteor = 0.0;
  double avg_bertscore_f1 = 0.0;
  double avg_bertscore_p = 0.0;
  double avg_bertscore_r = 0.0;
  int window_count = 0;
};

// Scores each decoded window against its reference (joined 1:1 on
// story_id/window_index) and averages over windows.
MetricReport evaluate(const std::vector<DecodeResult>& results,
                      const std::vector<TranscriptWindow>& references,
                      const Tokenizer& tokenizer, const TokenEmbedder& embedder);

}  // namespace fmridec::metrics
