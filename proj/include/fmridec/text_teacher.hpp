#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fmridec/corpus.hpp"
#include "fmridec/lm.hpp"
#include "fmridec/text_features.hpp"

namespace fmridec {

// Stage-1 feature source: the frozen contextual encoder applied to a
// window's words with alignment tokens stripped. The extractor itself is
// never trained; same window in, same features out.
class TextFeatureExtractor {
 public:
  explicit TextFeatureExtractor(TextEncoderConfig cfg) : encoder_(cfg) {}

  // [n_words x d_feat]; throws a validation error when nothing remains
  // after stripping alignment tokens.
  Mat extract(const TranscriptWindow& window, const Tokenizer& tokenizer) const;

  int feature_dim() const { return encoder_.dim(); }
  const FrozenTextEncoder& encoder() const { return encoder_; }
  uint64_t checksum() const { return encoder_.weights_checksum(); }

 private:
  FrozenTextEncoder encoder_;
};

// Transformer mapping network: projects text features to the model width
// and lets k learned queries attend over them; the k outputs, projected to
// d_lm, are the text prompt.
class MappingNetwork {
 public:
  MappingNetwork(nn::PromptMapperConfig cfg, std::mt19937_64& rng)
      : net_("mapper", cfg, rng) {}

  ad::Var map(ad::Tape& tape, const Mat& features, bool trainable = true);
  Prompt map_to_prompt(const Mat& features);

  const nn::PromptMapperConfig& config() const { return net_.config(); }
  std::vector<ad::Parameter*> parameters() { return net_.parameters(); }
  uint64_t checksum() { return net_.checksum(); }

 private:
  nn::PromptMapper net_;
};

struct TrainLogRow {
  int step = 0;
  double l_brain = 0.0;  // cross-entropy term
  double l_c = 0.0;      // contrastive term (0 in stage 1)
  double l = 0.0;        // combined
};

struct Stage1Config {
  int epochs = 100;
  double lr_mapper = 2e-4;
  double lr_lm = 2e-5;
  double weight_decay = 0.01;
  int batch_size = 32;
  LossReduction reduction = LossReduction::mean;
  uint64_t seed = 1;
};

// Stage 1: learn the text prompt by text reconstruction. Minimizes the
// prompt-conditioned cross entropy of each window's own tokens; the LM is
// fine-tuned as well when backend.trainable() is set.
// Returns the final epoch's mean loss.
double train_stage1(const CorpusSplit& corpus, const TextFeatureExtractor& extractor,
                    MappingNetwork& mapper, LmBackend& backend, const Stage1Config& cfg,
                    const Tokenizer& tokenizer, std::vector<TrainLogRow>* log = nullptr);

// Frozen text prompts for a set of windows, in order. Used as contrastive
// targets in stage 2 and never updated there.
std::vector<Mat> compute_text_prompts(const std::vector<WindowPair>& windows,
                                      const TextFeatureExtractor& extractor,
                                      MappingNetwork& mapper, const Tokenizer& tokenizer);

}  // namespace fmridec
