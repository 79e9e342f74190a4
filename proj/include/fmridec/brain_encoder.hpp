#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fmridec/corpus.hpp"
#include "fmridec/lm.hpp"
#include "fmridec/text_teacher.hpp"

namespace fmridec {

// Same architecture as the mapping network except for the input linear
// layer, which projects voxel rows instead of text features. One prompt
// vector set per fMRI window.
class FmriEncoder {
 public:
  FmriEncoder(nn::PromptMapperConfig cfg, std::mt19937_64& rng)
      : net_("encoder", cfg, rng) {}

  ad::Var encode(ad::Tape& tape, const FmriWindow& window, bool trainable = true);
  Prompt encode_fmri(const FmriWindow& window);

  const nn::PromptMapperConfig& config() const { return net_.config(); }
  std::vector<ad::Parameter*> parameters() { return net_.parameters(); }
  uint64_t checksum() { return net_.checksum(); }

 private:
  nn::PromptMapper net_;
};

enum class PromptFlatten { concat, mean_pool };

struct ContrastiveConfig {
  double tau = 0.1;    // temperature
  double alpha = 1.0;  // loss weight
  PromptFlatten flatten = PromptFlatten::concat;
  bool include_positive_in_denominator = false;

  void validate() const;  // tau > 0, alpha >= 0
};

// exp(cos(flatten(a), flatten(b)) / tau). A zero-norm prompt is treated as
// cos = 0 with a warning.
double prompt_similarity(const Prompt& a, const Prompt& b, double tau,
                         PromptFlatten flatten = PromptFlatten::concat);

// Mean over anchors i of -log(S_p(i) / S_n(i)), where S_p pairs the anchor
// brain prompt with its own text prompt and S_n sums the anchor's
// similarity to every other sample's brain and text prompts. Needs at
// least two samples so negatives exist.
ad::Var contrastive_loss_var(ad::Tape& tape, const std::vector<ad::Var>& brain_prompts,
                             const std::vector<ad::Var>& text_prompts,
                             const ContrastiveConfig& cfg);
double contrastive_loss(const std::vector<Prompt>& brain_prompts,
                        const std::vector<Prompt>& text_prompts,
                        const ContrastiveConfig& cfg);

// L = L_brain + alpha * L_C
double combined_loss(double ce, double contrastive, double alpha);
ad::Var combined_loss_var(ad::Var ce, ad::Var contrastive, double alpha);

struct Stage2Config {
  int epochs = 100;
  double lr_encoder = 2e-4;
  double lr_lm = 2e-5;
  double weight_decay = 0.01;
  int batch_size = 32;
  LossReduction reduction = LossReduction::mean;
  ContrastiveConfig contrastive;
  uint64_t seed = 2;
};

// Stage 2: train the fMRI encoder (and optionally the LM) against the
// combined objective. text_prompts are the frozen stage-1 prompts aligned
// 1:1 with corpus.train; gradients never reach them. Returns the final
// epoch's mean combined loss.
double train_stage2(const CorpusSplit& corpus, FmriEncoder& encoder,
                    const std::vector<Mat>& text_prompts, LmBackend& backend,
                    const Stage2Config& cfg, std::vector<TrainLogRow>* log = nullptr);

}  // namespace fmridec
