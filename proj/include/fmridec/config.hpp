#pragma once

#include <cstdint>
#include <string>

#include "fmridec/brain_encoder.hpp"
#include "fmridec/lm.hpp"

namespace fmridec {

// Flat dotted-key configuration with defaults matching the reference
// training setup (20 s windows, k=30, tau=0.1, alpha=1, 8x8x512 mapper,
// batch 32). Unknown keys are rejected; the echo is embedded verbatim in
// checkpoints and reports.
struct RunConfig {
  uint64_t seed = 1;

  double window_seconds = 20.0;
  double lag_seconds = 0.0;  // hemodynamic shift of the fMRI slice, in whole TRs

  int prompt_k = 30;
  int mapper_layers = 8;
  int mapper_heads = 8;
  int mapper_width = 512;
  int mapper_max_input_len = 512;

  int features_dim = 768;
  int features_layers = 4;
  int features_heads = 8;
  uint64_t features_seed = 17;

  std::string lm_name = "toy-gpt";
  bool lm_trainable = true;
  int lm_layers = 12;
  int lm_heads = 12;
  int lm_dim = 768;
  int lm_max_seq = 1024;
  std::string lm_pretrained_path;  // checkpoint with lm.* tensors; resolved
                                   // under $FMRIDEC_CACHE_DIR when relative

  int batch_size = 32;
  LossReduction loss_reduction = LossReduction::mean;

  int stage1_epochs = 100;
  double stage1_lr_mapper = 2e-4;
  double stage1_lr_lm = 2e-5;
  double stage1_weight_decay = 0.01;

  int stage2_epochs = 100;
  double stage2_lr_encoder = 2e-4;
  double stage2_lr_lm = 2e-5;
  double stage2_weight_decay = 0.01;
  double stage2_tau = 0.1;
  double stage2_alpha = 1.0;
  bool stage2_reuse_stage1_lm = true;

  PromptFlatten contrastive_flatten = PromptFlatten::concat;
  bool contrastive_include_positive_in_denominator = false;

  DecodeKind decode_kind = DecodeKind::greedy;
  int decode_beam_width = 4;
  int decode_hard_cap = 0;  // 0: 4x mean train-window token count

  double wordrate_lambda = 1.0;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  // Parses and applies one `key = value` assignment; unknown keys and
  // malformed values raise config errors.
  void apply(const std::string& key, const std::string& value);

  std::string echo() const;  // every key, fixed order
  std::string hash() const;  // hex FNV-1a of the echo

  ContrastiveConfig contrastive() const;
};

}  // namespace fmridec
