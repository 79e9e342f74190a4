#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fmridec/autodiff.hpp"
#include "fmridec/nn.hpp"

namespace fmridec {

using ad::Mat;

enum class PromptOrigin { brain, text };

// k continuous vectors in the LM embedding space, prepended before token
// embeddings to condition generation.
struct Prompt {
  Mat vectors;  // [k x d_lm]
  PromptOrigin origin = PromptOrigin::text;

  int k() const { return static_cast<int>(vectors.rows()); }
  void validate(int expected_k) const;  // throws on row mismatch or non-finite
};

enum class StopKind { alignment_count, word_count };

struct StopCriterion {
  StopKind kind = StopKind::alignment_count;
  int target = 1;    // alignment tokens or words, depending on kind
  int hard_cap = 1;  // absolute max generated tokens

  void validate() const;  // target >= 1, hard_cap >= target
};

enum class DecodeKind { greedy, beam };

struct DecodeConfig {
  DecodeKind kind = DecodeKind::greedy;
  int beam_width = 4;
};

struct GenerationResult {
  std::vector<int> token_ids;
  bool truncated = false;
};

enum class LossReduction { mean, sum };

// Single-step scorer the decode loop drives: next-token logits given the
// tokens generated so far. Conditioning context (the prompt) lives in the
// implementation.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual Eigen::VectorXd logits(const std::vector<int>& generated) = 0;
};

// Shared stopping logic for every backend (and for stub scorers in tests).
// alignment_count halts right after the target-th alignment token;
// word_count halts after the target-th non-alignment token. Hitting
// hard_cap before the target flags truncation.
GenerationResult decode_loop(StepScorer& scorer, const StopCriterion& stop,
                             const DecodeConfig& decode, int alignment_token_id);

// Abstraction over a pre-trained autoregressive LM: embed, forward with a
// prompt prefix, generate. trainable=false freezes every LM parameter.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual int vocab_size() const = 0;
  virtual int embed_dim() const = 0;
  virtual bool trainable() const = 0;
  virtual void set_trainable(bool value) = 0;

  virtual Mat embed_tokens(const std::vector<int>& tokens) = 0;

  // Mean (or sum) autoregressive cross entropy of `tokens` conditioned on
  // the prompt prefix. Only text-token positions carry loss terms.
  virtual ad::Var teacher_forced_loss(ad::Tape& tape, ad::Var prompt,
                                      const std::vector<int>& tokens,
                                      LossReduction reduction = LossReduction::mean) = 0;

  virtual GenerationResult generate(const Mat& prompt, const StopCriterion& stop,
                                    const DecodeConfig& decode, int alignment_token_id) = 0;

  virtual std::vector<ad::Parameter*> parameters() = 0;
  virtual uint64_t checksum() = 0;
};

struct GptConfig {
  int vocab = 0;
  int d_model = 768;
  int layers = 12;
  int heads = 12;
  int max_seq = 1024;
  uint64_t init_seed = 1;
};

// GPT-style decoder trained from scratch: learned token + position tables,
// causal pre-norm transformer, untied output head. Prompt vectors are
// injected as input embeddings before the token embeddings, with positions
// running over the concatenated sequence.
class GptLm : public LmBackend {
 public:
  GptLm(GptConfig cfg, bool trainable = true);

  int vocab_size() const override { return cfg_.vocab; }
  int embed_dim() const override { return cfg_.d_model; }
  bool trainable() const override { return trainable_; }
  void set_trainable(bool value) override { trainable_ = value; }

  Mat embed_tokens(const std::vector<int>& tokens) override;
  ad::Var teacher_forced_loss(ad::Tape& tape, ad::Var prompt,
                              const std::vector<int>& tokens,
                              LossReduction reduction) override;
  GenerationResult generate(const Mat& prompt, const StopCriterion& stop,
                            const DecodeConfig& decode, int alignment_token_id) override;

  std::vector<ad::Parameter*> parameters() override;
  uint64_t checksum() override;
  const GptConfig& config() const { return cfg_; }

  // Logits over the whole [prompt; tokens] sequence; used by the loss and,
  // one step at a time, by generation.
  ad::Var forward_logits(ad::Tape& tape, ad::Var input_rows);

 private:
  GptConfig cfg_;
  bool trainable_;
  ad::Parameter tok_emb_;  // [vocab x d]
  ad::Parameter pos_emb_;  // [max_seq x d]
  nn::TransformerStack blocks_;
  ad::Parameter lnf_g_, lnf_b_;
  nn::Linear head_;
};

}  // namespace fmridec
