#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fmridec/autodiff.hpp"

namespace fmridec::nn {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);

// FNV-1a over the raw bytes of every parameter value, in registration order.
uint64_t checksum(const std::vector<Parameter*>& params);

struct Linear {
  Parameter w;  // [in x out]
  Parameter b;  // [1 x out]

  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  Var operator()(Tape& t, Var x, bool trainable = true);
  void collect(std::vector<Parameter*>& out);
};

struct AttentionParams {
  Linear q, k, v, proj;
};

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int width = 64;
  int ff_mult = 4;
  bool causal = false;
  double ln_eps = 1e-5;
};

struct TransformerBlock {
  Parameter ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams attn;
  Linear fc, proj;

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, const TransformerConfig& cfg, std::mt19937_64& rng);
  void collect(std::vector<Parameter*>& out);
};

// Pre-norm residual transformer over a [T x width] sequence. The causal flag
// masks attention to positions <= t.
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const std::string& name, TransformerConfig cfg, std::mt19937_64& rng);

  Var forward(Tape& t, Var x, bool trainable = true);
  void collect(std::vector<Parameter*>& out);
  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  std::vector<TransformerBlock> blocks_;
};

// Decoupled-weight-decay Adam over registered parameters.
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  std::vector<Parameter*> params;
  int64_t t = 0;

  void add(const std::vector<Parameter*>& ps, double lr_for_group);
  void zero_grad();
  void step();

 private:
  std::vector<double> group_lr_;  // per-parameter learning rate
};

struct PromptMapperConfig {
  int input_dim = 0;      // voxels V or feature dim
  int width = 512;
  int layers = 8;
  int heads = 8;
  int k = 30;             // prompt length
  int d_lm = 768;         // LM embedding width
  int max_input_len = 512;
};

// Maps a variable-length [n x input_dim] sequence to exactly k prompt
// vectors of d_lm: project inputs to width, add learned positions, append k
// learned query rows, run a bidirectional transformer, and project the k
// query outputs out. Input order matters through the positional table.
class PromptMapper {
 public:
  PromptMapper() = default;
  PromptMapper(const std::string& name, PromptMapperConfig cfg, std::mt19937_64& rng);

  Var map(Tape& t, const Mat& input, bool trainable = true);
  Mat map_value(const Mat& input);  // grad-free convenience

  const PromptMapperConfig& config() const { return cfg_; }
  void collect(std::vector<Parameter*>& out);
  std::vector<Parameter*> parameters();
  uint64_t checksum();

 private:
  PromptMapperConfig cfg_;
  Linear input_proj_;
  Parameter queries_;  // [k x width]
  Parameter pos_;      // [max_input_len x width]
  TransformerStack body_;
  Linear output_proj_;
};

}  // namespace fmridec::nn
