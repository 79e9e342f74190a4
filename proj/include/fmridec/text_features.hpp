#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmridec/metrics.hpp"

namespace fmridec {

using Mat = Eigen::MatrixXd;

struct TextEncoderConfig {
  int dim = 768;
  int layers = 4;
  int heads = 8;
  uint64_t seed = 17;
};

// Frozen contextual text encoder: seeded hash embeddings, sinusoidal
// positions, and a fixed-weight bidirectional transformer. It stands in for
// a pre-trained masked-LM encoder at desk scale: deterministic, never
// updated, and context-sensitive (the same word embeds differently in
// different neighborhoods).
class FrozenTextEncoder : public metrics::TokenEmbedder {
 public:
  explicit FrozenTextEncoder(TextEncoderConfig cfg);

  // One row of contextual features per word.
  Mat encode(const std::vector<std::string>& words) const;
  Mat embed(const std::vector<std::string>& words) const override { return encode(words); }

  int dim() const { return cfg_.dim; }
  std::string identity() const;
  uint64_t weights_checksum() const;

 private:
  struct Block {
    Mat wq, wk, wv, wo, fc, proj;
  };

  Mat word_embedding(const std::string& word) const;

  TextEncoderConfig cfg_;
  std::vector<Block> blocks_;
};

}  // namespace fmridec
