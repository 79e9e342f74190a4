#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmridec/corpus.hpp"

namespace fmridec::synth {

// Desk-scale corpus with a known ground-truth encoding: story text follows a
// low-entropy bigram chain, and each TR's response is a fixed linear image
// of that TR's bag of words plus optional gaussian noise. With
// noise_sigma=0 the text is recoverable from the responses up to the
// encoding's null space, which the overfit suites rely on.
struct SynthSpec {
  std::vector<std::string> vocabulary;
  int n_stories = 5;
  int words_per_story = 240;
  double tr_seconds = 2.0;
  double window_seconds = 20.0;
  int voxels = 64;
  double noise_sigma = 0.0;
  uint64_t seed = 1;
  double words_per_second = 2.0;
};

std::vector<Story> generate(const SynthSpec& spec);

// Writes the on-disk corpus layout (<root>/<subject>/<story>.resp|.words)
// with full double precision so load_corpus round-trips values exactly.
void write_corpus(const std::vector<Story>& stories, const std::string& root_path,
                  const std::string& subject_id);

// Deterministic pseudo-word list ("ba", "ke", ...) for CLI-generated corpora.
std::vector<std::string> default_vocabulary(int size);

}  // namespace fmridec::synth
