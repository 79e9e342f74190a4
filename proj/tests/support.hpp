#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fmridec/autodiff.hpp"
#include "fmridec/corpus.hpp"
#include "fmridec/errors.hpp"
#include "fmridec/lm.hpp"
#include "fmridec/synth.hpp"
#include "fmridec/text_features.hpp"

namespace testsup {

using fmridec::ad::Mat;

inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / scale;
}

// Central finite differences on the entries of `storage`, compared against
// `analytic`. `eval` must recompute the scalar loss from the current storage
// contents. Returns the worst relative error over the checked entries.
inline double check_gradient(Mat& storage, const Mat& analytic,
                             const std::function<double()>& eval, double h = 1e-6,
                             int max_entries = 64) {
  if (analytic.rows() != storage.rows() || analytic.cols() != storage.cols())
    throw std::runtime_error("check_gradient: shape mismatch");
  double worst = 0.0;
  const Eigen::Index n = storage.size();
  const Eigen::Index stride = std::max<Eigen::Index>(1, n / max_entries);
  for (Eigen::Index i = 0; i < n; i += stride) {
    double* x = storage.data() + i;
    const double keep = *x;
    *x = keep + h;
    const double up = eval();
    *x = keep - h;
    const double down = eval();
    *x = keep;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic(i);
    if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
    worst = std::max(worst, rel_err(an, fd));
  }
  return worst;
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                      double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Unique scratch directory under the build tree; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fmridec_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Tiny two-story corpus (4 s windows, 2 TRs each) for fast training tests;
// story01 is held out.
struct MiniCorpus {
  std::vector<fmridec::Story> stories;
  fmridec::Tokenizer tokenizer;
  fmridec::CorpusSplit split;
};

inline MiniCorpus make_mini_corpus(uint64_t seed = 7, int vocab = 8, int stories = 2,
                                   int words_per_story = 32, int voxels = 6) {
  fmridec::synth::SynthSpec spec;
  spec.vocabulary = fmridec::synth::default_vocabulary(vocab);
  spec.n_stories = stories;
  spec.words_per_story = words_per_story;
  spec.tr_seconds = 2.0;
  spec.window_seconds = 4.0;
  spec.voxels = voxels;
  spec.noise_sigma = 0.0;
  spec.seed = seed;
  MiniCorpus mc;
  mc.stories = fmridec::synth::generate(spec);
  mc.tokenizer = fmridec::Tokenizer::build(mc.stories);
  mc.split = fmridec::make_split(mc.stories, {"story01"}, spec.window_seconds, mc.tokenizer);
  return mc;
}

inline fmridec::GptConfig toy_lm_config(int vocab, uint64_t seed = 3) {
  fmridec::GptConfig cfg;
  cfg.vocab = vocab;
  cfg.d_model = 32;
  cfg.layers = 1;
  cfg.heads = 4;
  cfg.max_seq = 96;
  cfg.init_seed = seed;
  return cfg;
}

inline fmridec::nn::PromptMapperConfig toy_mapper_config(int input_dim, int k = 4,
                                                         int d_lm = 32) {
  fmridec::nn::PromptMapperConfig cfg;
  cfg.input_dim = input_dim;
  cfg.width = 32;
  cfg.layers = 1;
  cfg.heads = 4;
  cfg.k = k;
  cfg.d_lm = d_lm;
  cfg.max_input_len = 48;
  return cfg;
}

inline fmridec::TextEncoderConfig toy_feature_config() {
  fmridec::TextEncoderConfig cfg;
  cfg.dim = 24;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.seed = 17;
  return cfg;
}

// Stub scorer driven by a fixed next-token logit function.
class ScriptedScorer : public fmridec::StepScorer {
 public:
  using Fn = std::function<Eigen::VectorXd(const std::vector<int>&)>;
  explicit ScriptedScorer(Fn fn) : fn_(std::move(fn)) {}
  Eigen::VectorXd logits(const std::vector<int>& generated) override {
    return fn_(generated);
  }

 private:
  Fn fn_;
};

// Backend whose logits are identically zero: every next-token distribution
// is uniform, so the teacher-forced loss is exactly ln(vocab).
class UniformLogitBackend : public fmridec::LmBackend {
 public:
  UniformLogitBackend(int vocab, int dim) : vocab_(vocab), dim_(dim) {}

  int vocab_size() const override { return vocab_; }
  int embed_dim() const override { return dim_; }
  bool trainable() const override { return false; }
  void set_trainable(bool) override {}

  Mat embed_tokens(const std::vector<int>& tokens) override {
    for (int t : tokens)
      if (t < 0 || t >= vocab_) throw fmridec::Error(fmridec::ErrorKind::input, "oov");
    return Mat::Zero(static_cast<Eigen::Index>(tokens.size()), dim_);
  }

  fmridec::ad::Var teacher_forced_loss(fmridec::ad::Tape& tape, fmridec::ad::Var prompt,
                                       const std::vector<int>& tokens,
                                       fmridec::LossReduction reduction) override {
    const Eigen::Index k = prompt.rows();
    const auto L = static_cast<Eigen::Index>(tokens.size());
    fmridec::ad::Var logits = tape.constant(Mat::Zero(k + L, vocab_));
    std::vector<int> labels(static_cast<std::size_t>(k + L), -1);
    for (Eigen::Index j = 0; j < L; ++j)
      labels[static_cast<std::size_t>(k - 1 + j)] = tokens[static_cast<std::size_t>(j)];
    return fmridec::ad::cross_entropy_rows(logits, labels,
                                           reduction == fmridec::LossReduction::mean);
  }

  fmridec::GenerationResult generate(const Mat&, const fmridec::StopCriterion& stop,
                                     const fmridec::DecodeConfig& decode,
                                     int alignment_token_id) override {
    ScriptedScorer scorer(
        [this](const std::vector<int>&) { return Eigen::VectorXd::Zero(vocab_); });
    return fmridec::decode_loop(scorer, stop, decode, alignment_token_id);
  }

  std::vector<fmridec::ad::Parameter*> parameters() override { return {}; }
  uint64_t checksum() override { return 0; }

 private:
  int vocab_;
  int dim_;
};

}  // namespace testsup
