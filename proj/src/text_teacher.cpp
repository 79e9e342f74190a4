#include "fmridec/text_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmridec/errors.hpp"

namespace fmridec {

Mat TextFeatureExtractor::extract(const TranscriptWindow& window,
                                  const Tokenizer& tokenizer) const {
  const std::vector<std::string> words =
      tokenizer.decode_words(window.token_ids, /*strip_alignment=*/true);
  if (words.empty())
    fail(ErrorKind::validation, "window " + window.story_id + ":" +
                                    std::to_string(window.window_index) +
                                    " is empty after alignment stripping");
  return encoder_.encode(words);
}

ad::Var MappingNetwork::map(ad::Tape& tape, const Mat& features, bool trainable) {
  return net_.map(tape, features, trainable);
}

Prompt MappingNetwork::map_to_prompt(const Mat& features) {
  Prompt p;
  p.vectors = net_.map_value(features);
  p.origin = PromptOrigin::text;
  p.validate(net_.config().k);
  return p;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

double train_stage1(const CorpusSplit& corpus, const TextFeatureExtractor& extractor,
                    MappingNetwork& mapper, LmBackend& backend, const Stage1Config& cfg,
                    const Tokenizer& tokenizer, std::vector<TrainLogRow>* log) {
  if (corpus.train.empty()) fail(ErrorKind::input, "stage 1 needs a non-empty train split");

  // Features are frozen, so extract once. Empty windows are skipped with a
  // warning rather than aborting the run.
  std::vector<Mat> features;
  std::vector<const TranscriptWindow*> windows;
  features.reserve(corpus.train.size());
  for (const WindowPair& pair : corpus.train) {
    try {
      features.push_back(extractor.extract(pair.text, tokenizer));
      windows.push_back(&pair.text);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::validation) throw;
      log_warn(std::string("stage1: skipping window: ") + e.what());
    }
  }
  if (windows.empty()) fail(ErrorKind::input, "stage 1: every train window was skipped");

  nn::AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  opt.add(mapper.parameters(), cfg.lr_mapper);
  if (backend.trainable()) opt.add(backend.parameters(), cfg.lr_lm);

  std::mt19937_64 rng(cfg.seed);
  int step = 0;
  double epoch_mean = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(windows.size(), rng);
    double epoch_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t batch_end = std::min(order.size(), at + cfg.batch_size);
      ad::Tape tape;
      std::vector<ad::Var> losses;
      losses.reserve(batch_end - at);
      for (std::size_t i = at; i < batch_end; ++i) {
        const std::size_t idx = order[i];
        ad::Var prompt = mapper.map(tape, features[idx]);
        losses.push_back(backend.teacher_forced_loss(tape, prompt,
                                                     windows[idx]->token_ids,
                                                     cfg.reduction));
      }
      ad::Var loss = losses.size() == 1
                         ? losses.front()
                         : ad::mean_all(ad::vcat(losses));
      const double value = loss.val()(0, 0);
      if (!std::isfinite(value))
        fail(ErrorKind::divergence,
             "stage 1 loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                 std::to_string(step) + " (lr_mapper=" + std::to_string(cfg.lr_mapper) +
                 ", lr_lm=" + std::to_string(cfg.lr_lm) + ")");
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      ++step;
      epoch_sum += value * static_cast<double>(batch_end - at);
      if (log) log->push_back({step, value, 0.0, value});
    }
    epoch_mean = epoch_sum / static_cast<double>(order.size());
  }
  return epoch_mean;
}

std::vector<Mat> compute_text_prompts(const std::vector<WindowPair>& windows,
                                      const TextFeatureExtractor& extractor,
                                      MappingNetwork& mapper, const Tokenizer& tokenizer) {
  std::vector<Mat> prompts;
  prompts.reserve(windows.size());
  for (const WindowPair& pair : windows)
    prompts.push_back(mapper.map_to_prompt(extractor.extract(pair.text, tokenizer)).vectors);
  return prompts;
}

}  // namespace fmridec
