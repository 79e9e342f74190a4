#include "fmridec/brain_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmridec/errors.hpp"

namespace fmridec {

ad::Var FmriEncoder::encode(ad::Tape& tape, const FmriWindow& window, bool trainable) {
  if (window.voxels() != net_.config().input_dim)
    fail(ErrorKind::config, "window has " + std::to_string(window.voxels()) +
                                " voxels but encoder expects " +
                                std::to_string(net_.config().input_dim));
  return net_.map(tape, window.data, trainable);
}

Prompt FmriEncoder::encode_fmri(const FmriWindow& window) {
  ad::Tape tape(false);
  Prompt p;
  p.vectors = encode(tape, window, false).val();
  p.origin = PromptOrigin::brain;
  p.validate(net_.config().k);
  return p;
}

void ContrastiveConfig::validate() const {
  if (tau <= 0.0) fail(ErrorKind::config, "contrastive tau must be positive");
  if (alpha < 0.0) fail(ErrorKind::config, "contrastive alpha must be non-negative");
}

namespace {

ad::Var flatten_prompt(ad::Var p, PromptFlatten mode) {
  return mode == PromptFlatten::concat ? p : ad::mean_rows(p);
}

// cos between flattened prompts; concat flattening is exactly the
// Frobenius cosine of the unflattened matrices.
ad::Var prompt_cos(ad::Var a, ad::Var b, PromptFlatten mode, bool* zero_norm = nullptr) {
  return ad::cosine(flatten_prompt(a, mode), flatten_prompt(b, mode), zero_norm);
}

}  // namespace

double prompt_similarity(const Prompt& a, const Prompt& b, double tau,
                         PromptFlatten flatten) {
  if (tau <= 0.0) fail(ErrorKind::config, "contrastive tau must be positive");
  if (a.vectors.rows() != b.vectors.rows() || a.vectors.cols() != b.vectors.cols())
    fail(ErrorKind::input, "prompt_similarity: prompt shapes differ");
  ad::Tape tape(false);
  bool zero_norm = false;
  ad::Var c = prompt_cos(tape.constant(a.vectors), tape.constant(b.vectors), flatten,
                         &zero_norm);
  if (zero_norm) log_warn("prompt_similarity: zero-norm prompt, treating cos as 0");
  return std::exp(c.val()(0, 0) / tau);
}

ad::Var contrastive_loss_var(ad::Tape&, const std::vector<ad::Var>& brain_prompts,
                             const std::vector<ad::Var>& text_prompts,
                             const ContrastiveConfig& cfg) {
  cfg.validate();
  const std::size_t n = brain_prompts.size();
  if (n != text_prompts.size())
    fail(ErrorKind::input, "contrastive loss needs paired brain/text batches");
  if (n < 2) fail(ErrorKind::input, "contrastive loss needs at least 2 samples");

  const double inv_tau = 1.0 / cfg.tau;
  std::vector<ad::Var> anchor_terms;
  anchor_terms.reserve(n);
  bool warned = false;
  auto sim = [&](ad::Var a, ad::Var b) {
    bool zero_norm = false;
    ad::Var c = prompt_cos(a, b, cfg.flatten, &zero_norm);
    if (zero_norm && !warned) {
      log_warn("contrastive_loss: zero-norm prompt, treating cos as 0");
      warned = true;
    }
    return ad::cw_exp(ad::scale(c, inv_tau));
  };

  for (std::size_t i = 0; i < n; ++i) {
    ad::Var s_p = sim(brain_prompts[i], text_prompts[i]);
    ad::Var s_n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      ad::Var pair = ad::add(sim(brain_prompts[i], brain_prompts[j]),
                             sim(brain_prompts[i], text_prompts[j]));
      s_n = s_n.defined() ? ad::add(s_n, pair) : pair;
    }
    if (cfg.include_positive_in_denominator) s_n = ad::add(s_n, s_p);
    anchor_terms.push_back(ad::sub(ad::cw_log(s_n), ad::cw_log(s_p)));
  }
  return ad::mean_all(ad::vcat(anchor_terms));
}

double contrastive_loss(const std::vector<Prompt>& brain_prompts,
                        const std::vector<Prompt>& text_prompts,
                        const ContrastiveConfig& cfg) {
  ad::Tape tape(false);
  std::vector<ad::Var> brain, text;
  brain.reserve(brain_prompts.size());
  text.reserve(text_prompts.size());
  for (const Prompt& p : brain_prompts) brain.push_back(tape.constant(p.vectors));
  for (const Prompt& p : text_prompts) text.push_back(tape.constant(p.vectors));
  return contrastive_loss_var(tape, brain, text, cfg).val()(0, 0);
}

double combined_loss(double ce, double contrastive, double alpha) {
  return ce + alpha * contrastive;
}

ad::Var combined_loss_var(ad::Var ce, ad::Var contrastive, double alpha) {
  return ad::add(ce, ad::scale(contrastive, alpha));
}

double train_stage2(const CorpusSplit& corpus, FmriEncoder& encoder,
                    const std::vector<Mat>& text_prompts, LmBackend& backend,
                    const Stage2Config& cfg, std::vector<TrainLogRow>* log) {
  if (corpus.train.empty()) fail(ErrorKind::input, "stage 2 needs a non-empty train split");
  if (text_prompts.size() != corpus.train.size())
    fail(ErrorKind::input, "stage 2 needs one frozen text prompt per train window");
  cfg.contrastive.validate();

  nn::AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  opt.add(encoder.parameters(), cfg.lr_encoder);
  if (backend.trainable()) opt.add(backend.parameters(), cfg.lr_lm);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  int step = 0;
  bool warned_small_batch = false;
  double epoch_mean = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t batch_end = std::min(order.size(), at + cfg.batch_size);
      const std::size_t batch_n = batch_end - at;
      ad::Tape tape;
      std::vector<ad::Var> ce_terms, brain_vars, text_vars;
      ce_terms.reserve(batch_n);
      brain_vars.reserve(batch_n);
      text_vars.reserve(batch_n);
      for (std::size_t i = at; i < batch_end; ++i) {
        const std::size_t idx = order[i];
        ad::Var brain_prompt = encoder.encode(tape, corpus.train[idx].fmri);
        brain_vars.push_back(brain_prompt);
        text_vars.push_back(tape.constant(text_prompts[idx]));  // teacher stays frozen
        ce_terms.push_back(backend.teacher_forced_loss(
            tape, brain_prompt, corpus.train[idx].text.token_ids, cfg.reduction));
      }
      ad::Var ce = ce_terms.size() == 1 ? ce_terms.front() : ad::mean_all(ad::vcat(ce_terms));

      ad::Var total = ce;
      double lc_value = 0.0;
      if (cfg.contrastive.alpha > 0.0 && batch_n >= 2) {
        ad::Var lc = contrastive_loss_var(tape, brain_vars, text_vars, cfg.contrastive);
        lc_value = lc.val()(0, 0);
        total = combined_loss_var(ce, lc, cfg.contrastive.alpha);
      } else if (cfg.contrastive.alpha > 0.0 && !warned_small_batch) {
        log_warn("stage2: batch of 1 has no negatives, contrastive term skipped");
        warned_small_batch = true;
      }

      const double value = total.val()(0, 0);
      if (!std::isfinite(value))
        fail(ErrorKind::divergence,
             "stage 2 loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                 std::to_string(step) + " (lr_encoder=" + std::to_string(cfg.lr_encoder) +
                 ", lr_lm=" + std::to_string(cfg.lr_lm) + ")");
      opt.zero_grad();
      tape.backward(total);
      opt.step();
      ++step;
      epoch_sum += value * static_cast<double>(batch_n);
      if (log) log->push_back({step, ce.val()(0, 0), lc_value, value});
    }
    epoch_mean = epoch_sum / static_cast<double>(order.size());
  }
  return epoch_mean;
}

}  // namespace fmridec
