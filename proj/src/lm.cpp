#include "fmridec/lm.hpp"

#include <algorithm>
#include <cmath>

#include "fmridec/errors.hpp"

namespace fmridec {

void Prompt::validate(int expected_k) const {
  if (k() != expected_k)
    fail(ErrorKind::input, "prompt has " + std::to_string(k()) + " vectors, expected " +
                               std::to_string(expected_k));
  if (!vectors.allFinite()) fail(ErrorKind::validation, "prompt contains non-finite values");
}

void StopCriterion::validate() const {
  if (target < 1) fail(ErrorKind::config, "stop criterion target must be >= 1");
  if (hard_cap < target)
    fail(ErrorKind::config, "stop criterion hard_cap must be >= target");
}

namespace {

// Lowest id wins ties so greedy decoding is deterministic.
int argmax_logit(const Eigen::VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

bool met(const StopCriterion& stop, int alignment_seen, int words_seen) {
  return stop.kind == StopKind::alignment_count ? alignment_seen >= stop.target
                                                : words_seen >= stop.target;
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  const double lse = std::log((v.array() - mx).exp().sum()) + mx;
  return v.array() - lse;
}

GenerationResult greedy_loop(StepScorer& scorer, const StopCriterion& stop,
                             int alignment_token_id) {
  GenerationResult res;
  int alignment_seen = 0, words_seen = 0;
  while (static_cast<int>(res.token_ids.size()) < stop.hard_cap) {
    const int tok = argmax_logit(scorer.logits(res.token_ids));
    res.token_ids.push_back(tok);
    (tok == alignment_token_id ? alignment_seen : words_seen) += 1;
    if (met(stop, alignment_seen, words_seen)) return res;
  }
  res.truncated = true;
  return res;
}

struct Beam {
  std::vector<int> token_ids;
  double logprob = 0.0;
  int alignment_seen = 0;
  int words_seen = 0;
  bool finished = false;

  double mean_logprob() const {
    return token_ids.empty() ? 0.0 : logprob / static_cast<double>(token_ids.size());
  }
};

bool beam_order(const Beam& a, const Beam& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.token_ids < b.token_ids;  // deterministic tie-break
}

GenerationResult beam_loop(StepScorer& scorer, const StopCriterion& stop,
                           int beam_width, int alignment_token_id) {
  std::vector<Beam> beams{Beam{}};
  for (int step = 0; step < stop.hard_cap; ++step) {
    std::vector<Beam> next;
    bool all_finished = true;
    for (const Beam& beam : beams) {
      if (beam.finished) {
        next.push_back(beam);
        continue;
      }
      all_finished = false;
      Eigen::VectorXd lp = log_softmax(scorer.logits(beam.token_ids));
      // top-`beam_width` expansions of this beam
      std::vector<int> order(static_cast<std::size_t>(lp.size()));
      for (int i = 0; i < lp.size(); ++i) order[static_cast<std::size_t>(i)] = i;
      const int take = std::min<int>(beam_width, static_cast<int>(lp.size()));
      std::partial_sort(order.begin(), order.begin() + take, order.end(),
                        [&lp](int a, int b) {
                          if (lp(a) != lp(b)) return lp(a) > lp(b);
                          return a < b;
                        });
      for (int j = 0; j < take; ++j) {
        Beam child = beam;
        const int tok = order[static_cast<std::size_t>(j)];
        child.token_ids.push_back(tok);
        child.logprob += lp(tok);
        (tok == alignment_token_id ? child.alignment_seen : child.words_seen) += 1;
        child.finished = met(stop, child.alignment_seen, child.words_seen);
        next.push_back(std::move(child));
      }
    }
    if (all_finished) break;
    std::sort(next.begin(), next.end(), beam_order);
    if (static_cast<int>(next.size()) > beam_width) next.resize(beam_width);
    beams = std::move(next);
  }

  const Beam* best = nullptr;
  for (const Beam& b : beams) {
    if (!b.finished) continue;
    if (!best || b.mean_logprob() > best->mean_logprob() ||
        (b.mean_logprob() == best->mean_logprob() && b.token_ids < best->token_ids))
      best = &b;
  }
  GenerationResult res;
  if (best) {
    res.token_ids = best->token_ids;
    return res;
  }
  // nothing finished within the cap: emit the top surviving beam, truncated
  res.token_ids = beams.front().token_ids;
  res.truncated = true;
  return res;
}

}  // namespace

GenerationResult decode_loop(StepScorer& scorer, const StopCriterion& stop,
                             const DecodeConfig& decode, int alignment_token_id) {
  if (stop.target < 1 || stop.hard_cap < 1)
    fail(ErrorKind::config, "stop criterion needs target >= 1 and hard_cap >= 1");
  if (decode.kind == DecodeKind::greedy) return greedy_loop(scorer, stop, alignment_token_id);
  if (decode.beam_width < 1) fail(ErrorKind::config, "beam width must be >= 1");
  return beam_loop(scorer, stop, decode.beam_width, alignment_token_id);
}

// ---- GptLm -----------------------------------------------------------

GptLm::GptLm(GptConfig cfg, bool trainable) : cfg_(cfg), trainable_(trainable) {
  if (cfg.vocab < 1) fail(ErrorKind::config, "LM vocabulary must be non-empty");
  if (cfg.d_model % cfg.heads != 0)
    fail(ErrorKind::config, "LM width must be divisible by head count");
  std::mt19937_64 rng(cfg.init_seed);
  tok_emb_ = ad::Parameter("lm.tok_emb", nn::randn(cfg.vocab, cfg.d_model, 0.02, rng));
  pos_emb_ = ad::Parameter("lm.pos_emb", nn::randn(cfg.max_seq, cfg.d_model, 0.02, rng));
  nn::TransformerConfig tc;
  tc.layers = cfg.layers;
  tc.heads = cfg.heads;
  tc.width = cfg.d_model;
  tc.causal = true;
  blocks_ = nn::TransformerStack("lm", tc, rng);
  lnf_g_ = ad::Parameter("lm.lnf.g", Mat::Ones(1, cfg.d_model));
  lnf_b_ = ad::Parameter("lm.lnf.b", Mat::Zero(1, cfg.d_model));
  head_ = nn::Linear("lm.head", cfg.d_model, cfg.vocab, rng);
}

Mat GptLm::embed_tokens(const std::vector<int>& tokens) {
  Mat out(static_cast<Eigen::Index>(tokens.size()), cfg_.d_model);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg_.vocab)
      fail(ErrorKind::input, "token id " + std::to_string(tokens[i]) +
                                 " outside vocabulary of " + std::to_string(cfg_.vocab));
    out.row(static_cast<Eigen::Index>(i)) = tok_emb_.value.row(tokens[i]);
  }
  return out;
}

ad::Var GptLm::forward_logits(ad::Tape& tape, ad::Var input_rows) {
  const Eigen::Index T = input_rows.rows();
  if (T > cfg_.max_seq)
    fail(ErrorKind::input, "sequence of " + std::to_string(T) +
                               " exceeds LM max_seq " + std::to_string(cfg_.max_seq));
  ad::Var x = ad::add(input_rows, ad::rows(tape.param(pos_emb_, trainable_), 0, T));
  x = blocks_.forward(tape, x, trainable_);
  x = ad::layer_norm_rows(x, tape.param(lnf_g_, trainable_), tape.param(lnf_b_, trainable_));
  return head_(tape, x, trainable_);
}

ad::Var GptLm::teacher_forced_loss(ad::Tape& tape, ad::Var prompt,
                                   const std::vector<int>& tokens,
                                   LossReduction reduction) {
  if (tokens.empty()) fail(ErrorKind::input, "teacher_forced_loss needs tokens");
  if (prompt.rows() < 1) fail(ErrorKind::input, "teacher_forced_loss needs a prompt");
  if (prompt.cols() != cfg_.d_model)
    fail(ErrorKind::input, "prompt width does not match LM embedding dim");

  const Eigen::Index k = prompt.rows();
  const auto L = static_cast<Eigen::Index>(tokens.size());
  ad::Var tok_rows = ad::embedding_rows(tape.param(tok_emb_, trainable_), tokens);
  ad::Var logits = forward_logits(tape, ad::vcat({prompt, tok_rows}));

  // Position k-1 predicts the first token; prompt positions carry no target.
  std::vector<int> labels(static_cast<std::size_t>(k + L), -1);
  for (Eigen::Index j = 0; j < L; ++j)
    labels[static_cast<std::size_t>(k - 1 + j)] = tokens[static_cast<std::size_t>(j)];
  return ad::cross_entropy_rows(logits, labels, reduction == LossReduction::mean);
}

namespace {

class GptStepScorer : public StepScorer {
 public:
  GptStepScorer(GptLm& lm, const Mat& prompt) : lm_(lm), prompt_(prompt) {}

  Eigen::VectorXd logits(const std::vector<int>& generated) override {
    ad::Tape tape(false);
    ad::Var input = generated.empty()
                        ? tape.constant(prompt_)
                        : ad::vcat({tape.constant(prompt_),
                                    tape.constant(lm_.embed_tokens(generated))});
    ad::Var out = lm_.forward_logits(tape, input);
    return out.val().row(out.rows() - 1).transpose();
  }

 private:
  GptLm& lm_;
  const Mat& prompt_;
};

}  // namespace

GenerationResult GptLm::generate(const Mat& prompt, const StopCriterion& stop,
                                 const DecodeConfig& decode, int alignment_token_id) {
  if (prompt.rows() < 1) fail(ErrorKind::input, "generate needs a non-empty prompt");
  if (prompt.cols() != cfg_.d_model)
    fail(ErrorKind::input, "prompt width does not match LM embedding dim");
  stop.validate();
  // the context window bounds generation; running into it means truncation
  StopCriterion effective = stop;
  effective.hard_cap =
      std::min<int>(stop.hard_cap, cfg_.max_seq - static_cast<int>(prompt.rows()));
  if (effective.hard_cap < 1)
    fail(ErrorKind::config, "prompt leaves no room in the LM context window");
  GptStepScorer scorer(*this, prompt);
  return decode_loop(scorer, effective, decode, alignment_token_id);
}

std::vector<ad::Parameter*> GptLm::parameters() {
  std::vector<ad::Parameter*> out;
  out.push_back(&tok_emb_);
  out.push_back(&pos_emb_);
  blocks_.collect(out);
  out.push_back(&lnf_g_);
  out.push_back(&lnf_b_);
  head_.collect(out);
  return out;
}

uint64_t GptLm::checksum() { return nn::checksum(parameters()); }

}  // namespace fmridec
