#include "fmridec/nn.hpp"

#include <cmath>
#include <cstring>

#include "fmridec/errors.hpp"

namespace fmridec::nn {

Mat randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

uint64_t checksum(const std::vector<Parameter*>& params) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter* p : params)
    mix(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  return h;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out,
               std::mt19937_64& rng)
    : w(name + ".w", randn(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      b(name + ".b", Mat::Zero(1, out)) {}

Var Linear::operator()(Tape& t, Var x, bool trainable) {
  return ad::add_rowvec(ad::matmul(x, t.param(w, trainable)), t.param(b, trainable));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&w);
  out.push_back(&b);
}

TransformerBlock::TransformerBlock(const std::string& name, const TransformerConfig& cfg,
                                   std::mt19937_64& rng)
    : ln1_g(name + ".ln1.g", Mat::Ones(1, cfg.width)),
      ln1_b(name + ".ln1.b", Mat::Zero(1, cfg.width)),
      ln2_g(name + ".ln2.g", Mat::Ones(1, cfg.width)),
      ln2_b(name + ".ln2.b", Mat::Zero(1, cfg.width)) {
  attn.q = Linear(name + ".attn.q", cfg.width, cfg.width, rng);
  attn.k = Linear(name + ".attn.k", cfg.width, cfg.width, rng);
  attn.v = Linear(name + ".attn.v", cfg.width, cfg.width, rng);
  attn.proj = Linear(name + ".attn.proj", cfg.width, cfg.width, rng);
  fc = Linear(name + ".mlp.fc", cfg.width, cfg.width * cfg.ff_mult, rng);
  proj = Linear(name + ".mlp.proj", cfg.width * cfg.ff_mult, cfg.width, rng);
}

void TransformerBlock::collect(std::vector<Parameter*>& out) {
  out.push_back(&ln1_g);
  out.push_back(&ln1_b);
  attn.q.collect(out);
  attn.k.collect(out);
  attn.v.collect(out);
  attn.proj.collect(out);
  out.push_back(&ln2_g);
  out.push_back(&ln2_b);
  fc.collect(out);
  proj.collect(out);
}

TransformerStack::TransformerStack(const std::string& name, TransformerConfig cfg,
                                   std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.width % cfg.heads != 0)
    fail(ErrorKind::config, "transformer width must be divisible by head count");
  blocks_.reserve(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l)
    blocks_.emplace_back(name + ".block" + std::to_string(l), cfg, rng);
}

Var TransformerStack::forward(Tape& t, Var x, bool trainable) {
  const Eigen::Index T = x.rows();
  const int dh = cfg_.width / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Var mask;
  if (cfg_.causal) {
    Mat m = Mat::Zero(T, T);
    for (Eigen::Index r = 0; r < T; ++r)
      for (Eigen::Index c = r + 1; c < T; ++c) m(r, c) = -1e30;
    mask = t.constant(std::move(m));
  }

  for (TransformerBlock& blk : blocks_) {
    Var h = ad::layer_norm_rows(x, t.param(blk.ln1_g, trainable),
                                t.param(blk.ln1_b, trainable), cfg_.ln_eps);
    Var q = blk.attn.q(t, h, trainable);
    Var k = blk.attn.k(t, h, trainable);
    Var v = blk.attn.v(t, h, trainable);
    std::vector<Var> head_outs;
    head_outs.reserve(static_cast<std::size_t>(cfg_.heads));
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      Var qh = ad::cols(q, hd * dh, dh);
      Var kh = ad::cols(k, hd * dh, dh);
      Var vh = ad::cols(v, hd * dh, dh);
      Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh);
      if (cfg_.causal) scores = ad::add(scores, mask);
      head_outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
    }
    Var attn_out = blk.attn.proj(t, ad::hcat(head_outs), trainable);
    x = ad::add(x, attn_out);
    Var h2 = ad::layer_norm_rows(x, t.param(blk.ln2_g, trainable),
                                 t.param(blk.ln2_b, trainable), cfg_.ln_eps);
    Var mlp_out = blk.proj(t, ad::gelu(blk.fc(t, h2, trainable)), trainable);
    x = ad::add(x, mlp_out);
  }
  return x;
}

void TransformerStack::collect(std::vector<Parameter*>& out) {
  for (TransformerBlock& b : blocks_) b.collect(out);
}

void AdamW::add(const std::vector<Parameter*>& ps, double lr_for_group) {
  for (Parameter* p : ps) {
    params.push_back(p);
    group_lr_.push_back(lr_for_group);
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params) p->zero_grad();
}

void AdamW::step() {
  ++t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.grad.size() == 0) p.zero_grad();
    if (p.m.size() == 0) {
      p.m = Mat::Zero(p.value.rows(), p.value.cols());
      p.v = Mat::Zero(p.value.rows(), p.value.cols());
    }
    const double lr_i = group_lr_[i] > 0 ? group_lr_[i] : lr;
    p.m = beta1 * p.m + (1.0 - beta1) * p.grad;
    p.v = beta2 * p.v + (1.0 - beta2) * p.grad.cwiseProduct(p.grad);
    Mat mhat = p.m / bc1;
    Mat vhat = p.v / bc2;
    p.value -= lr_i * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    if (weight_decay > 0.0) p.value -= lr_i * weight_decay * p.value;
  }
}

PromptMapper::PromptMapper(const std::string& name, PromptMapperConfig cfg,
                           std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.input_dim <= 0) fail(ErrorKind::config, "prompt mapper needs input_dim > 0");
  if (cfg.k < 1) fail(ErrorKind::config, "prompt length k must be >= 1");
  input_proj_ = Linear(name + ".input", cfg.input_dim, cfg.width, rng);
  queries_ = Parameter(name + ".queries", randn(cfg.k, cfg.width, 0.02, rng));
  pos_ = Parameter(name + ".pos", randn(cfg.max_input_len, cfg.width, 0.02, rng));
  TransformerConfig tc;
  tc.layers = cfg.layers;
  tc.heads = cfg.heads;
  tc.width = cfg.width;
  tc.causal = false;
  body_ = TransformerStack(name + ".body", tc, rng);
  output_proj_ = Linear(name + ".output", cfg.width, cfg.d_lm, rng);
}

Var PromptMapper::map(Tape& t, const Mat& input, bool trainable) {
  if (input.rows() < 1) fail(ErrorKind::input, "prompt mapper input must be non-empty");
  if (input.cols() != cfg_.input_dim)
    fail(ErrorKind::config, "prompt mapper input width " + std::to_string(input.cols()) +
                                " does not match configured " +
                                std::to_string(cfg_.input_dim));
  if (input.rows() > cfg_.max_input_len)
    fail(ErrorKind::config, "prompt mapper input longer than max_input_len");
  const Eigen::Index n = input.rows();
  Var x = input_proj_(t, t.constant(input), trainable);
  x = ad::add(x, ad::rows(t.param(pos_, trainable), 0, n));
  Var seq = ad::vcat({x, t.param(queries_, trainable)});
  Var h = body_.forward(t, seq, trainable);
  return output_proj_(t, ad::rows(h, n, cfg_.k), trainable);
}

Mat PromptMapper::map_value(const Mat& input) {
  Tape t(false);
  return map(t, input, false).val();
}

void PromptMapper::collect(std::vector<Parameter*>& out) {
  input_proj_.collect(out);
  out.push_back(&queries_);
  out.push_back(&pos_);
  body_.collect(out);
  output_proj_.collect(out);
}

std::vector<Parameter*> PromptMapper::parameters() {
  std::vector<Parameter*> out;
  collect(out);
  return out;
}

uint64_t PromptMapper::checksum() { return nn::checksum(parameters()); }

}  // namespace fmridec::nn
