#include "fmridec/text_features.hpp"

#include <cmath>
#include <random>

#include "fmridec/errors.hpp"

namespace fmridec {

namespace {

uint64_t fnv1a(const std::string& s, uint64_t seed) {
  uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Mat fixed_randn(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

void layer_norm_inplace(Mat& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    x.row(r) = (x.row(r).array() - mu) / std::sqrt(var + 1e-5);
  }
}

Mat softmax_rows_plain(Mat scores) {
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - mx).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return scores;
}

}  // namespace

FrozenTextEncoder::FrozenTextEncoder(TextEncoderConfig cfg) : cfg_(cfg) {
  if (cfg.dim % cfg.heads != 0)
    fail(ErrorKind::config, "text encoder dim must be divisible by head count");
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ull + 11);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  blocks_.resize(static_cast<std::size_t>(cfg.layers));
  for (Block& b : blocks_) {
    b.wq = fixed_randn(cfg.dim, cfg.dim, s, rng);
    b.wk = fixed_randn(cfg.dim, cfg.dim, s, rng);
    b.wv = fixed_randn(cfg.dim, cfg.dim, s, rng);
    b.wo = fixed_randn(cfg.dim, cfg.dim, s, rng);
    b.fc = fixed_randn(cfg.dim, 2 * cfg.dim, s, rng);
    b.proj = fixed_randn(2 * cfg.dim, cfg.dim, 1.0 / std::sqrt(2.0 * cfg.dim), rng);
  }
}

Mat FrozenTextEncoder::word_embedding(const std::string& word) const {
  std::mt19937_64 rng(fnv1a(word, cfg_.seed));
  std::normal_distribution<double> d(0.0, 1.0);
  Mat row(1, cfg_.dim);
  for (Eigen::Index i = 0; i < cfg_.dim; ++i) row(0, i) = d(rng);
  return row;
}

Mat FrozenTextEncoder::encode(const std::vector<std::string>& words) const {
  if (words.empty()) fail(ErrorKind::input, "text encoder needs at least one word");
  const auto n = static_cast<Eigen::Index>(words.size());
  Mat x(n, cfg_.dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = word_embedding(words[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < cfg_.dim; ++j) {  // sinusoidal positions
      const double rate =
          std::pow(10000.0, -static_cast<double>(j / 2 * 2) / static_cast<double>(cfg_.dim));
      x(i, j) += (j % 2 == 0) ? std::sin(i * rate) : std::cos(i * rate);
    }
  }

  const int dh = cfg_.dim / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const Block& b : blocks_) {
    Mat h = x;
    layer_norm_inplace(h);
    Mat q = h * b.wq, k = h * b.wk, v = h * b.wv;
    Mat attn(n, cfg_.dim);
    for (int hd = 0; hd < cfg_.heads; ++hd) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(hd) * dh;
      Mat scores =
          softmax_rows_plain(q.middleCols(c0, dh) * k.middleCols(c0, dh).transpose() *
                             inv_sqrt_dh);
      attn.middleCols(c0, dh) = scores * v.middleCols(c0, dh);
    }
    x += attn * b.wo;
    Mat h2 = x;
    layer_norm_inplace(h2);
    Mat ff = h2 * b.fc;
    ff = ff.array().tanh();
    x += ff * b.proj;
  }
  layer_norm_inplace(x);
  return x;
}

std::string FrozenTextEncoder::identity() const {
  return "frozen-rand-" + std::to_string(cfg_.dim) + "x" + std::to_string(cfg_.layers) +
         "h" + std::to_string(cfg_.heads) + "-seed" + std::to_string(cfg_.seed);
}

uint64_t FrozenTextEncoder::weights_checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const Mat& m) {
    const auto* p = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < sizeof(double) * static_cast<std::size_t>(m.size()); ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const Block& b : blocks_) {
    mix(b.wq);
    mix(b.wk);
    mix(b.wv);
    mix(b.wo);
    mix(b.fc);
    mix(b.proj);
  }
  return h;
}

}  // namespace fmridec
