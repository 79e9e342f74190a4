#include "fmridec/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fmridec/errors.hpp"

namespace fmridec {

namespace {

Eigen::VectorXd flatten_window(const FmriWindow& w) {
  Eigen::VectorXd out(w.data.size());
  Eigen::Index at = 0;
  for (Eigen::Index r = 0; r < w.data.rows(); ++r)
    for (Eigen::Index c = 0; c < w.data.cols(); ++c) out(at++) = w.data(r, c);
  return out;
}

double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  return (pred - truth).cwiseAbs().mean();
}

}  // namespace

double WordRateModel::predict_raw(const FmriWindow& window) const {
  const Eigen::VectorXd x = flatten_window(window);
  if (x.size() != weights.size())
    fail(ErrorKind::input, "word rate model saw " + std::to_string(x.size()) +
                               " features, expected " + std::to_string(weights.size()));
  return weights.dot(x) + intercept;
}

int WordRateModel::predict(const FmriWindow& window) const {
  const double raw = predict_raw(window);
  const double rounded = std::round(std::abs(raw)) * (raw < 0 ? -1.0 : 1.0);
  return std::clamp(static_cast<int>(rounded), 1, hard_cap);
}

WordRateModel train_word_rate(const CorpusSplit& corpus, double ridge_lambda, int hard_cap) {
  const auto& windows = corpus.train;
  if (windows.size() < 2) fail(ErrorKind::input, "word rate model needs >= 2 train windows");
  if (hard_cap < 1) fail(ErrorKind::config, "word rate hard_cap must be >= 1");

  const Eigen::Index n = static_cast<Eigen::Index>(windows.size());
  const Eigen::Index d = windows.front().fmri.data.size();
  Mat x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = flatten_window(windows[static_cast<std::size_t>(i)].fmri).transpose();
    y(i) = windows[static_cast<std::size_t>(i)].text.word_count;
  }

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  Mat xc = x.rowwise() - x_mean;
  Eigen::VectorXd yc = y.array() - y_mean;

  // SVD shrinkage: w = V diag(s / (s^2 + lambda)) U^T yc
  Eigen::BDCSVD<Mat> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  double lambda = ridge_lambda;
  if (lambda < 0.0) fail(ErrorKind::config, "ridge lambda must be non-negative");
  const double smax = s.size() > 0 ? s(0) : 0.0;
  if (lambda < 1e-12 && (smax <= 0.0 || s(s.size() - 1) < 1e-10 * smax)) {
    lambda = std::max(1e-8 * smax * smax, 1e-12);
    log_warn("word rate system is singular; raising ridge lambda to " +
             std::to_string(lambda));
  }
  Eigen::VectorXd shrink(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) shrink(i) = s(i) / (s(i) * s(i) + lambda);
  WordRateModel model;
  model.weights = svd.matrixV() * shrink.asDiagonal() * (svd.matrixU().transpose() * yc);
  model.intercept = y_mean - x_mean * model.weights;
  model.hard_cap = hard_cap;

  Eigen::VectorXd fitted = (x * model.weights).array() + model.intercept;
  model.train_mae = mae(fitted, y);
  // simple tail holdout for a validation figure; refit is not worth it at
  // this scale, so this reports generalization of the full-data fit
  const Eigen::Index val_n = n >= 8 ? n / 4 : 0;
  model.validation_mae =
      val_n > 0 ? mae(fitted.tail(val_n), y.tail(val_n)) : model.train_mae;
  return model;
}

std::vector<std::string> DecodeResult::hypothesis_words() const {
  std::vector<std::string> words;
  std::istringstream ss(hypothesis);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

int default_hard_cap(const std::vector<WindowPair>& train_windows) {
  if (train_windows.empty()) fail(ErrorKind::input, "hard_cap needs train windows");
  double total = 0.0;
  for (const WindowPair& w : train_windows)
    total += static_cast<double>(w.text.token_ids.size());
  return static_cast<int>(std::ceil(4.0 * total / static_cast<double>(train_windows.size())));
}

DecodeResult decode_window(FmriEncoder& encoder, LmBackend& backend,
                           const FmriWindow& fmri, const DecodeOptions& opts,
                           const Tokenizer& tokenizer) {
  if (opts.hard_cap < 1) fail(ErrorKind::config, "decode hard_cap must be resolved to >= 1");

  StopCriterion stop;
  stop.hard_cap = opts.hard_cap;
  if (opts.strategy == StopStrategy::alignment) {
    stop.kind = StopKind::alignment_count;
    stop.target = fmri.n_tr();  // always the window's TR count
  } else {
    if (!opts.word_rate) fail(ErrorKind::config, "word-rate strategy needs a trained model");
    stop.kind = StopKind::word_count;
    stop.target = opts.word_rate->predict(fmri);
  }
  stop.hard_cap = std::max(stop.hard_cap, stop.target);
  stop.validate();

  const Prompt prompt = encoder.encode_fmri(fmri);
  const GenerationResult gen =
      backend.generate(prompt.vectors, stop, opts.decode, tokenizer.alignment_id());

  DecodeResult res;
  res.story_id = fmri.story_id;
  res.window_index = fmri.window_index;
  res.token_ids = gen.token_ids;
  res.truncated = gen.truncated;
  res.stop_kind = opts.strategy;
  const std::vector<std::string> words =
      tokenizer.decode_words(gen.token_ids, /*strip_alignment=*/true);
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  res.hypothesis = std::move(text);
  return res;
}

std::vector<DecodeResult> decode_windows(FmriEncoder& encoder, LmBackend& backend,
                                         const std::vector<WindowPair>& windows,
                                         const DecodeOptions& opts,
                                         const Tokenizer& tokenizer) {
  std::vector<DecodeResult> out;
  out.reserve(windows.size());
  for (const WindowPair& pair : windows) {
    try {
      out.push_back(decode_window(encoder, backend, pair.fmri, opts, tokenizer));
    } catch (const Error& e) {
      log_warn("decode failed for window " + pair.fmri.story_id + ":" +
               std::to_string(pair.fmri.window_index) + ": " + e.what());
      DecodeResult res;
      res.story_id = pair.fmri.story_id;
      res.window_index = pair.fmri.window_index;
      res.stop_kind = opts.strategy;
      res.error = e.what();
      out.push_back(std::move(res));
    }
  }
  return out;
}

std::vector<DecodeResult> decode_corpus(FmriEncoder& encoder, LmBackend& backend,
                                        const CorpusSplit& split, const DecodeOptions& opts,
                                        const Tokenizer& tokenizer) {
  return decode_windows(encoder, backend, split.test, opts, tokenizer);
}

void write_decode_results(const std::string& path, const std::vector<DecodeResult>& results,
                          const std::vector<WindowPair>& windows, const Tokenizer& tokenizer,
                          const std::string& config_hash, const std::string& split_hash) {
  std::map<std::pair<std::string, int>, std::string> reference;
  for (const WindowPair& w : windows) {
    const auto words = tokenizer.decode_words(w.text.token_ids, true);
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text += ' ';
      text += words[i];
    }
    reference[{w.text.story_id, w.text.window_index}] = std::move(text);
  }

  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write decode results to " + path);
  nlohmann::json meta;
  meta["meta"] = {{"config_hash", config_hash}, {"split_hash", split_hash}};
  out << meta.dump() << "\n";
  for (const DecodeResult& r : results) {
    nlohmann::json rec;
    rec["story_id"] = r.story_id;
    rec["window_index"] = r.window_index;
    rec["hypothesis"] = r.hypothesis;
    auto it = reference.find({r.story_id, r.window_index});
    rec["reference"] = it == reference.end() ? std::string() : it->second;
    rec["truncated"] = r.truncated;
    rec["stop_kind"] = to_string(r.stop_kind);
    if (!r.error.empty()) rec["error"] = r.error;
    out << rec.dump() << "\n";
  }
}

DecodeResultsFile read_decode_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read decode results from " + path);
  DecodeResultsFile file;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
    if (rec.is_discarded()) fail(ErrorKind::schema, "bad json line in " + path);
    if (first) {
      if (!rec.contains("meta"))
        fail(ErrorKind::schema, "decode results missing meta record in " + path);
      file.config_hash = rec["meta"].value("config_hash", "");
      file.split_hash = rec["meta"].value("split_hash", "");
      first = false;
      continue;
    }
    DecodeResult r;
    r.story_id = rec.at("story_id").get<std::string>();
    r.window_index = rec.at("window_index").get<int>();
    r.hypothesis = rec.at("hypothesis").get<std::string>();
    r.truncated = rec.at("truncated").get<bool>();
    r.stop_kind = rec.at("stop_kind").get<std::string>() == "alignment"
                      ? StopStrategy::alignment
                      : StopStrategy::wordrate;
    r.error = rec.value("error", "");
    file.references.emplace_back(r.story_id + ":" + std::to_string(r.window_index),
                                 rec.value("reference", ""));
    file.results.push_back(std::move(r));
  }
  if (first) fail(ErrorKind::schema, "decode results file is empty: " + path);
  return file;
}

}  // namespace fmridec
