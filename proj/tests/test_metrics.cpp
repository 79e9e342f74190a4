#include <cmath>
#include <random>

#include "doctest.h"
#include "fmridec/corpus.hpp"
#include "fmridec/errors.hpp"
#include "fmridec/inference.hpp"
#include "fmridec/metrics.hpp"
#include "fmridec/text_features.hpp"
#include "support.hpp"

using namespace fmridec;
using metrics::bertscore;
using metrics::bleu1;
using metrics::meteor;
using metrics::meteor_detail;
using metrics::porter_stem;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> ws) {
  return {ws.begin(), ws.end()};
}

// Context-free deterministic embedder for brute-force checks.
class HashEmbedder : public metrics::TokenEmbedder {
 public:
  Mat embed(const std::vector<std::string>& ws) const override {
    Mat out(static_cast<Eigen::Index>(ws.size()), 6);
    for (std::size_t i = 0; i < ws.size(); ++i) {
      uint64_t h = 14695981039346656037ull;
      for (unsigned char c : ws[i]) {
        h ^= c;
        h *= 1099511628211ull;
      }
      std::mt19937_64 rng(h);
      std::normal_distribution<double> d(0.0, 1.0);
      for (int j = 0; j < 6; ++j) out(static_cast<Eigen::Index>(i), j) = d(rng);
    }
    return out;
  }
};

}  // namespace

TEST_CASE("bleu1 hand cases") {
  CHECK(bleu1(words({"a", "b", "c", "d", "e"}), words({"a", "b", "c", "d", "e"})) ==
        doctest::Approx(1.0));
  CHECK(bleu1(words({"a", "b", "c"}), words({"a", "b", "d"})) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(bleu1(words({"a"}), words({"a", "b", "c", "d"})) ==
        doctest::Approx(std::exp(-3.0)).epsilon(1e-9));
  CHECK(bleu1({}, words({"a"})) == 0.0);
  // clipping: repeating a matched word does not inflate precision
  CHECK(bleu1(words({"a", "a", "a"}), words({"a", "b", "c"})) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK_THROWS_AS(bleu1(words({"a"}), {}), Error);
}

TEST_CASE("porter stemmer classic vectors") {
  CHECK(porter_stem("caresses") == "caress");
  CHECK(porter_stem("ponies") == "poni");
  CHECK(porter_stem("cats") == "cat");
  CHECK(porter_stem("feed") == "feed");
  CHECK(porter_stem("agreed") == "agre");
  CHECK(porter_stem("plastered") == "plaster");
  CHECK(porter_stem("motoring") == "motor");
  CHECK(porter_stem("sing") == "sing");
  CHECK(porter_stem("hopping") == "hop");
  CHECK(porter_stem("falling") == "fall");
  CHECK(porter_stem("happy") == "happi");
  CHECK(porter_stem("relational") == "relat");
  CHECK(porter_stem("conditional") == "condit");
  CHECK(porter_stem("digitizer") == "digit");
  CHECK(porter_stem("hopeful") == "hope");
  CHECK(porter_stem("goodness") == "good");
  CHECK(porter_stem("adjustment") == "adjust");
  CHECK(porter_stem("effective") == "effect");
  CHECK(porter_stem("running") == "run");
  CHECK(porter_stem("controlling") == "control");
}

TEST_CASE("meteor hand cases") {
  // identical 3-word texts: matches=3, chunks=1
  const auto id3 = meteor_detail(words({"x", "y", "z"}), words({"x", "y", "z"}));
  CHECK(id3.matches == 3);
  CHECK(id3.chunks == 1);
  CHECK(id3.fmean == doctest::Approx(1.0));
  CHECK(id3.penalty == doctest::Approx(0.5 / 27.0).epsilon(1e-12));
  CHECK(id3.score == doctest::Approx(1.0 - 0.5 / 27.0).epsilon(1e-9));  // 0.98148

  // disjoint vocabularies
  CHECK(meteor(words({"a", "b"}), words({"c", "d"})) == 0.0);

  // swapped bigram: full matches but two chunks -> penalty 0.5
  const auto swapped = meteor_detail(words({"b", "a"}), words({"a", "b"}));
  CHECK(swapped.matches == 2);
  CHECK(swapped.chunks == 2);
  CHECK(swapped.score == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("meteor stem stage matches inflected forms") {
  const auto d = meteor_detail(words({"running", "dogs"}), words({"run", "dog"}));
  CHECK(d.matches == 2);
  CHECK(d.score > 0.9);
}

TEST_CASE("meteor penalty stays in (0, 0.5] and score is bounded by fmean") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> hyp, ref;
    for (int i = 0; i < 1 + trial % 7; ++i) hyp.push_back(vocab[pick(rng)]);
    for (int i = 0; i < 1 + (trial * 3) % 6; ++i) ref.push_back(vocab[pick(rng)]);
    const auto d = meteor_detail(hyp, ref);
    if (d.matches == 0) {
      CHECK(d.score == 0.0);
      continue;
    }
    CHECK(d.penalty > 0.0);
    CHECK(d.penalty <= 0.5);
    CHECK(d.score <= d.fmean + 1e-12);
  }
}

TEST_CASE("bertscore identity, symmetry, and brute-force equivalence") {
  HashEmbedder emb;
  const auto id = bertscore(words({"u", "v", "w"}), words({"u", "v", "w"}), emb);
  CHECK(id.precision == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(id.recall == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(id.f1 == doctest::Approx(1.0).epsilon(1e-9));

  const auto hyp = words({"a", "b", "c"});
  const auto ref = words({"b", "d"});
  const auto s = bertscore(hyp, ref, emb);

  // brute force greedy-max over the raw cosine matrix
  Mat h = emb.embed(hyp), r = emb.embed(ref);
  auto cos = [](const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    return x.dot(y) / (x.norm() * y.norm());
  };
  double recall = 0.0;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    double best = -2.0;
    for (Eigen::Index j = 0; j < h.rows(); ++j) best = std::max(best, cos(r.row(i), h.row(j)));
    recall += best;
  }
  recall /= static_cast<double>(r.rows());
  double precision = 0.0;
  for (Eigen::Index j = 0; j < h.rows(); ++j) {
    double best = -2.0;
    for (Eigen::Index i = 0; i < r.rows(); ++i) best = std::max(best, cos(r.row(i), h.row(j)));
    precision += best;
  }
  precision /= static_cast<double>(h.rows());
  CHECK(s.recall == doctest::Approx(recall).epsilon(1e-6));
  CHECK(s.precision == doctest::Approx(precision).epsilon(1e-6));
  CHECK(s.f1 ==
        doctest::Approx(2.0 * precision * recall / (precision + recall)).epsilon(1e-6));

  // swapping hypothesis and reference swaps P and R exactly
  const auto sw = bertscore(ref, hyp, emb);
  CHECK(sw.precision == doctest::Approx(s.recall).epsilon(1e-12));
  CHECK(sw.recall == doctest::Approx(s.precision).epsilon(1e-12));

  const auto empty = bertscore({}, ref, emb);
  CHECK(empty.f1 == 0.0);
}

TEST_CASE("bertscore works with the frozen contextual encoder") {
  FrozenTextEncoder enc(TextEncoderConfig{32, 2, 4, 7});
  const auto id = bertscore(words({"p", "q"}), words({"p", "q"}), enc);
  CHECK(id.f1 == doctest::Approx(1.0).epsilon(1e-9));
  // contextual: same words, different order -> below identity
  const auto perm = bertscore(words({"q", "p"}), words({"p", "q"}), enc);
  CHECK(perm.f1 < 1.0 - 1e-6);
}

TEST_CASE("evaluate joins 1:1, averages per-window scores, and rejects mismatches") {
  // vocabulary: "$"=0, a, b, c
  Tokenizer tok = Tokenizer::from_words({"$", "a", "b", "c"});
  std::vector<TranscriptWindow> refs(2);
  refs[0].story_id = refs[1].story_id = "s";
  refs[0].window_index = 0;
  refs[1].window_index = 1;
  refs[0].token_ids = {1, 2, 0};  // "a b $"
  refs[1].token_ids = {3, 0};     // "c $"

  std::vector<DecodeResult> results(2);
  results[0].story_id = results[1].story_id = "s";
  results[0].window_index = 0;
  results[1].window_index = 1;
  results[0].hypothesis = "a b";  // perfect
  results[1].hypothesis = "a";    // disjoint from "c"

  HashEmbedder emb;
  const auto report = metrics::evaluate(results, refs, tok, emb);
  REQUIRE(report.window_count == 2);
  CHECK(report.per_window[0].bleu1 == doctest::Approx(1.0));
  CHECK(report.per_window[1].bleu1 == doctest::Approx(0.0));
  CHECK(report.avg_bleu1 == doctest::Approx(0.5));

  // report averages recomputed independently from the per-window list
  double mean_meteor = 0.0;
  for (const auto& w : report.per_window) mean_meteor += w.meteor;
  mean_meteor /= report.window_count;
  CHECK(report.avg_meteor == doctest::Approx(mean_meteor).epsilon(1e-12));

  // unmatched window ids are an evaluation error
  results[1].window_index = 7;
  CHECK_THROWS_AS(metrics::evaluate(results, refs, tok, emb), Error);
}
