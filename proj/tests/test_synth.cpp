#include "doctest.h"
#include "fmridec/corpus.hpp"
#include "fmridec/synth.hpp"
#include "support.hpp"

using namespace fmridec;

namespace {

synth::SynthSpec small_spec() {
  synth::SynthSpec spec;
  spec.vocabulary = synth::default_vocabulary(15);
  spec.n_stories = 3;
  spec.words_per_story = 120;
  spec.voxels = 10;
  spec.seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("same seed gives byte-identical corpora") {
  const auto a = synth::generate(small_spec());
  const auto b = synth::generate(small_spec());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].fmri == b[i].fmri);
    REQUIRE(a[i].words.size() == b[i].words.size());
    for (std::size_t j = 0; j < a[i].words.size(); ++j) {
      CHECK(a[i].words[j].text == b[i].words[j].text);
      CHECK(a[i].words[j].onset == b[i].words[j].onset);
    }
  }

  auto other = small_spec();
  other.seed = 43;
  const auto c = synth::generate(other);
  CHECK(a[0].fmri != c[0].fmri);
}

TEST_CASE("noise-free responses are an exact linear image of per-TR bags of words") {
  auto spec = small_spec();
  spec.noise_sigma = 0.0;
  const auto stories = synth::generate(spec);

  // rebuild the per-TR bag-of-words design and fit it; residual must vanish
  const int vocab = static_cast<int>(spec.vocabulary.size());
  std::size_t total_tr = 0;
  for (const auto& s : stories) total_tr += static_cast<std::size_t>(s.n_tr());
  Mat bows(total_tr, vocab);
  Mat resp(total_tr, spec.voxels);
  Eigen::Index at = 0;
  for (const auto& s : stories) {
    std::size_t cursor = 0;
    for (Eigen::Index t = 0; t < s.n_tr(); ++t) {
      Eigen::RowVectorXd bow = Eigen::RowVectorXd::Zero(vocab);
      const double tr_end = (t + 1) * s.tr_seconds;
      while (cursor < s.words.size() && s.words[cursor].onset < tr_end) {
        for (int v = 0; v < vocab; ++v)
          if (spec.vocabulary[static_cast<std::size_t>(v)] == s.words[cursor].text)
            bow(v) += 1.0;
        ++cursor;
      }
      bows.row(at) = bow;
      resp.row(at) = s.fmri.row(t);
      ++at;
    }
  }
  const Mat coeffs = bows.colPivHouseholderQr().solve(resp);
  CHECK((bows * coeffs - resp).norm() < 1e-8 * (resp.norm() + 1.0));
}

TEST_CASE("word count per window matches the constant rate") {
  const auto spec = small_spec();
  const auto stories = synth::generate(spec);
  const Tokenizer tok = Tokenizer::build(stories);
  const int expect =
      static_cast<int>(spec.window_seconds * spec.words_per_second);  // 40 per window
  for (const auto& s : stories) {
    for (const auto& pair : window_story(s, spec.window_seconds, tok)) {
      // recount from the story's own word list
      int recount = 0;
      for (const auto& w : s.words)
        if (w.onset >= pair.text.window_index * spec.window_seconds &&
            w.onset < (pair.text.window_index + 1) * spec.window_seconds)
          ++recount;
      CHECK(pair.text.word_count == recount);
      CHECK(std::abs(pair.text.word_count - expect) <= 1);  // boundary effects only
    }
  }
}

TEST_CASE("write_corpus round-trips exactly through load_corpus") {
  testsup::TempDir dir("synth");
  const auto stories = synth::generate(small_spec());
  synth::write_corpus(stories, dir.path().string(), "subj");

  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e :
       std::filesystem::directory_iterator(dir.path() / "subj"))
    ++files;
  CHECK(files == stories.size() * 2);

  const auto loaded = load_corpus(dir.path().string(), "subj");
  REQUIRE(loaded.size() == stories.size());
  for (std::size_t i = 0; i < stories.size(); ++i) {
    CHECK(loaded[i].id == stories[i].id);
    CHECK(loaded[i].tr_seconds == stories[i].tr_seconds);
    CHECK(loaded[i].fmri == stories[i].fmri);  // bit-exact round trip
    REQUIRE(loaded[i].words.size() == stories[i].words.size());
    for (std::size_t j = 0; j < stories[i].words.size(); ++j) {
      CHECK(loaded[i].words[j].text == stories[i].words[j].text);
      CHECK(loaded[i].words[j].onset == stories[i].words[j].onset);
      CHECK(loaded[i].words[j].offset == stories[i].words[j].offset);
    }
  }
}
