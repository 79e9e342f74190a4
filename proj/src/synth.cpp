#include "fmridec/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_map>

#include "fmridec/errors.hpp"

namespace fs = std::filesystem;

namespace fmridec::synth {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Three weighted successors per word keep the chain compressible by a small
// model while still exercising the full vocabulary.
struct BigramChain {
  std::vector<std::array<int, 3>> successors;
  std::array<double, 3> probs{0.7, 0.2, 0.1};

  explicit BigramChain(int vocab, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, vocab - 1);
    successors.resize(static_cast<std::size_t>(vocab));
    for (auto& s : successors)
      for (int j = 0; j < 3; ++j) s[static_cast<std::size_t>(j)] = pick(rng);
  }

  int next(int word, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = u(rng);
    const auto& s = successors[static_cast<std::size_t>(word)];
    if (r < probs[0]) return s[0];
    if (r < probs[0] + probs[1]) return s[1];
    return s[2];
  }
};

}  // namespace

std::vector<std::string> default_vocabulary(int size) {
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(size));
  for (int i = 0; out.size() < static_cast<std::size_t>(size); ++i) {
    std::string w;
    int x = i;
    w.push_back(consonants[x % 14]);
    x /= 14;
    w.push_back(vowels[x % 5]);
    x /= 5;
    while (x > 0) {
      w.push_back(consonants[x % 14]);
      x /= 14;
      if (x > 0) {
        w.push_back(vowels[x % 5]);
        x /= 5;
      }
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<Story> generate(const SynthSpec& spec) {
  if (spec.vocabulary.empty()) fail(ErrorKind::config, "synth vocabulary is empty");
  if (spec.n_stories < 1 || spec.words_per_story < 1)
    fail(ErrorKind::config, "synth needs at least one story and one word");
  if (spec.words_per_second <= 0.0)
    fail(ErrorKind::config, "synth words_per_second must be positive");
  trs_per_window(spec.window_seconds, spec.tr_seconds);  // validate early

  const int vocab = static_cast<int>(spec.vocabulary.size());
  std::unordered_map<std::string, Eigen::Index> word_id;
  for (int i = 0; i < vocab; ++i) {
    if (!word_id.emplace(spec.vocabulary[static_cast<std::size_t>(i)], i).second)
      fail(ErrorKind::config, "synth vocabulary has duplicates");
  }
  std::mt19937_64 setup_rng(spec.seed);
  BigramChain chain(vocab, setup_rng);

  // Fixed linear encoding from per-TR bag of words to voxel space.
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat encoding(spec.voxels, vocab);
  for (Eigen::Index r = 0; r < encoding.rows(); ++r)
    for (Eigen::Index c = 0; c < encoding.cols(); ++c) encoding(r, c) = gauss(setup_rng);

  std::vector<Story> stories;
  stories.reserve(static_cast<std::size_t>(spec.n_stories));
  for (int s = 0; s < spec.n_stories; ++s) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ (0x5317ull + static_cast<uint64_t>(s))));
    Story story;
    char name[32];
    std::snprintf(name, sizeof(name), "story%02d", s);
    story.id = name;
    story.tr_seconds = spec.tr_seconds;

    std::uniform_int_distribution<int> pick(0, vocab - 1);
    int word = pick(rng);
    const double word_gap = 1.0 / spec.words_per_second;
    for (int i = 0; i < spec.words_per_story; ++i) {
      TranscriptWord w;
      w.text = spec.vocabulary[static_cast<std::size_t>(word)];
      w.onset = i * word_gap;
      w.offset = w.onset + 0.9 * word_gap;
      story.words.push_back(std::move(w));
      word = chain.next(word, rng);
    }

    const double duration = spec.words_per_story * word_gap;
    const auto t_tr = static_cast<Eigen::Index>(std::ceil(duration / spec.tr_seconds));
    story.fmri = Mat::Zero(t_tr, spec.voxels);
    Eigen::VectorXd bow(vocab);
    std::size_t cursor = 0;
    for (Eigen::Index t = 0; t < t_tr; ++t) {
      bow.setZero();
      const double tr_end = (t + 1) * spec.tr_seconds;
      while (cursor < story.words.size() && story.words[cursor].onset < tr_end) {
        bow(word_id.at(story.words[cursor].text)) += 1.0;
        ++cursor;
      }
      story.fmri.row(t) = (encoding * bow).transpose();
      if (spec.noise_sigma > 0.0)
        for (Eigen::Index vx = 0; vx < spec.voxels; ++vx)
          story.fmri(t, vx) += spec.noise_sigma * gauss(rng);
    }
    stories.push_back(std::move(story));
  }
  return stories;
}

void write_corpus(const std::vector<Story>& stories, const std::string& root_path,
                  const std::string& subject_id) {
  const fs::path dir = fs::path(root_path) / subject_id;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create corpus directory " + dir.string());

  char buf[64];
  for (const Story& s : stories) {
    std::ofstream resp(dir / (s.id + ".resp"));
    if (!resp) fail(ErrorKind::io, "cannot write response file for story '" + s.id + "'");
    std::snprintf(buf, sizeof(buf), "%.17g", s.tr_seconds);
    resp << s.n_tr() << " " << s.voxels() << " " << buf << "\n";
    for (Eigen::Index r = 0; r < s.n_tr(); ++r) {
      for (Eigen::Index c = 0; c < s.voxels(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.fmri(r, c));
        resp << buf << (c + 1 == s.voxels() ? "" : " ");
      }
      resp << "\n";
    }

    std::ofstream words(dir / (s.id + ".words"));
    if (!words) fail(ErrorKind::io, "cannot write word file for story '" + s.id + "'");
    for (const TranscriptWord& w : s.words) {
      std::snprintf(buf, sizeof(buf), "%.17g", w.onset);
      words << w.text << "\t" << buf;
      std::snprintf(buf, sizeof(buf), "%.17g", w.offset);
      words << "\t" << buf << "\n";
    }
  }
}

}  // namespace fmridec::synth
