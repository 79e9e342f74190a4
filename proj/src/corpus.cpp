#include "fmridec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fmridec/errors.hpp"

namespace fs = std::filesystem;

namespace fmridec {

std::string normalize_word(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (unsigned char c : raw) {
    if (std::isalnum(c) || c == '\'')
      out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

int trs_per_window(double window_seconds, double tr_seconds) {
  if (tr_seconds <= 0.0) fail(ErrorKind::config, "tr_seconds must be positive");
  if (window_seconds <= 0.0) fail(ErrorKind::config, "window_seconds must be positive");
  const double ratio = window_seconds / tr_seconds;
  const long long n = std::llround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, ratio))
    fail(ErrorKind::config, "window_seconds (" + std::to_string(window_seconds) +
                                ") must be an integer multiple of tr_seconds (" +
                                std::to_string(tr_seconds) + ")");
  return static_cast<int>(n);
}

namespace {

int lag_in_trs(double lag_seconds, double tr_seconds) {
  if (lag_seconds == 0.0) return 0;
  const double ratio = lag_seconds / tr_seconds;
  const long long n = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(n)) > 1e-9 * std::max(1.0, std::abs(ratio)))
    fail(ErrorKind::config, "lag_seconds must be an integer multiple of tr_seconds");
  if (n < 0) fail(ErrorKind::config, "lag_seconds must be non-negative");
  return static_cast<int>(n);
}

Story load_story(const fs::path& resp_path, const fs::path& words_path,
                 const std::string& id) {
  Story story;
  story.id = id;

  std::ifstream resp(resp_path);
  if (!resp) fail(ErrorKind::ingestion, "cannot open response file for story '" + id + "'");
  std::string header;
  if (!std::getline(resp, header))
    fail(ErrorKind::ingestion, "empty response file for story '" + id + "'");
  std::istringstream hs(header);
  long long t_tr = 0, voxels = 0;
  double tr_seconds = 0.0;
  if (!(hs >> t_tr >> voxels >> tr_seconds))
    fail(ErrorKind::schema, "bad response header in story '" + id + "' (want: T_tr V tr_seconds)");
  if (t_tr < 1 || voxels < 1)
    fail(ErrorKind::validation, "story '" + id + "' needs T_tr >= 1 and V >= 1");
  if (tr_seconds <= 0.0)
    fail(ErrorKind::validation, "story '" + id + "' has non-positive tr_seconds");
  story.tr_seconds = tr_seconds;
  story.fmri.resize(t_tr, voxels);
  // token-wise stod so nan/inf entries parse and hit the finiteness check
  std::string cell;
  for (long long r = 0; r < t_tr; ++r) {
    for (long long c = 0; c < voxels; ++c) {
      if (!(resp >> cell))
        fail(ErrorKind::schema, "story '" + id + "' response matrix is short at row " +
                                    std::to_string(r));
      double v;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail(ErrorKind::schema, "story '" + id + "' has a non-numeric response '" + cell +
                                    "' at row " + std::to_string(r));
      }
      if (!std::isfinite(v))
        fail(ErrorKind::validation,
             "story '" + id + "' has a non-finite response at row " + std::to_string(r));
      story.fmri(r, c) = v;
    }
  }
  if (resp >> cell)
    fail(ErrorKind::schema, "story '" + id + "' response matrix has trailing values");

  std::ifstream wf(words_path);
  if (!wf) fail(ErrorKind::ingestion, "cannot open word file for story '" + id + "'");
  std::string line;
  int line_no = 0;
  double prev_onset = -1.0;
  while (std::getline(wf, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string text, onset_s, offset_s;
    if (!std::getline(ls, text, '\t') || !std::getline(ls, onset_s, '\t') ||
        !std::getline(ls, offset_s))
      fail(ErrorKind::schema, "story '" + id + "' word line " + std::to_string(line_no) +
                                  " is not word<TAB>onset<TAB>offset");
    TranscriptWord w;
    w.text = normalize_word(text);
    try {
      w.onset = std::stod(onset_s);
      w.offset = std::stod(offset_s);
    } catch (const std::exception&) {
      fail(ErrorKind::schema,
           "story '" + id + "' word line " + std::to_string(line_no) + " has bad timing");
    }
    if (w.text.empty()) continue;  // nothing survives normalization
    if (w.onset < 0.0 || w.offset < w.onset)
      fail(ErrorKind::validation, "story '" + id + "' word line " +
                                      std::to_string(line_no) + " violates 0 <= onset <= offset");
    if (w.onset < prev_onset)
      fail(ErrorKind::validation,
           "story '" + id + "' words are not sorted by onset at line " +
               std::to_string(line_no));
    prev_onset = w.onset;
    story.words.push_back(std::move(w));
  }
  if (story.words.empty())
    fail(ErrorKind::validation, "story '" + id + "' has an empty transcript");
  return story;
}

}  // namespace

std::vector<Story> load_corpus(const std::string& root_path, const std::string& subject_id) {
  const fs::path dir = fs::path(root_path) / subject_id;
  if (!fs::is_directory(dir))
    fail(ErrorKind::ingestion, "corpus directory not found: " + dir.string());

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".resp") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) fail(ErrorKind::ingestion, "no .resp files under " + dir.string());

  std::vector<Story> stories;
  stories.reserve(ids.size());
  for (const std::string& id : ids) {
    const fs::path words_path = dir / (id + ".words");
    if (!fs::exists(words_path))
      fail(ErrorKind::ingestion, "story '" + id + "' is missing its .words file");
    stories.push_back(load_story(dir / (id + ".resp"), words_path, id));
  }
  const Eigen::Index voxels = stories.front().voxels();
  for (const Story& s : stories) {
    if (s.voxels() != voxels)
      fail(ErrorKind::schema, "story '" + s.id + "' has " + std::to_string(s.voxels()) +
                                  " voxels, expected " + std::to_string(voxels));
  }
  return stories;
}

TranscriptWindow insert_alignment_tokens(const TranscriptWindow& draft,
                                         const std::vector<double>& word_onsets,
                                         double tr_seconds, int n_tr,
                                         int alignment_token_id) {
  if (n_tr < 1) fail(ErrorKind::input, "insert_alignment_tokens needs n_tr >= 1");
  if (draft.token_ids.size() != word_onsets.size())
    fail(ErrorKind::input, "draft token count does not match onset count");
  const double window_span = tr_seconds * n_tr;
  for (double onset : word_onsets) {
    if (onset < 0.0 || onset >= window_span)
      fail(ErrorKind::out_of_window,
           "word onset " + std::to_string(onset) + " outside window of " +
               std::to_string(window_span) + "s");
  }

  TranscriptWindow out;
  out.story_id = draft.story_id;
  out.window_index = draft.window_index;
  out.word_count = static_cast<int>(draft.token_ids.size());
  out.token_ids.reserve(draft.token_ids.size() + static_cast<std::size_t>(n_tr));
  std::size_t next = 0;
  for (int tr = 0; tr < n_tr; ++tr) {
    const double tr_end = (tr + 1) * tr_seconds;
    while (next < word_onsets.size() && word_onsets[next] < tr_end) {
      out.token_ids.push_back(draft.token_ids[next]);
      ++next;
    }
    out.alignment_positions.push_back(static_cast<int>(out.token_ids.size()));
    out.token_ids.push_back(alignment_token_id);
  }
  return out;
}

std::vector<WindowPair> window_story(const Story& story, double window_seconds,
                                     const Tokenizer& tokenizer, double lag_seconds) {
  const int n_tr = trs_per_window(window_seconds, story.tr_seconds);
  const int lag_tr = lag_in_trs(lag_seconds, story.tr_seconds);
  const int n_windows =
      static_cast<int>((story.n_tr() - lag_tr) / n_tr);  // trailing remainder dropped

  std::vector<WindowPair> out;
  out.reserve(std::max(0, n_windows));
  std::size_t cursor = 0;  // words are onset-sorted; sweep once
  for (int w = 0; w < n_windows; ++w) {
    const double start = w * window_seconds;
    const double end = start + window_seconds;
    while (cursor < story.words.size() && story.words[cursor].onset < start) ++cursor;
    std::size_t stop = cursor;
    while (stop < story.words.size() && story.words[stop].onset < end) ++stop;

    TranscriptWindow draft;
    draft.story_id = story.id;
    draft.window_index = w;
    std::vector<double> onsets;
    onsets.reserve(stop - cursor);
    for (std::size_t i = cursor; i < stop; ++i) {
      draft.token_ids.push_back(tokenizer.encode_word(story.words[i].text));
      onsets.push_back(story.words[i].onset - start);
    }
    cursor = stop;

    WindowPair pair;
    pair.text = insert_alignment_tokens(draft, onsets, story.tr_seconds, n_tr,
                                        tokenizer.alignment_id());
    pair.fmri.story_id = story.id;
    pair.fmri.window_index = w;
    pair.fmri.data = story.fmri.middleRows(lag_tr + w * n_tr, n_tr);
    out.push_back(std::move(pair));
  }
  return out;
}

CorpusSplit make_split(const std::vector<Story>& stories,
                       const std::vector<std::string>& test_story_ids,
                       double window_seconds, const Tokenizer& tokenizer,
                       double lag_seconds) {
  for (const std::string& id : test_story_ids) {
    const bool known = std::any_of(stories.begin(), stories.end(),
                                   [&](const Story& s) { return s.id == id; });
    if (!known) fail(ErrorKind::config, "held-out story '" + id + "' is not in the corpus");
  }
  CorpusSplit split;
  split.held_out_story_ids = test_story_ids;
  for (const Story& s : stories) {
    const bool held_out = std::find(test_story_ids.begin(), test_story_ids.end(), s.id) !=
                          test_story_ids.end();
    auto windows = window_story(s, window_seconds, tokenizer, lag_seconds);
    auto& dest = held_out ? split.test : split.train;
    for (WindowPair& w : windows) dest.push_back(std::move(w));
  }
  return split;
}

}  // namespace fmridec
