#include "fmridec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <unordered_map>

#include "fmridec/corpus.hpp"
#include "fmridec/errors.hpp"
#include "fmridec/inference.hpp"

namespace fmridec::metrics {

double bleu1(const std::vector<std::string>& hypothesis,
             const std::vector<std::string>& reference) {
  if (reference.empty()) fail(ErrorKind::input, "bleu1 needs a non-empty reference");
  if (hypothesis.empty()) return 0.0;
  std::unordered_map<std::string, int> ref_counts;
  for (const std::string& w : reference) ++ref_counts[w];
  int clipped = 0;
  for (const std::string& w : hypothesis) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end() && it->second > 0) {
      ++clipped;
      --it->second;
    }
  }
  const double precision =
      static_cast<double>(clipped) / static_cast<double>(hypothesis.size());
  const double bp =
      hypothesis.size() >= reference.size()
          ? 1.0
          : std::exp(1.0 - static_cast<double>(reference.size()) /
                               static_cast<double>(hypothesis.size()));
  return precision * bp;
}

// ---- Porter stemmer ---------------------------------------------------

namespace {

bool is_consonant(const std::string& w, int i) {
  switch (w[static_cast<std::size_t>(i)]) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_consonant(w, i - 1);
    default:
      return true;
  }
}

// number of VC sequences in w[0..end)
int measure(const std::string& w, int end) {
  int m = 0;
  int i = 0;
  while (i < end && is_consonant(w, i)) ++i;
  while (i < end) {
    while (i < end && !is_consonant(w, i)) ++i;
    if (i >= end) break;
    ++m;
    while (i < end && is_consonant(w, i)) ++i;
  }
  return m;
}

bool contains_vowel(const std::string& w, int end) {
  for (int i = 0; i < end; ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

bool double_consonant(const std::string& w) {
  const int n = static_cast<int>(w.size());
  if (n < 2) return false;
  return w[static_cast<std::size_t>(n - 1)] == w[static_cast<std::size_t>(n - 2)] &&
         is_consonant(w, n - 1);
}

// consonant-vowel-consonant ending where the final consonant is not w, x, y
bool cvc_ending(const std::string& w) {
  const int n = static_cast<int>(w.size());
  if (n < 3) return false;
  if (!is_consonant(w, n - 3) || is_consonant(w, n - 2) || !is_consonant(w, n - 1))
    return false;
  const char c = w[static_cast<std::size_t>(n - 1)];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return w.size() >= n && w.compare(w.size() - n, n, suffix) == 0;
}

// replace suffix when the measure of the remaining stem passes min_m
bool replace_if(std::string& w, const char* suffix, const char* with, int min_m) {
  if (!ends_with(w, suffix)) return false;
  const int stem = static_cast<int>(w.size() - std::strlen(suffix));
  if (measure(w, stem) <= min_m) return true;  // suffix matched; rule consumed
  w = w.substr(0, static_cast<std::size_t>(stem)) + with;
  return true;
}

}  // namespace

std::string porter_stem(const std::string& word) {
  std::string w = word;
  if (w.size() <= 2) return w;

  // step 1a
  if (ends_with(w, "sses"))
    w.resize(w.size() - 2);
  else if (ends_with(w, "ies"))
    w.resize(w.size() - 2);
  else if (!ends_with(w, "ss") && ends_with(w, "s"))
    w.resize(w.size() - 1);

  // step 1b
  bool extend = false;
  if (ends_with(w, "eed")) {
    if (measure(w, static_cast<int>(w.size() - 3)) > 0) w.resize(w.size() - 1);
  } else if (ends_with(w, "ed") && contains_vowel(w, static_cast<int>(w.size() - 2))) {
    w.resize(w.size() - 2);
    extend = true;
  } else if (ends_with(w, "ing") && contains_vowel(w, static_cast<int>(w.size() - 3))) {
    w.resize(w.size() - 3);
    extend = true;
  }
  if (extend) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w.push_back('e');
    } else if (double_consonant(w)) {
      const char c = w.back();
      if (c != 'l' && c != 's' && c != 'z') w.resize(w.size() - 1);
    } else if (measure(w, static_cast<int>(w.size())) == 1 && cvc_ending(w)) {
      w.push_back('e');
    }
  }

  // step 1c
  if (ends_with(w, "y") && contains_vowel(w, static_cast<int>(w.size() - 1)))
    w.back() = 'i';

  // step 2
  static const std::pair<const char*, const char*> step2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
  for (const auto& [suffix, with] : step2)
    if (replace_if(w, suffix, with, 0)) break;

  // step 3
  static const std::pair<const char*, const char*> step3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
  for (const auto& [suffix, with] : step3)
    if (replace_if(w, suffix, with, 0)) break;

  // step 4
  static const char* step4[] = {"al",  "ance", "ence", "er",  "ic",  "able", "ible",
                                "ant", "ement", "ment", "ent", "ou",  "ism",  "ate",
                                "iti", "ous",  "ive",  "ize"};
  bool done4 = false;
  for (const char* suffix : step4) {
    if (!ends_with(w, suffix)) continue;
    const int stem = static_cast<int>(w.size() - std::strlen(suffix));
    if (measure(w, stem) > 1) w.resize(static_cast<std::size_t>(stem));
    done4 = true;
    break;
  }
  if (!done4 && ends_with(w, "ion")) {
    const int stem = static_cast<int>(w.size() - 3);
    if (stem > 0 &&
        (w[static_cast<std::size_t>(stem - 1)] == 's' ||
         w[static_cast<std::size_t>(stem - 1)] == 't') &&
        measure(w, stem) > 1)
      w.resize(static_cast<std::size_t>(stem));
  }

  // step 5a
  if (ends_with(w, "e")) {
    const int stem = static_cast<int>(w.size() - 1);
    const int m = measure(w, stem);
    if (m > 1) {
      w.resize(static_cast<std::size_t>(stem));
    } else if (m == 1) {
      std::string candidate = w.substr(0, static_cast<std::size_t>(stem));
      if (!cvc_ending(candidate)) w = std::move(candidate);
    }
  }
  // step 5b
  if (measure(w, static_cast<int>(w.size())) > 1 && double_consonant(w) && w.back() == 'l')
    w.resize(w.size() - 1);

  return w;
}

// ---- METEOR -----------------------------------------------------------

namespace {

// Match every hypothesis token (in order) against the earliest compatible
// unmatched reference token; first on exact words, then on stems.
std::vector<std::pair<int, int>> meteor_alignment(const std::vector<std::string>& hyp,
                                                  const std::vector<std::string>& ref) {
  std::vector<std::pair<int, int>> matches;  // (hyp index, ref index)
  std::vector<bool> hyp_used(hyp.size(), false), ref_used(ref.size(), false);

  for (std::size_t h = 0; h < hyp.size(); ++h) {
    for (std::size_t r = 0; r < ref.size(); ++r) {
      if (ref_used[r] || hyp[h] != ref[r]) continue;
      matches.emplace_back(static_cast<int>(h), static_cast<int>(r));
      hyp_used[h] = ref_used[r] = true;
      break;
    }
  }
  std::vector<std::string> hyp_stem(hyp.size()), ref_stem(ref.size());
  for (std::size_t i = 0; i < hyp.size(); ++i) hyp_stem[i] = porter_stem(hyp[i]);
  for (std::size_t i = 0; i < ref.size(); ++i) ref_stem[i] = porter_stem(ref[i]);
  for (std::size_t h = 0; h < hyp.size(); ++h) {
    if (hyp_used[h]) continue;
    for (std::size_t r = 0; r < ref.size(); ++r) {
      if (ref_used[r] || hyp_stem[h] != ref_stem[r]) continue;
      matches.emplace_back(static_cast<int>(h), static_cast<int>(r));
      hyp_used[h] = ref_used[r] = true;
      break;
    }
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

}  // namespace

MeteorDetail meteor_detail(const std::vector<std::string>& hypothesis,
                           const std::vector<std::string>& reference) {
  if (reference.empty()) fail(ErrorKind::input, "meteor needs a non-empty reference");
  MeteorDetail d;
  if (hypothesis.empty()) return d;

  auto matches = meteor_alignment(hypothesis, reference);
  d.matches = static_cast<int>(matches.size());
  if (d.matches == 0) return d;

  d.chunks = 1;
  for (std::size_t i = 1; i < matches.size(); ++i) {
    const bool contiguous = matches[i].first == matches[i - 1].first + 1 &&
                            matches[i].second == matches[i - 1].second + 1;
    if (!contiguous) ++d.chunks;
  }

  d.precision = static_cast<double>(d.matches) / static_cast<double>(hypothesis.size());
  d.recall = static_cast<double>(d.matches) / static_cast<double>(reference.size());
  d.fmean = d.precision * d.recall / (0.9 * d.precision + 0.1 * d.recall);
  const double frag = static_cast<double>(d.chunks) / static_cast<double>(d.matches);
  d.penalty = 0.5 * frag * frag * frag;
  d.score = d.fmean * (1.0 - d.penalty);
  return d;
}

double meteor(const std::vector<std::string>& hypothesis,
              const std::vector<std::string>& reference) {
  return meteor_detail(hypothesis, reference).score;
}

// ---- BERTScore --------------------------------------------------------

BertScore bertscore(const std::vector<std::string>& hypothesis,
                    const std::vector<std::string>& reference,
                    const TokenEmbedder& embedder) {
  BertScore s;
  if (hypothesis.empty() || reference.empty()) {
    log_warn("bertscore: empty side, scoring 0");
    return s;
  }
  Mat hyp = embedder.embed(hypothesis);
  Mat ref = embedder.embed(reference);
  if (hyp.rows() != static_cast<Eigen::Index>(hypothesis.size()) ||
      ref.rows() != static_cast<Eigen::Index>(reference.size()))
    fail(ErrorKind::input, "embedder returned the wrong number of rows");

  auto normalize = [](Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double n = m.row(r).norm();
      if (n > 1e-12) m.row(r) /= n;
    }
  };
  normalize(hyp);
  normalize(ref);
  Mat sim = ref * hyp.transpose();  // sim(i, j) = cos(ref_i, hyp_j)

  s.recall = sim.rowwise().maxCoeff().mean();
  s.precision = sim.colwise().maxCoeff().mean();
  s.f1 = (s.precision + s.recall) <= 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

// ---- windowed evaluation ---------------------------------------------

MetricReport evaluate(const std::vector<DecodeResult>& results,
                      const std::vector<TranscriptWindow>& references,
                      const Tokenizer& tokenizer, const TokenEmbedder& embedder) {
  std::map<std::pair<std::string, int>, const TranscriptWindow*> ref_index;
  for (const TranscriptWindow& w : references)
    ref_index[{w.story_id, w.window_index}] = &w;
  if (ref_index.size() != references.size())
    fail(ErrorKind::evaluation, "duplicate reference windows");

  std::string missing;
  std::map<std::pair<std::string, int>, bool> seen;
  for (const DecodeResult& r : results) {
    if (!ref_index.count({r.story_id, r.window_index}))
      missing += " " + r.story_id + ":" + std::to_string(r.window_index);
    seen[{r.story_id, r.window_index}] = true;
  }
  for (const TranscriptWindow& w : references)
    if (!seen.count({w.story_id, w.window_index}))
      missing += " " + w.story_id + ":" + std::to_string(w.window_index);
  if (!missing.empty())
    fail(ErrorKind::evaluation, "decode results and references do not join 1:1:" + missing);

  MetricReport report;
  report.per_window.reserve(results.size());
  for (const DecodeResult& r : results) {
    const TranscriptWindow& ref_window = *ref_index[{r.story_id, r.window_index}];
    const std::vector<std::string> ref_words =
        tokenizer.decode_words(ref_window.token_ids, /*strip_alignment=*/true);
    const std::vector<std::string> hyp_words = r.hypothesis_words();

    WindowScore ws;
    ws.story_id = r.story_id;
    ws.window_index = r.window_index;
    ws.bleu1 = bleu1(hyp_words, ref_words);
    ws.meteor = meteor(hyp_words, ref_words);
    const BertScore bs = bertscore(hyp_words, ref_words, embedder);
    ws.bertscore_p = bs.precision;
    ws.bertscore_r = bs.recall;
    ws.bertscore_f1 = bs.f1;

    report.avg_bleu1 += ws.bleu1;
    report.avg_meteor += ws.meteor;
    report.avg_bertscore_f1 += ws.bertscore_f1;
    report.avg_bertscore_p += ws.bertscore_p;
    report.avg_bertscore_r += ws.bertscore_r;
    report.per_window.push_back(std::move(ws));
  }
  report.window_count = static_cast<int>(report.per_window.size());
  if (report.window_count > 0) {
    const double n = report.window_count;
    report.avg_bleu1 /= n;
    report.avg_meteor /= n;
    report.avg_bertscore_f1 /= n;
    report.avg_bertscore_p /= n;
    report.avg_bertscore_r /= n;
  }
  return report;
}

}  // namespace fmridec::metrics
