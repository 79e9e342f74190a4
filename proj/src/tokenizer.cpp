#include "fmridec/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "fmridec/corpus.hpp"
#include "fmridec/errors.hpp"

namespace fmridec {

Tokenizer Tokenizer::build(const std::vector<Story>& stories) {
  std::set<std::string> uniq;
  for (const Story& s : stories)
    for (const TranscriptWord& w : s.words) uniq.insert(w.text);
  uniq.erase(kAlignmentWord);
  std::vector<std::string> words;
  words.reserve(uniq.size() + 1);
  words.push_back(kAlignmentWord);
  words.insert(words.end(), uniq.begin(), uniq.end());
  return from_words(std::move(words));
}

Tokenizer Tokenizer::from_words(std::vector<std::string> words) {
  if (words.empty() || words.front() != kAlignmentWord)
    fail(ErrorKind::schema, "vocabulary must start with the alignment token");
  Tokenizer t;
  t.words_ = std::move(words);
  for (int i = 0; i < static_cast<int>(t.words_.size()); ++i) {
    if (!t.index_.emplace(t.words_[i], i).second)
      fail(ErrorKind::schema, "duplicate vocabulary word '" + t.words_[i] + "'");
  }
  return t;
}

int Tokenizer::encode_word(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end())
    fail(ErrorKind::input, "word '" + word + "' is not in the vocabulary");
  return it->second;
}

const std::string& Tokenizer::word(int id) const {
  if (id < 0 || id >= size())
    fail(ErrorKind::input, "token id " + std::to_string(id) + " outside vocabulary");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Tokenizer::encode(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const std::string& w : words) ids.push_back(encode_word(w));
  return ids;
}

std::vector<std::string> Tokenizer::decode_words(const std::vector<int>& ids,
                                                 bool strip_alignment) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (strip_alignment && is_alignment(id)) continue;
    out.push_back(word(id));
  }
  return out;
}

}  // namespace fmridec
