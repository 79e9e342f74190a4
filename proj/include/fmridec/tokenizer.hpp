#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace fmridec {

struct Story;

// Word-level vocabulary over a corpus. Id 0 is always the reserved
// alignment token "$"; remaining ids follow sorted word order so the same
// corpus always yields the same table.
class Tokenizer {
 public:
  static constexpr const char* kAlignmentWord = "$";

  static Tokenizer build(const std::vector<Story>& stories);
  static Tokenizer from_words(std::vector<std::string> words);  // full table, "$" first

  int encode_word(const std::string& word) const;  // throws input error on OOV
  const std::string& word(int id) const;
  int alignment_id() const { return 0; }
  bool is_alignment(int id) const { return id == 0; }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(const std::vector<std::string>& words) const;
  // Drops alignment tokens, joins the rest.
  std::vector<std::string> decode_words(const std::vector<int>& ids,
                                        bool strip_alignment = true) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace fmridec
