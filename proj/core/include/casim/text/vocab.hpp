#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace casim::text {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumSpecials = 4;
inline constexpr int kDefaultMaxLength = 24;

// Lowercases and splits on anything that is not a letter, digit or apostrophe.
std::vector<std::string> split_words(std::string_view prompt);

class Vocabulary {
 public:
  Vocabulary();
  // Words are assigned ids kNumSpecials.. in the given order.
  explicit Vocabulary(const std::vector<std::string>& words, int max_length = kDefaultMaxLength);

  int size() const { return static_cast<int>(words_.size()); }
  int max_length() const { return max_length_; }
  int id(const std::string& word) const;  // kUnk when absent
  const std::string& word(int id) const;
  // Content words only, in id order (the vocabulary file body).
  std::vector<std::string> content_words() const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_ && max_length_ == other.max_length_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
  int max_length_ = kDefaultMaxLength;
};

// Sorted-unique word vocabulary over a non-empty corpus.
Vocabulary build_vocab(const std::vector<std::string>& prompts, int max_length = kDefaultMaxLength);

// One word per line; ids follow the line index after the specials.
void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary load_vocab(const std::filesystem::path& path, int max_length = kDefaultMaxLength);

struct TextTokenSeq {
  std::vector<int> ids;     // BOS ... EOS, then PAD to the batch length
  std::vector<bool> valid;  // false exactly on PAD positions
  bool truncated = false;

  int length() const { return static_cast<int>(ids.size()); }
  int valid_count() const;
};

TextTokenSeq tokenize(std::string_view prompt, const Vocabulary& vocab);
// Tokenizes every prompt and pads each to the longest in the batch.
std::vector<TextTokenSeq> tokenize_batch(const std::vector<std::string>& prompts, const Vocabulary& vocab);

}  // namespace casim::text
