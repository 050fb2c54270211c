#include "casim/text/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <stdexcept>

namespace casim::text {

std::vector<std::string> split_words(std::string_view prompt) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : prompt) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words, int max_length)
    : words_{"<pad>", "<bos>", "<eos>", "<unk>"}, max_length_(max_length) {
  if (max_length < 2) throw std::invalid_argument("Vocabulary: max length must be >= 2");
  for (int i = 0; i < kNumSpecials; ++i) index_.emplace(words_[static_cast<std::size_t>(i)], i);
  for (const auto& w : words) {
    if (index_.count(w)) throw std::invalid_argument("Vocabulary: duplicate word '" + w + "'");
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end() || it->second < kNumSpecials) return kUnk;
  return it->second;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary: id " + std::to_string(id) + " out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::content_words() const {
  return {words_.begin() + kNumSpecials, words_.end()};
}

Vocabulary build_vocab(const std::vector<std::string>& prompts, int max_length) {
  if (prompts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::set<std::string> unique;
  for (const auto& p : prompts) {
    for (auto& w : split_words(p)) unique.insert(std::move(w));
  }
  return Vocabulary({unique.begin(), unique.end()}, max_length);
}

void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& w : vocab.content_words()) os << w << '\n';
  if (!os) throw std::runtime_error("failed writing vocabulary file " + path.string());
}

Vocabulary load_vocab(const std::filesystem::path& path, int max_length) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read vocabulary file " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary(words, max_length);
}

int TextTokenSeq::valid_count() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), true));
}

TextTokenSeq tokenize(std::string_view prompt, const Vocabulary& vocab) {
  TextTokenSeq seq;
  auto words = split_words(prompt);
  const std::size_t room = static_cast<std::size_t>(vocab.max_length() - 2);
  if (words.size() > room) {
    words.resize(room);
    seq.truncated = true;
  }
  seq.ids.push_back(kBos);
  for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(kEos);
  seq.valid.assign(seq.ids.size(), true);
  return seq;
}

std::vector<TextTokenSeq> tokenize_batch(const std::vector<std::string>& prompts, const Vocabulary& vocab) {
  std::vector<TextTokenSeq> out;
  std::size_t longest = 0;
  for (const auto& p : prompts) {
    out.push_back(tokenize(p, vocab));
    longest = std::max(longest, out.back().ids.size());
  }
  for (auto& s : out) {
    s.ids.resize(longest, kPad);
    s.valid.resize(longest, false);
  }
  return out;
}

}  // namespace casim::text
