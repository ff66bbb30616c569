#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/tokenizer.hpp"

namespace modelizer {

inline constexpr int pad_id = 0;
inline constexpr int bos_id = 1;
inline constexpr int eos_id = 2;
inline constexpr int unk_id = 3;
inline constexpr std::size_t reserved_count = 4;

inline const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r{"<PAD>", "<BOS>", "<EOS>", "<UNK>"};
  return r;
}

// Shown in reconstructed text where the model produced an unknown token.
inline constexpr std::string_view unk_sentinel = "\xE2\x9F\xA8UNK\xE2\x9F\xA9";  // ⟨UNK⟩

class Vocabulary {
 public:
  Vocabulary() : tokens_(reserved_tokens()) { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < reserved_count || !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens_.begin()))
      throw Error("vocabulary must start with the reserved tokens");
    reindex();
    if (ids_.size() != tokens_.size()) throw Error("vocabulary contains duplicate tokens");
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  int id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? unk_id : it->second;
  }
  bool contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }
  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) return tokens_[unk_id];
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(const TokenSequence& seq) const {
    std::vector<int> out;
    out.reserve(seq.size());
    for (const auto& t : seq) out.push_back(id(t));
    return out;
  }

  // Reserved ids other than UNK are dropped; UNK stays as "<UNK>".
  TokenSequence decode(const std::vector<int>& ids) const {
    TokenSequence out;
    for (int i : ids) {
      if (i == pad_id || i == bos_id || i == eos_id) continue;
      out.push_back(token(i));
    }
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void reindex() {
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Ids after the reserved block go by descending frequency, then lexicographic.
inline Vocabulary build_vocabulary(const std::vector<TokenSequence>& corpus) {
  if (corpus.empty()) throw EmptyCorpus();
  std::map<std::string, std::size_t> freq;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) ++freq[t];
  }
  for (const auto& r : reserved_tokens()) freq.erase(r);
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved_tokens();
  for (auto& [t, n] : items) tokens.push_back(std::move(t));
  return Vocabulary(std::move(tokens));
}

// Vocabulary file: one token per line, line index = id. Backslash and newline
// are escaped as \\ and \n.
inline std::string escape_token(std::string_view t) {
  std::string out;
  for (char c : t) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else if (c == '\r') {
      out += "\\r";
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string unescape_token(std::string_view t) {
  std::string out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != '\\' || i + 1 == t.size()) {
      out += t[i];
      continue;
    }
    const char n = t[++i];
    out += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
  }
  return out;
}

inline void save_vocabulary(const Vocabulary& v, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write vocabulary " + path);
  for (const auto& t : v.tokens()) out << escape_token(t) << '\n';
}

inline Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read vocabulary " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(unescape_token(line));
  return Vocabulary(std::move(tokens));
}

}  // namespace modelizer
