#pragma once

#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

// Byte-level byte-pair encoding. Text is first cut into chunks (a run of
// whitespace, or one optional space followed by a run of non-space bytes);
// merges never cross chunk borders. The base alphabet is all 256 bytes, so any
// input segments without unknown symbols.
class SubwordTokenizer {
 public:
  using Merge = std::pair<std::string, std::string>;

  SubwordTokenizer() = default;
  explicit SubwordTokenizer(std::vector<Merge> merges) : merges_(std::move(merges)) { index(); }

  const std::vector<Merge>& merges() const { return merges_; }
  std::size_t vocab_size() const { return 256 + merges_.size(); }

  static std::vector<std::string_view> chunks(std::string_view text) {
    std::vector<std::string_view> out;
    auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t j = i;
      if (text[i] == ' ' && i + 1 < text.size() && !space(text[i + 1])) {
        ++j;
        while (j < text.size() && !space(text[j])) ++j;
      } else if (space(text[i])) {
        while (j < text.size() && space(text[j])) ++j;
        // a final space before a word travels with the word
        if (j < text.size() && text[j - 1] == ' ' && j - 1 > i) --j;
      } else {
        while (j < text.size() && !space(text[j])) ++j;
      }
      out.push_back(text.substr(i, j - i));
      i = j;
    }
    return out;
  }

  std::vector<std::string> segment(std::string_view text) const {
    std::vector<std::string> out;
    for (auto chunk : chunks(text)) {
      std::vector<std::string> parts;
      for (char c : chunk) parts.emplace_back(1, c);
      while (parts.size() > 1) {
        std::size_t best = merges_.size(), at = 0;
        for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
          auto it = rank_.find({parts[k], parts[k + 1]});
          if (it != rank_.end() && it->second < best) {
            best = it->second;
            at = k;
          }
        }
        if (best == merges_.size()) break;
        parts[at] += parts[at + 1];
        parts.erase(parts.begin() + static_cast<long>(at) + 1);
      }
      for (auto& p : parts) out.push_back(std::move(p));
    }
    return out;
  }

  static std::string join(const std::vector<std::string>& pieces) {
    std::string out;
    for (const auto& p : pieces) out += p;
    return out;
  }

 private:
  void index() {
    rank_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i) rank_.emplace(merges_[i], i);
  }

  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> rank_;
};

// Learns merges until the vocabulary reaches vocab_size (256 bytes plus one
// entry per merge). Each step merges the most frequent adjacent pair, ties
// going to the lexicographically smallest pair. Training stops early when no
// adjacent pair is left.
inline SubwordTokenizer subword_train(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  if (vocab_size <= 256) throw ConfigInvalid("subword vocabulary size must exceed 256");
  std::map<std::string, std::size_t> chunk_freq;
  for (const auto& line : corpus) {
    for (auto c : SubwordTokenizer::chunks(line)) ++chunk_freq[std::string(c)];
  }
  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freq;
  for (const auto& [chunk, n] : chunk_freq) {
    std::vector<std::string> parts;
    for (char c : chunk) parts.emplace_back(1, c);
    words.push_back(std::move(parts));
    freq.push_back(n);
  }

  std::vector<SubwordTokenizer::Merge> merges;
  while (256 + merges.size() < vocab_size) {
    std::map<SubwordTokenizer::Merge, std::size_t> counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      for (std::size_t k = 0; k + 1 < words[w].size(); ++k) counts[{words[w][k], words[w][k + 1]}] += freq[w];
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;  // map order gives the smallest pair on ties
    }
    const auto merge = best->first;
    merges.push_back(merge);
    for (auto& parts : words) {
      std::vector<std::string> next;
      next.reserve(parts.size());
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (k + 1 < parts.size() && parts[k] == merge.first && parts[k + 1] == merge.second) {
          next.push_back(parts[k] + parts[k + 1]);
          ++k;
        } else {
          next.push_back(std::move(parts[k]));
        }
      }
      parts = std::move(next);
    }
  }
  if (merges.empty()) throw CorpusTooSmall("no adjacent byte pair to merge");
  return SubwordTokenizer(std::move(merges));
}

// Merge table file: one merge per line, the two sides separated by a space.
// Bytes outside printable ASCII, space and backslash are written as \xHH.
inline std::string escape_bytes(std::string_view s) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    if (c > 0x20 && c < 0x7f && c != '\\') {
      out += static_cast<char>(c);
    } else {
      out += "\\x";
      out += hex[c >> 4];
      out += hex[c & 0xf];
    }
  }
  return out;
}

inline std::string unescape_bytes(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 3 < s.size() && s[i + 1] == 'x') {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 2, 2)), nullptr, 16));
      i += 3;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline void save_merges(const SubwordTokenizer& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write merge table " + path);
  for (const auto& [a, b] : t.merges()) out << escape_bytes(a) << ' ' << escape_bytes(b) << '\n';
}

inline SubwordTokenizer load_merges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read merge table " + path);
  std::vector<SubwordTokenizer::Merge> merges;
  std::string line;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error("malformed merge table line: " + line);
    merges.emplace_back(unescape_bytes(line.substr(0, sp)), unescape_bytes(line.substr(sp + 1)));
  }
  return SubwordTokenizer(std::move(merges));
}

}  // namespace modelizer
