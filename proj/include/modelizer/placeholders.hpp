#pragma once

#include <cctype>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

inline bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// A placeholder occurrence at [i, end) is standalone when it is not glued to a
// surrounding word. An underscore next to it only counts as glue when it
// continues into a word on its far side, so "_TEXT_" (emphasis) is standalone
// while "foo_TEXT" and "TEXT_bar" are not.
inline bool standalone_before(std::string_view s, std::size_t i) {
  if (i == 0) return true;
  if (is_alnum(s[i - 1])) return false;
  if (s[i - 1] == '_') return i < 2 || !is_word_char(s[i - 2]);
  return true;
}

inline bool standalone_after(std::string_view s, std::size_t end) {
  if (end >= s.size()) return true;
  if (is_alnum(s[end])) return false;
  if (s[end] == '_') return end + 1 >= s.size() || !is_word_char(s[end + 1]);
  return true;
}

// Rewrites every standalone occurrence of a placeholder name to NAME_k, with
// k counted per name from 1 in left-to-right order. Already numbered
// occurrences (TEXT_3) and longer words (CONTEXT) are left alone.
inline std::string augment_placeholders(std::string_view s, const std::vector<std::string>& names) {
  std::map<std::string, std::size_t, std::less<>> counters;
  std::string out;
  out.reserve(s.size() + s.size() / 4);
  std::size_t i = 0;
  while (i < s.size()) {
    const std::string* hit = nullptr;
    if (standalone_before(s, i)) {
      for (const auto& name : names) {
        if (s.substr(i, name.size()) != name || !standalone_after(s, i + name.size())) continue;
        if (hit == nullptr || name.size() > hit->size()) hit = &name;
      }
    }
    if (hit == nullptr) {
      out += s[i++];
      continue;
    }
    out += *hit;
    out += '_';
    out += std::to_string(++counters[*hit]);
    i += hit->size();
  }
  return out;
}

inline std::string augment_placeholders(std::string_view s, const std::set<std::string>& names) {
  return augment_placeholders(s, std::vector<std::string>(names.begin(), names.end()));
}

// Removes `_k` suffixes from placeholder occurrences; the inverse of augmentation.
inline std::string strip_placeholder_ids(std::string_view s, const std::vector<std::string>& names) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    bool done = false;
    if (standalone_before(s, i)) {
      for (const auto& name : names) {
        if (s.substr(i, name.size()) != name) continue;
        std::size_t j = i + name.size();
        if (j >= s.size() || s[j] != '_') continue;
        std::size_t d = j + 1;
        while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
        if (d == j + 1 || !standalone_after(s, d)) continue;
        out += name;
        i = d;
        done = true;
        break;
      }
    }
    if (!done) out += s[i++];
  }
  return out;
}

// Semantic refinement: an ordered list of rewrite rules applied to an
// augmented input before hashing.
using RefineRule = std::function<std::string(const std::string&)>;

struct Refiner {
  std::string name;
  std::vector<RefineRule> rules;

  std::string operator()(const std::string& s) const {
    std::string out = s;
    for (const auto& r : rules) out = r(out);
    return out;
  }
};

// In every `JOIN T ON A.x = B.y` the first table reference is re-bound to the
// table introduced just before the JOIN and the second to the joined table T.
inline std::string rebind_sql_joins(const std::string& s) {
  static const std::regex from_re(R"(\bFROM\s+(\w+))");
  static const std::regex join_re(R"(\bJOIN\s+(\w+)\s+ON\s+(\w+)(\.\w+\s*=\s*)(\w+)(\.\w+))");
  std::smatch m;
  if (!std::regex_search(s, m, from_re)) return s;
  std::string previous = m[1].str();
  std::string out(s.begin(), s.begin() + m.position(0) + m.length(0));
  auto it = s.cbegin() + m.position(0) + m.length(0);
  while (std::regex_search(it, s.cend(), m, join_re)) {
    const std::string joined = m[1].str();
    out.append(it, m[0].first);
    out += "JOIN " + joined;
    out.append(m[1].second, m[2].first);
    out += previous;
    out += m[3].str();
    out += joined;
    out += m[5].str();
    previous = joined;
    it = m[0].second;
  }
  out.append(it, s.cend());
  return out;
}

inline Refiner make_refiner(const std::string& name) {
  if (name.empty() || name == "none") return {"none", {}};
  if (name == "sql-join") return {name, {rebind_sql_joins}};
  throw RefinerUnknown(name);
}

inline std::string refine_semantics(const std::string& s, const Refiner& refiner) { return refiner(s); }

inline std::string refine_semantics(const std::string& s, const std::string& refiner_name) {
  return make_refiner(refiner_name)(s);
}

}  // namespace modelizer
