#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/placeholders.hpp"

namespace modelizer {

enum class Format { markdown, html };
enum class MaskPolicy { simplified, optimizing, exhaustive };
enum class Instantiation { early, late };

using TokenSequence = std::vector<std::string>;

inline std::string to_string(Format f) { return f == Format::markdown ? "markdown" : "html"; }

inline Format parse_format(std::string_view s) {
  if (s == "markdown" || s == "md") return Format::markdown;
  if (s == "html") return Format::html;
  throw Error("unknown format '" + std::string(s) + "'", ErrorClass::usage);
}

inline std::string to_string(MaskPolicy p) {
  switch (p) {
    case MaskPolicy::simplified: return "simplified";
    case MaskPolicy::optimizing: return "optimizing";
    case MaskPolicy::exhaustive: return "exhaustive";
  }
  return "optimizing";
}

inline MaskPolicy parse_policy(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "simplified") return MaskPolicy::simplified;
  if (l == "optimizing") return MaskPolicy::optimizing;
  if (l == "exhaustive") return MaskPolicy::exhaustive;
  throw Error("unknown masking policy '" + std::string(s) + "'", ErrorClass::usage);
}

struct PlaceholderNames {
  std::string text = "TEXT";
  std::string url = "URL";

  std::vector<std::string> all() const { return {text, url}; }
};

// Whitespace and raw tag text that the token stream does not carry. Only
// applied when reconstructing the very token sequence it was recorded for.
struct Layout {
  TokenSequence tokens;
  std::vector<std::string> gaps;                                    // text before token i
  std::string tail;                                                 // text after the last token
  std::map<std::size_t, std::string> surfaces;                      // raw text of structural token i
  std::map<std::size_t, std::pair<std::string, std::string>> href;  // raw text around an href value

  friend bool operator==(const Layout&, const Layout&) = default;
};

class PlaceholderMap {
 public:
  PlaceholderMap() = default;
  explicit PlaceholderMap(MaskPolicy p) : policy_(p) {}

  MaskPolicy policy() const { return policy_; }

  // Keyed entries in first-emission order (OPTIMIZING / EXHAUSTIVE).
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  // (name, content) per placeholder position in order (SIMPLIFIED).
  const std::vector<std::pair<std::string, std::string>>& occurrences() const { return occurrences_; }
  const std::optional<Layout>& layout() const { return layout_; }

  std::optional<std::string> lookup(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  void bind(std::string key, std::string content) {
    for (auto& [k, v] : entries_) {
      if (k == key) return;
    }
    entries_.emplace_back(std::move(key), std::move(content));
  }

  void push_occurrence(std::string name, std::string content) {
    occurrences_.emplace_back(std::move(name), std::move(content));
  }

  void set_layout(Layout l) { layout_ = std::move(l); }

  // The same bindings without layout, e.g. to instantiate a different token
  // sequence than the one that was tokenized.
  PlaceholderMap content_only() const {
    PlaceholderMap m = *this;
    m.layout_.reset();
    return m;
  }

  std::size_t size() const { return policy_ == MaskPolicy::simplified ? occurrences_.size() : entries_.size(); }

  friend bool operator==(const PlaceholderMap&, const PlaceholderMap&) = default;

 private:
  MaskPolicy policy_ = MaskPolicy::optimizing;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::pair<std::string, std::string>> occurrences_;
  std::optional<Layout> layout_;
};

struct Tokenized {
  TokenSequence tokens;
  PlaceholderMap map;
};

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Recognizes NAME_k; returns the name.
inline std::optional<std::string> numbered_placeholder(std::string_view s, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (s.size() <= n.size() + 1 || s.substr(0, n.size()) != n || s[n.size()] != '_') continue;
    const auto digits = s.substr(n.size() + 1);
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return n;
  }
  return std::nullopt;
}

inline std::optional<std::string> placeholder_name(std::string_view s, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (s == n) return n;
  }
  return numbered_placeholder(s, names);
}

inline constexpr std::string_view href_open = "href=\"";
inline constexpr std::string_view href_close = "\">";

inline bool is_href_token(std::string_view t) {
  return t.size() >= href_open.size() + href_close.size() && t.substr(0, href_open.size()) == href_open &&
         t.substr(t.size() - href_close.size()) == href_close;
}

inline std::string_view href_key(std::string_view t) {
  return t.substr(href_open.size(), t.size() - href_open.size() - href_close.size());
}

inline std::string href_token(std::string_view key) {
  return std::string(href_open) + std::string(key) + std::string(href_close);
}

// Assigns placeholder tokens to content fragments according to the policy.
class Masker {
 public:
  Masker(MaskPolicy policy, std::vector<std::string> names) : policy_(policy), names_(std::move(names)), map_(policy) {}

  // Ids already present in the document must not be handed out again.
  void reserve(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (!standalone_before(text, i)) continue;
      for (const auto& n : names_) {
        if (text.substr(i, n.size()) != n || i + n.size() >= text.size() || text[i + n.size()] != '_') continue;
        std::size_t d = i + n.size() + 1;
        std::size_t v = 0;
        const std::size_t digits_from = d;
        while (d < text.size() && std::isdigit(static_cast<unsigned char>(text[d])) && d - digits_from < 9)
          v = v * 10 + static_cast<std::size_t>(text[d++] - '0');
        if (d > digits_from && standalone_after(text, d)) used_[n].insert(v);
      }
    }
  }

  // Returns the token standing for `content` under placeholder `name`.
  std::string mask(const std::string& name, const std::string& content) {
    if (auto n = numbered_placeholder(content, names_)) {
      if (policy_ == MaskPolicy::simplified) {
        map_.push_occurrence(*n, content);
        return *n;
      }
      map_.bind(content, content);
      return content;
    }
    switch (policy_) {
      case MaskPolicy::simplified:
        map_.push_occurrence(name, content);
        return name;
      case MaskPolicy::optimizing: {
        auto& seen = seen_[name];
        if (auto it = seen.find(content); it != seen.end()) return it->second;
        auto key = fresh(name);
        seen.emplace(content, key);
        map_.bind(key, content);
        return key;
      }
      case MaskPolicy::exhaustive: {
        auto key = fresh(name);
        map_.bind(key, content);
        return key;
      }
    }
    return name;
  }

  PlaceholderMap take() { return std::move(map_); }

 private:
  std::string fresh(const std::string& name) {
    auto& used = used_[name];
    std::size_t& next = next_[name];
    do {
      ++next;
    } while (used.count(next));
    used.insert(next);
    return name + "_" + std::to_string(next);
  }

  MaskPolicy policy_;
  std::vector<std::string> names_;
  PlaceholderMap map_;
  std::map<std::string, std::set<std::size_t>> used_;
  std::map<std::string, std::size_t> next_;
  std::map<std::string, std::map<std::string, std::string>> seen_;
};

// Accumulates tokens together with the layout needed to reproduce the input.
class StreamBuilder {
 public:
  StreamBuilder(std::string_view text, MaskPolicy policy, const PlaceholderNames& names)
      : names_(names.all()), masker_(policy, names_) {
    masker_.reserve(text);
  }

  void structural(std::string token, std::string_view surface) {
    if (surface != token) layout_.surfaces[tokens_.size()] = std::string(surface);
    push(std::move(token));
  }

  void gap(std::string_view ws) { pending_ += ws; }

  // A content run: surrounding whitespace goes to the layout, numbered
  // placeholders inside it pass through, the remaining stretches are masked.
  void content(const std::string& name, std::string_view run) {
    std::size_t b = 0, e = run.size();
    while (b < e && is_space(run[b])) ++b;
    while (e > b && is_space(run[e - 1])) --e;
    pending_ += run.substr(0, b);
    const auto body = run.substr(b, e - b);
    std::size_t from = 0;
    std::size_t i = 0;
    while (i < body.size()) {
      const std::size_t len = numbered_at(body, i);
      if (len == 0) {
        ++i;
        continue;
      }
      fragment(name, body.substr(from, i - from));
      fragment(name, body.substr(i, len));
      i += len;
      from = i;
    }
    fragment(name, body.substr(from));
    pending_ += run.substr(e);
  }

  // An href attribute: `prefix` and `suffix` are the raw text around the value.
  void href(std::string_view value, std::string_view prefix, std::string_view suffix) {
    const std::string key = masker_.mask(names_[1], std::string(value));
    if (prefix != href_open || suffix != href_close)
      layout_.href[tokens_.size()] = {std::string(prefix), std::string(suffix)};
    push(href_token(key));
  }

  Tokenized finish() {
    layout_.tokens = tokens_;
    layout_.tail = std::move(pending_);
    Tokenized out{std::move(tokens_), masker_.take()};
    out.map.set_layout(std::move(layout_));
    return out;
  }

 private:
  std::size_t numbered_at(std::string_view s, std::size_t i) const {
    if (!standalone_before(s, i)) return 0;
    for (const auto& n : names_) {
      if (s.substr(i, n.size()) != n || i + n.size() >= s.size() || s[i + n.size()] != '_') continue;
      std::size_t d = i + n.size() + 1;
      while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
      if (d > i + n.size() + 1 && standalone_after(s, d)) return d - i;
    }
    return 0;
  }

  void fragment(const std::string& name, std::string_view piece) {
    std::size_t b = 0, e = piece.size();
    while (b < e && is_space(piece[b])) ++b;
    while (e > b && is_space(piece[e - 1])) --e;
    pending_ += piece.substr(0, b);
    if (e > b) push(masker_.mask(name, std::string(piece.substr(b, e - b))));
    pending_ += piece.substr(e);
  }

  void push(std::string token) {
    layout_.gaps.push_back(std::move(pending_));
    pending_.clear();
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> names_;
  Masker masker_;
  TokenSequence tokens_;
  Layout layout_;
  std::string pending_;
};

// ---------------------------------------------------------------------------
// Markdown: heading markers, **, *, _, `, [, ](, ) and line breaks are tokens.
// ---------------------------------------------------------------------------

inline void reject_markdown_block(std::string_view line, std::size_t pos) {
  std::size_t i = 0;
  while (i < line.size() && line[i] == ' ') ++i;
  const auto rest = line.substr(i);
  auto starts = [&](std::string_view p) { return rest.substr(0, p.size()) == p; };
  if (starts(">") || starts("- ") || starts("+ ") || starts("* ") || starts("```") || starts("~~~") || starts("|"))
    throw TokenizeFailure(pos + i, "unsupported block structure");
  std::size_t d = 0;
  while (d < rest.size() && std::isdigit(static_cast<unsigned char>(rest[d]))) ++d;
  if (d > 0 && d < rest.size() && (rest[d] == '.' || rest[d] == ')'))
    throw TokenizeFailure(pos + i, "unsupported ordered list");
}

inline bool underscore_marker(std::string_view s, std::size_t i) {
  const bool word_before = i > 0 && is_word_char(s[i - 1]);
  const bool word_after = i + 1 < s.size() && is_word_char(s[i + 1]);
  return !word_before || !word_after;
}

inline Tokenized tokenize_markdown(std::string_view text, MaskPolicy policy, const PlaceholderNames& names) {
  StreamBuilder b(text, policy, names);
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    reject_markdown_block(line, pos);

    std::size_t i = 0;
    if (!line.empty() && line[0] == '#') {
      std::size_t level = 0;
      while (level < line.size() && line[level] == '#') ++level;
      if (level > 6 || level >= line.size() || line[level] != ' ')
        throw TokenizeFailure(pos, "malformed heading marker");
      b.structural(std::string(level, '#'), line.substr(0, level));
      i = level;
    }

    std::size_t run = i;
    bool in_link = false;
    auto flush = [&](std::size_t upto) {
      if (upto > run) b.content(names.text, line.substr(run, upto - run));
    };
    while (i < line.size()) {
      const char c = line[i];
      if (c == '<') throw TokenizeFailure(pos + i, "raw HTML in Markdown");
      if (c == '\\') throw TokenizeFailure(pos + i, "unsupported escape");
      if (c == '*') {
        flush(i);
        const std::size_t n = (i + 1 < line.size() && line[i + 1] == '*') ? 2 : 1;
        b.structural(std::string(n, '*'), line.substr(i, n));
        i += n;
        run = i;
      } else if (c == '_' && underscore_marker(line, i)) {
        flush(i);
        b.structural("_", "_");
        run = ++i;
      } else if (c == '`') {
        flush(i);
        const std::size_t close = line.find('`', i + 1);
        if (close == std::string_view::npos) throw TokenizeFailure(pos + i, "unterminated code span");
        b.structural("`", "`");
        b.content(names.text, line.substr(i + 1, close - i - 1));
        b.structural("`", "`");
        i = run = close + 1;
      } else if (c == '[') {
        if (in_link) throw TokenizeFailure(pos + i, "nested link");
        flush(i);
        b.structural("[", "[");
        in_link = true;
        run = ++i;
      } else if (c == ']') {
        if (!in_link || i + 1 >= line.size() || line[i + 1] != '(') throw TokenizeFailure(pos + i, "stray ']'");
        flush(i);
        b.structural("](", "](");
        const std::size_t close = line.find(')', i + 2);
        if (close == std::string_view::npos) throw TokenizeFailure(pos + i, "unterminated link target");
        b.content(names.url, line.substr(i + 2, close - i - 2));
        b.structural(")", ")");
        in_link = false;
        i = run = close + 1;
      } else {
        ++i;
      }
    }
    if (in_link) throw TokenizeFailure(pos + line.size(), "unterminated link");
    flush(line.size());
    if (end < text.size()) b.structural("\n", "\n");
    pos = end + 1;
  }
  return b.finish();
}

// ---------------------------------------------------------------------------
// HTML: tags of the supported subset are tokens; an anchor becomes `<a`
// followed by a compound `href="URL_k">` token. Attributes other than href
// are not tokens; they only survive in the layout.
// ---------------------------------------------------------------------------

inline const std::set<std::string>& html_tags() {
  static const std::set<std::string> tags{"h1", "h2", "h3", "h4", "h5", "h6", "p", "strong",
                                          "em", "i",  "b",  "code", "a", "br"};
  return tags;
}

struct RawTag {
  bool closing = false;
  std::string name;    // lower-case
  std::size_t end;     // one past '>'
  std::size_t attrs;   // start of the attribute text
};

inline RawTag scan_tag(std::string_view s, std::size_t i) {
  RawTag t;
  std::size_t j = i + 1;
  if (j < s.size() && s[j] == '/') {
    t.closing = true;
    ++j;
  }
  const std::size_t name_from = j;
  while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) {
    t.name += static_cast<char>(std::tolower(static_cast<unsigned char>(s[j])));
    ++j;
  }
  if (j == name_from) throw TokenizeFailure(i, "unsupported markup");
  t.attrs = j;
  char quote = 0;
  while (j < s.size()) {
    const char c = s[j];
    if (quote != 0) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      t.end = j + 1;
      return t;
    } else if (c == '<') {
      break;
    }
    ++j;
  }
  throw TokenizeFailure(i, "unterminated tag");
}

inline Tokenized tokenize_html(std::string_view text, MaskPolicy policy, const PlaceholderNames& names) {
  StreamBuilder b(text, policy, names);
  std::vector<std::string> open;
  std::size_t run = 0;
  std::size_t i = 0;
  // Whitespace between top-level blocks becomes a "\n" token when it holds a
  // line break, e.g. "</p>\n".
  auto flush = [&](std::size_t upto) {
    if (upto <= run) return;
    const auto piece = text.substr(run, upto - run);
    const bool blank = std::all_of(piece.begin(), piece.end(), is_space);
    if (open.empty() && blank && piece.find('\n') != std::string_view::npos) {
      b.structural("\n", piece);
    } else {
      b.content(names.text, piece);
    }
  };
  while (i < text.size()) {
    if (text[i] != '<') {
      if (text[i] == '>') throw TokenizeFailure(i, "stray '>'");
      ++i;
      continue;
    }
    flush(i);
    const RawTag t = scan_tag(text, i);
    if (!html_tags().count(t.name)) throw TokenizeFailure(i, "unsupported tag <" + t.name + ">");
    const auto raw = text.substr(i, t.end - i);
    if (t.closing) {
      if (open.empty() || open.back() != t.name) throw TokenizeFailure(i, "unbalanced </" + t.name + ">");
      open.pop_back();
      b.structural("</" + t.name + ">", raw);
    } else if (t.name == "a") {
      const auto attrs = text.substr(t.attrs, t.end - 1 - t.attrs);
      std::size_t h = std::string_view::npos;
      for (std::size_t k = 0; k + 5 <= attrs.size(); ++k) {
        if (attrs.substr(k, 5) == "href=" && k > 0 && is_space(attrs[k - 1])) {
          h = k;
          break;
        }
      }
      if (h == std::string_view::npos) {
        b.structural("<a>", raw);
      } else {
        std::size_t ws = h;
        while (ws > 0 && is_space(attrs[ws - 1])) --ws;
        b.structural("<a", text.substr(i, t.attrs + ws - i));
        b.gap(attrs.substr(ws, h - ws));
        const std::size_t v = h + 5;
        if (v >= attrs.size() || (attrs[v] != '"' && attrs[v] != '\''))
          throw TokenizeFailure(t.attrs + h, "unquoted href");
        const std::size_t close = attrs.find(attrs[v], v + 1);
        if (close == std::string_view::npos) throw TokenizeFailure(t.attrs + h, "unterminated href");
        const auto value = attrs.substr(v + 1, close - v - 1);
        if (value.empty()) throw TokenizeFailure(t.attrs + h, "empty href");
        b.href(value, attrs.substr(h, v + 1 - h), text.substr(t.attrs + close, t.end - t.attrs - close));
      }
      open.push_back("a");
    } else if (t.name == "br") {
      b.structural("<br>", raw);
    } else {
      b.structural("<" + t.name + ">", raw);
      open.push_back(t.name);
    }
    i = run = t.end;
  }
  flush(text.size());
  if (!open.empty()) throw TokenizeFailure(text.size(), "unclosed <" + open.back() + ">");
  return b.finish();
}

}  // namespace detail

inline Tokenized mapped_tokenize(std::string_view text, Format format, MaskPolicy policy = MaskPolicy::optimizing,
                                 const PlaceholderNames& names = {}) {
  return format == Format::markdown ? detail::tokenize_markdown(text, policy, names)
                                    : detail::tokenize_html(text, policy, names);
}

// ---------------------------------------------------------------------------
// Reconstruction
// ---------------------------------------------------------------------------

namespace detail {

enum class Role { content, open, close, mid, heading, newline };

// Roles for the canonical Markdown join; symmetric markers alternate between
// opening and closing.
inline std::vector<Role> markdown_roles(const TokenSequence& tokens) {
  std::vector<Role> roles;
  roles.reserve(tokens.size());
  std::map<std::string, bool> inside;
  for (const auto& t : tokens) {
    if (t == "\n") {
      roles.push_back(Role::newline);
      inside.clear();
    } else if (!t.empty() && t.find_first_not_of('#') == std::string::npos) {
      roles.push_back(Role::heading);
    } else if (t == "**" || t == "*" || t == "_" || t == "`") {
      bool& in = inside[t];
      roles.push_back(in ? Role::close : Role::open);
      in = !in;
    } else if (t == "[") {
      roles.push_back(Role::open);
    } else if (t == "](") {
      roles.push_back(Role::mid);
    } else if (t == ")") {
      roles.push_back(Role::close);
    } else {
      roles.push_back(Role::content);
    }
  }
  return roles;
}

inline std::vector<std::string> canonical_gaps(const TokenSequence& tokens, Format format) {
  std::vector<std::string> gaps(tokens.size());
  if (format == Format::html) {
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      if (tokens[i - 1] == "<a" && is_href_token(tokens[i])) gaps[i] = " ";
    }
    return gaps;
  }
  const auto roles = markdown_roles(tokens);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const Role l = roles[i - 1], r = roles[i];
    if (l == Role::heading || ((l == Role::content || l == Role::close) && (r == Role::content || r == Role::open)))
      gaps[i] = " ";
  }
  return gaps;
}

class Binder {
 public:
  Binder(const PlaceholderMap* map, std::vector<std::string> names) : map_(map), names_(std::move(names)) {}

  // A SIMPLIFIED map binds bare names, the keyed policies bind NAME_k.
  bool is_placeholder(std::string_view t) const {
    if (map_ != nullptr && map_->policy() == MaskPolicy::simplified)
      return std::find(names_.begin(), names_.end(), t) != names_.end();
    return numbered_placeholder(t, names_).has_value();
  }

  // Content for a placeholder token; the token itself when there is no map.
  std::string bind(const std::string& token) {
    if (map_ == nullptr) return token;
    if (map_->policy() == MaskPolicy::simplified) {
      std::size_t& next = cursor_[token];
      const auto& occ = map_->occurrences();
      while (next < occ.size() && occ[next].first != token) ++next;
      if (next >= occ.size()) throw UnboundPlaceholder(token);
      return occ[next++].second;
    }
    if (auto v = map_->lookup(token)) return *v;
    throw UnboundPlaceholder(token);
  }

 private:
  const PlaceholderMap* map_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> cursor_;
};

}  // namespace detail

// Joins tokens back into text. With a map, placeholder tokens are replaced by
// their content: early substitutes per token before joining, late joins the
// placeholder text first and substitutes in the joined string. The layout
// recorded at tokenization is used when `tokens` is the sequence it belongs
// to; otherwise tokens are joined canonically.
inline std::string reconstruct(const TokenSequence& tokens, const PlaceholderMap* map, Format format,
                               Instantiation inst = Instantiation::early, const PlaceholderNames& names = {}) {
  const bool use_layout = map != nullptr && map->layout() && map->layout()->tokens == tokens;
  const std::vector<std::string> gaps = use_layout ? map->layout()->gaps : detail::canonical_gaps(tokens, format);
  detail::Binder binder(inst == Instantiation::early ? map : nullptr, names.all());

  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out += gaps[i];
    const auto& t = tokens[i];
    if (format == Format::html && detail::is_href_token(t)) {
      const std::string key(detail::href_key(t));
      std::pair<std::string, std::string> affix{std::string(detail::href_open), std::string(detail::href_close)};
      if (use_layout) {
        if (auto it = map->layout()->href.find(i); it != map->layout()->href.end()) affix = it->second;
      }
      out += affix.first;
      out += binder.is_placeholder(key) ? binder.bind(key) : key;
      out += affix.second;
      continue;
    }
    if (binder.is_placeholder(t)) {
      out += binder.bind(t);
      continue;
    }
    if (use_layout) {
      if (auto it = map->layout()->surfaces.find(i); it != map->layout()->surfaces.end()) {
        out += it->second;
        continue;
      }
    }
    out += t;
  }
  if (use_layout) out += map->layout()->tail;
  if (inst == Instantiation::early || map == nullptr) return out;

  // late instantiation: substitute standalone placeholder tokens in the text
  detail::Binder late(map, names.all());
  const auto all = names.all();
  std::string result;
  std::size_t i = 0;
  while (i < out.size()) {
    std::size_t len = 0;
    if (standalone_before(out, i)) {
      for (const auto& n : all) {
        if (out.compare(i, n.size(), n) != 0) continue;
        std::size_t d = i + n.size();
        if (d < out.size() && out[d] == '_') {
          std::size_t e = d + 1;
          while (e < out.size() && std::isdigit(static_cast<unsigned char>(out[e]))) ++e;
          if (e > d + 1 && standalone_after(out, e)) {
            len = e - i;
            break;
          }
        }
        if (map->policy() == MaskPolicy::simplified && standalone_after(out, d)) {
          len = n.size();
          break;
        }
      }
    }
    if (len == 0) {
      result += out[i++];
      continue;
    }
    result += late.bind(out.substr(i, len));
    i += len;
  }
  return result;
}

inline std::string reconstruct(const TokenSequence& tokens, const PlaceholderMap& map, Format format,
                               Instantiation inst = Instantiation::early, const PlaceholderNames& names = {}) {
  return reconstruct(tokens, &map, format, inst, names);
}

}  // namespace modelizer
