#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

// Built-in Markdown-subset to HTML converter used as the bundled program
// under test.
//
// Blocks (separated by blank lines):
//   "# T" .. "###### T"  ->  <hN>T</hN>
//   other lines          ->  <p>T</p>, consecutive lines joined with "\n"
// Each block is followed by "\n".
//
// Inline:
//   **T**    -> <strong>T</strong>
//   *T*, _T_ -> <em>T</em>       (_ only at word boundaries)
//   `T`      -> <code>T</code>   (content taken literally)
//   [T](U)   -> <a href="U">T</a>
// & < > are escaped in text; & and " in href values.
//
// Everything else that CommonMark would treat as structure is rejected:
// block quotes, lists, fenced code, tables, raw HTML, images, strikethrough,
// backslash escapes, nested emphasis and unmatched markers.
class ConversionError : public Error {
 public:
  ConversionError(std::size_t position, const std::string& msg)
      : Error("unsupported input at position " + std::to_string(position) + ": " + msg), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

namespace detail {

inline void escape_html(std::string_view s, std::string& out, bool attribute) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += attribute ? "<" : "&lt;"; break;
      case '>': out += attribute ? ">" : "&gt;"; break;
      case '"': out += attribute ? "&quot;" : "\""; break;
      default: out += c;
    }
  }
}

class InlineConverter {
 public:
  InlineConverter(std::string_view line, std::size_t offset) : s_(line), offset_(offset) {}

  std::string run() {
    std::string out;
    std::size_t text_start = 0;
    auto flush = [&](std::size_t end) { escape_html(s_.substr(text_start, end - text_start), out, false); };
    std::size_t i = 0;
    while (i < s_.size()) {
      const char c = s_[i];
      if (c == '<') fail(i, "raw HTML");
      if (c == '\\') fail(i, "backslash escape");
      if (c == '!' && at(i + 1) == '[') fail(i, "image");
      if (c == '~' && at(i + 1) == '~') fail(i, "strikethrough");
      if (c == '*' && at(i + 1) == '*') {
        flush(i);
        const std::size_t close = find_plain(i, i + 2, "**", "strong");
        out += "<strong>";
        escape_html(s_.substr(i + 2, close - i - 2), out, false);
        out += "</strong>";
        i = text_start = close + 2;
        continue;
      }
      if (c == '*' || (c == '_' && opens_underscore(i))) {
        flush(i);
        const std::size_t close = find_plain(i, i + 1, std::string(1, c), "emphasis");
        if (c == '_' && close + 1 < s_.size() && is_word(s_[close + 1])) fail(close, "'_' closer inside a word");
        out += "<em>";
        escape_html(s_.substr(i + 1, close - i - 1), out, false);
        out += "</em>";
        i = text_start = close + 1;
        continue;
      }
      if (c == '`') {
        flush(i);
        const std::size_t close = s_.find('`', i + 1);
        if (close == std::string_view::npos) fail(i, "unterminated code span");
        if (close == i + 1) fail(i, "empty code span");
        out += "<code>";
        escape_html(s_.substr(i + 1, close - i - 1), out, false);
        out += "</code>";
        i = text_start = close + 1;
        continue;
      }
      if (c == '[') {
        flush(i);
        const std::size_t mid = find_plain(i, i + 1, "](", "link");
        const std::size_t close = s_.find(')', mid + 2);
        if (close == std::string_view::npos) fail(mid, "unterminated link target");
        const auto url = s_.substr(mid + 2, close - mid - 2);
        if (url.empty() || url.find_first_of(" \t<>()[]") != std::string_view::npos) fail(mid + 2, "bad link target");
        out += "<a href=\"";
        escape_html(url, out, true);
        out += "\">";
        escape_html(s_.substr(i + 1, mid - i - 1), out, false);
        out += "</a>";
        i = text_start = close + 1;
        continue;
      }
      if (c == ']') fail(i, "unmatched ']'");
      ++i;
    }
    flush(s_.size());
    return out;
  }

 private:
  char at(std::size_t i) const { return i < s_.size() ? s_[i] : '\0'; }
  static bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

  bool opens_underscore(std::size_t i) const { return i == 0 || !is_word(s_[i - 1]); }

  [[noreturn]] void fail(std::size_t i, const std::string& msg) const { throw ConversionError(offset_ + i, msg); }

  // Finds `closer` after `from`; the span in between must be non-empty plain
  // text without spaces at its edges and without any other marker.
  std::size_t find_plain(std::size_t open, std::size_t from, const std::string& closer, const char* what) const {
    if (from >= s_.size() || s_[from] == ' ') fail(from, std::string("bad ") + what + " opener");
    std::size_t j = from;
    while (j < s_.size()) {
      if (s_.compare(j, closer.size(), closer) == 0) {
        if (closer == "_" && j + 1 < s_.size() && is_word(s_[j + 1])) {
          ++j;
          continue;
        }
        if (j == from || s_[j - 1] == ' ') fail(j, std::string("bad ") + what + " closer");
        return j;
      }
      const char c = s_[j];
      if (c == '*' || c == '`' || c == '[' || c == ']' || c == '<' || c == '\\' ||
          (c == '_' && closer != "_" && !is_word(at(j - 1)) && j > from)) {
        fail(j, std::string("nested marker inside ") + what);
      }
      ++j;
    }
    fail(open, std::string("unterminated ") + what);
  }

  std::string_view s_;
  std::size_t offset_;
};

inline bool is_blank(std::string_view line) { return line.find_first_not_of(" \t") == std::string_view::npos; }

inline void reject_block_markers(std::string_view line, std::size_t pos) {
  if (line.front() == ' ') throw ConversionError(pos, "leading whitespace");
  if (line.back() == ' ') throw ConversionError(pos + line.size() - 1, "trailing whitespace");
  const auto rest = line;
  auto starts = [&](std::string_view p) { return rest.substr(0, p.size()) == p; };
  if (starts(">")) throw ConversionError(pos, "block quote");
  if (starts("- ") || starts("+ ") || starts("* ") || rest == "-" || rest == "+" || rest == "*")
    throw ConversionError(pos, "list item");
  if (starts("```") || starts("~~~")) throw ConversionError(pos, "fenced code");
  if (starts("|")) throw ConversionError(pos, "table");
  if (starts("---") || starts("***") || starts("___") || starts("===")) throw ConversionError(pos, "rule or setext underline");
  std::size_t d = 0;
  while (d < rest.size() && std::isdigit(static_cast<unsigned char>(rest[d]))) ++d;
  if (d > 0 && d < rest.size() && (rest[d] == '.' || rest[d] == ')')) throw ConversionError(pos, "ordered list item");
}

}  // namespace detail

inline std::string builtin_convert(std::string_view text) {
  std::string out;
  std::vector<std::string> paragraph;
  auto close_paragraph = [&] {
    if (paragraph.empty()) return;
    out += "<p>";
    for (std::size_t k = 0; k < paragraph.size(); ++k) {
      if (k) out += '\n';
      out += paragraph[k];
    }
    out += "</p>\n";
    paragraph.clear();
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (line.find('\r') != std::string_view::npos) throw ConversionError(pos + line.find('\r'), "carriage return");
    if (line.find('\t') != std::string_view::npos) throw ConversionError(pos + line.find('\t'), "tab");
    if (detail::is_blank(line)) {
      close_paragraph();
    } else if (line[0] == '#') {
      close_paragraph();
      std::size_t level = 0;
      while (level < line.size() && line[level] == '#') ++level;
      if (level > 6 || level >= line.size() || line[level] != ' ') throw ConversionError(pos, "bad heading marker");
      std::size_t body = level + 1;
      if (body >= line.size() || line[body] == ' ' || line.back() == ' ')
        throw ConversionError(pos + body, "empty heading or stray whitespace");
      const auto tag = std::to_string(level);
      out += "<h" + tag + ">";
      out += detail::InlineConverter(line.substr(body), pos + body).run();
      out += "</h" + tag + ">\n";
    } else {
      detail::reject_block_markers(line, pos);
      paragraph.push_back(detail::InlineConverter(line, pos).run());
    }
    pos = end + 1;
  }
  close_paragraph();
  return out;
}

}  // namespace modelizer
