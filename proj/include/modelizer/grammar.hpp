#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

struct Symbol {
  enum class Kind { terminal, nonterminal, placeholder };

  Kind kind = Kind::terminal;
  std::string text;  // literal for terminals, name otherwise

  static Symbol terminal(std::string t) { return {Kind::terminal, std::move(t)}; }
  static Symbol nonterminal(std::string n) { return {Kind::nonterminal, std::move(n)}; }
  static Symbol placeholder(std::string n) { return {Kind::placeholder, std::move(n)}; }

  bool is_terminal() const { return kind == Kind::terminal; }
  bool is_nonterminal() const { return kind == Kind::nonterminal; }
  bool is_placeholder() const { return kind == Kind::placeholder; }

  friend bool operator==(const Symbol&, const Symbol&) = default;
};

// An empty `symbols` list is the empty expansion.
struct Alternative {
  std::vector<Symbol> symbols;
  std::optional<double> probability;
};

struct Grammar {
  std::string start_symbol;
  std::map<std::string, std::vector<Alternative>> rules;
  std::set<std::string> placeholders;
};

class ProbabilityDeficit : public Error {
 public:
  ProbabilityDeficit(const std::string& rule, double sum)
      : Error("explicit probabilities of <" + rule + "> sum to " + std::to_string(sum) +
              " < 1 with no unassigned alternative") {}
};

inline constexpr double probability_tolerance = 1e-9;

// Explicit probabilities are kept; the remainder is split equally among the
// unassigned alternatives.
inline std::vector<double> effective_probabilities(const std::vector<Alternative>& alts) {
  double assigned = 0.0;
  std::size_t unassigned = 0;
  for (const auto& a : alts) {
    if (a.probability) {
      assigned += *a.probability;
    } else {
      ++unassigned;
    }
  }
  const double share = unassigned ? std::max(0.0, 1.0 - assigned) / static_cast<double>(unassigned) : 0.0;
  std::vector<double> out;
  out.reserve(alts.size());
  for (const auto& a : alts) out.push_back(a.probability ? *a.probability : share);
  return out;
}

inline void validate_grammar(const Grammar& g) {
  if (!g.rules.count(g.start_symbol)) throw UndefinedNonTerminal(g.start_symbol);
  std::set<std::string> used_placeholders;
  for (const auto& [name, alts] : g.rules) {
    if (alts.empty()) throw Error("rule <" + name + "> has no alternatives");
    double assigned = 0.0;
    bool any_unassigned = false;
    for (const auto& alt : alts) {
      if (alt.probability) {
        const double p = *alt.probability;
        if (!(p > 0.0 && p <= 1.0)) throw Error("probability of an alternative of <" + name + "> outside (0,1]");
        assigned += p;
      } else {
        any_unassigned = true;
      }
      for (const auto& s : alt.symbols) {
        switch (s.kind) {
          case Symbol::Kind::nonterminal:
            if (!g.rules.count(s.text)) throw UndefinedNonTerminal(s.text);
            break;
          case Symbol::Kind::placeholder:
            if (!g.placeholders.count(s.text)) throw Error("placeholder " + s.text + " is not declared");
            used_placeholders.insert(s.text);
            break;
          case Symbol::Kind::terminal:
            break;
        }
      }
    }
    if (assigned > 1.0 + probability_tolerance) throw ProbabilityOverflow(name, assigned);
    if (!any_unassigned && assigned < 1.0 - probability_tolerance) throw ProbabilityDeficit(name, assigned);
  }
  for (const auto& p : g.placeholders) {
    if (!used_placeholders.count(p)) throw DanglingPlaceholder(p);
  }
}

// ---------------------------------------------------------------------------
// BNF text format
//
//   # comment
//   %start <start>
//   %placeholders: TEXT URL
//   <start>  ::= <para> | <para> "\n" <start> @p=0.25
//   <para>   ::= TEXT "\n"
//            |   ""
//
// Quoted strings are terminals (escapes: \n \t \" \\), bare words must be
// declared placeholders, `""` alone is the empty expansion. A line starting
// with `|` continues the previous rule. Without %start the first rule is the
// start symbol.
// ---------------------------------------------------------------------------

namespace detail {

class BnfLineLexer {
 public:
  BnfLineLexer(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool done() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() const { return s_[pos_]; }
  bool starts_with(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }
  void advance(std::size_t n) { pos_ += n; }

  std::string nonterminal() {
    const auto close = s_.find('>', pos_);
    if (close == std::string_view::npos) throw GrammarSyntaxError(line_, "unterminated <non-terminal>");
    std::string name(s_.substr(pos_ + 1, close - pos_ - 1));
    if (name.empty()) throw GrammarSyntaxError(line_, "empty non-terminal name");
    pos_ = close + 1;
    return name;
  }

  std::string quoted() {
    std::string out;
    ++pos_;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: throw GrammarSyntaxError(line_, std::string("unknown escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) throw GrammarSyntaxError(line_, "unterminated string literal");
    ++pos_;
    return out;
  }

  std::string word() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start == pos_) throw GrammarSyntaxError(line_, std::string("unexpected character '") + s_[pos_] + "'");
    return std::string(s_.substr(start, pos_ - start));
  }

  double probability() {
    pos_ += 3;  // "@p="
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == 'e' || s_[pos_] == '-' || s_[pos_] == '+')) {
      ++pos_;
    }
    try {
      return std::stod(std::string(s_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      throw GrammarSyntaxError(line_, "malformed probability");
    }
  }

  std::size_t line() const { return line_; }

 private:
  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline std::vector<Alternative> parse_alternatives(BnfLineLexer& lx, const std::set<std::string>& placeholders) {
  std::vector<Alternative> alts(1);
  bool saw_anything = false;
  while (!lx.done()) {
    const char c = lx.peek();
    if (c == '|') {
      lx.advance(1);
      alts.emplace_back();
      continue;
    }
    saw_anything = true;
    if (c == '<') {
      alts.back().symbols.push_back(Symbol::nonterminal(lx.nonterminal()));
    } else if (c == '"') {
      auto lit = lx.quoted();
      if (!lit.empty()) alts.back().symbols.push_back(Symbol::terminal(std::move(lit)));
    } else if (lx.starts_with("@p=")) {
      if (alts.back().probability) throw GrammarSyntaxError(lx.line(), "duplicate probability");
      alts.back().probability = lx.probability();
    } else {
      auto w = lx.word();
      if (!placeholders.count(w)) {
        throw GrammarSyntaxError(lx.line(), "bare word '" + w + "' is not a declared placeholder");
      }
      alts.back().symbols.push_back(Symbol::placeholder(std::move(w)));
    }
  }
  if (!saw_anything && alts.size() == 1) throw GrammarSyntaxError(lx.line(), "rule has no alternatives");
  return alts;
}

}  // namespace detail

inline Grammar parse_grammar(std::string_view text) {
  Grammar g;
  std::string current;
  std::vector<std::string> order;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '%') {
      std::istringstream directive{std::string(line.substr(1))};
      std::string key;
      directive >> key;
      if (!key.empty() && key.back() == ':') key.pop_back();
      if (key == "placeholders") {
        std::string name;
        while (directive >> name) {
          if (name == ":") continue;
          g.placeholders.insert(name);
        }
      } else if (key == "start") {
        std::string name;
        directive >> name;
        if (name.size() < 3 || name.front() != '<' || name.back() != '>') {
          throw GrammarSyntaxError(line_no, "%start expects <name>");
        }
        g.start_symbol = name.substr(1, name.size() - 2);
      } else {
        throw GrammarSyntaxError(line_no, "unknown directive %" + key);
      }
      continue;
    }

    detail::BnfLineLexer lx(line, line_no);
    if (line.front() == '|') {
      if (current.empty()) throw GrammarSyntaxError(line_no, "continuation without a rule");
      lx.advance(1);
      auto more = detail::parse_alternatives(lx, g.placeholders);
      auto& alts = g.rules[current];
      alts.insert(alts.end(), more.begin(), more.end());
      continue;
    }
    if (line.front() != '<') throw GrammarSyntaxError(line_no, "expected <non-terminal> ::= ...");
    current = lx.nonterminal();
    lx.skip_ws();
    if (!lx.starts_with("::=")) throw GrammarSyntaxError(line_no, "expected ::=");
    lx.advance(3);
    if (g.rules.count(current)) throw GrammarSyntaxError(line_no, "duplicate rule <" + current + ">");
    order.push_back(current);
    g.rules[current] = detail::parse_alternatives(lx, g.placeholders);
  }
  if (g.start_symbol.empty()) {
    if (order.empty()) throw GrammarSyntaxError(line_no, "grammar has no rules");
    g.start_symbol = order.front();
  }
  return g;
}

inline Grammar load_grammar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open grammar file " + path, ErrorClass::usage);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_grammar(ss.str());
}

// ---------------------------------------------------------------------------
// Indexed form shared by the generator and the parser.
// ---------------------------------------------------------------------------

inline constexpr std::size_t infinite_cost = std::numeric_limits<std::size_t>::max();

struct IndexedSymbol {
  Symbol::Kind kind;
  int nonterminal = -1;  // valid for non-terminals
  std::string text;
};

struct IndexedAlternative {
  int lhs = -1;
  std::vector<IndexedSymbol> symbols;
  double probability = 0.0;  // effective
  std::size_t min_cost = infinite_cost;  // expansions below this node, excluding the lhs itself
  std::size_t max_cost = infinite_cost;
};

class PreparedGrammar {
 public:
  explicit PreparedGrammar(Grammar g) : grammar_(std::move(g)) {
    validate_grammar(grammar_);
    for (const auto& [name, alts] : grammar_.rules) {
      ids_.emplace(name, static_cast<int>(names_.size()));
      names_.push_back(name);
    }
    alts_of_.resize(names_.size());
    for (const auto& [name, alts] : grammar_.rules) {
      const int lhs = ids_.at(name);
      const auto probs = effective_probabilities(alts);
      for (std::size_t i = 0; i < alts.size(); ++i) {
        IndexedAlternative ia;
        ia.lhs = lhs;
        ia.probability = probs[i];
        for (const auto& s : alts[i].symbols) {
          IndexedSymbol is{s.kind, -1, s.text};
          if (s.is_nonterminal()) is.nonterminal = ids_.at(s.text);
          ia.symbols.push_back(std::move(is));
        }
        alts_of_[lhs].push_back(static_cast<int>(alts_.size()));
        alts_.push_back(std::move(ia));
      }
    }
    start_ = ids_.at(grammar_.start_symbol);
    compute_min_costs();
    compute_max_costs();
    compute_nullable();
  }

  const Grammar& grammar() const { return grammar_; }
  int start() const { return start_; }
  std::size_t nonterminal_count() const { return names_.size(); }
  const std::string& name(int nt) const { return names_[static_cast<std::size_t>(nt)]; }
  int id(const std::string& name) const { return ids_.at(name); }
  const std::vector<int>& alternatives_of(int nt) const { return alts_of_[static_cast<std::size_t>(nt)]; }
  const IndexedAlternative& alternative(int a) const { return alts_[static_cast<std::size_t>(a)]; }
  std::size_t alternative_count() const { return alts_.size(); }

  // Minimal number of expansions (including this one) to fully derive `nt`.
  std::size_t min_cost(int nt) const { return min_cost_[static_cast<std::size_t>(nt)]; }
  // Maximal number, or infinite_cost when `nt` can recurse.
  std::size_t max_cost(int nt) const { return max_cost_[static_cast<std::size_t>(nt)]; }
  bool nullable(int nt) const { return nullable_[static_cast<std::size_t>(nt)]; }

  // Position of `alt` among the alternatives of its lhs, in file order.
  std::size_t local_index(int alt) const {
    const auto& list = alts_of_[static_cast<std::size_t>(alts_[static_cast<std::size_t>(alt)].lhs)];
    return static_cast<std::size_t>(std::find(list.begin(), list.end(), alt) - list.begin());
  }

 private:
  static std::size_t sat_add(std::size_t a, std::size_t b) {
    return (a == infinite_cost || b == infinite_cost || a > infinite_cost - b) ? infinite_cost : a + b;
  }

  void compute_min_costs() {
    min_cost_.assign(names_.size(), infinite_cost);
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& alt : alts_) {
        std::size_t c = 0;
        for (const auto& s : alt.symbols) {
          if (s.kind == Symbol::Kind::nonterminal) c = sat_add(c, min_cost_[static_cast<std::size_t>(s.nonterminal)]);
        }
        alt.min_cost = c;
        const std::size_t total = sat_add(c, 1);
        auto& slot = min_cost_[static_cast<std::size_t>(alt.lhs)];
        if (total < slot) {
          slot = total;
          changed = true;
        }
      }
    }
  }

  // Only productive alternatives (finite min cost) contribute.
  void compute_max_costs() {
    max_cost_.assign(names_.size(), 0);
    std::vector<int> state(names_.size(), 0);  // 0 new, 1 on stack, 2 done
    for (std::size_t nt = 0; nt < names_.size(); ++nt) max_visit(static_cast<int>(nt), state);
    for (auto& alt : alts_) {
      if (alt.min_cost == infinite_cost) {
        alt.max_cost = 0;
        continue;
      }
      std::size_t c = 0;
      for (const auto& s : alt.symbols) {
        if (s.kind == Symbol::Kind::nonterminal) c = sat_add(c, max_cost_[static_cast<std::size_t>(s.nonterminal)]);
      }
      alt.max_cost = c;
    }
  }

  void max_visit(int nt, std::vector<int>& state) {
    auto& st = state[static_cast<std::size_t>(nt)];
    if (st == 2) return;
    if (st == 1) {
      max_cost_[static_cast<std::size_t>(nt)] = infinite_cost;
      return;
    }
    st = 1;
    std::size_t best = 0;
    bool inf = false;
    for (int a : alts_of_[static_cast<std::size_t>(nt)]) {
      const auto& alt = alts_[static_cast<std::size_t>(a)];
      if (alt.min_cost == infinite_cost) continue;
      std::size_t c = 1;
      for (const auto& s : alt.symbols) {
        if (s.kind != Symbol::Kind::nonterminal) continue;
        const auto child = static_cast<std::size_t>(s.nonterminal);
        if (state[child] == 1) {
          inf = true;
          continue;
        }
        max_visit(s.nonterminal, state);
        c = sat_add(c, max_cost_[child]);
      }
      best = std::max(best, c);
    }
    if (inf || max_cost_[static_cast<std::size_t>(nt)] == infinite_cost) best = infinite_cost;
    max_cost_[static_cast<std::size_t>(nt)] = best;
    st = 2;
  }

  void compute_nullable() {
    nullable_.assign(names_.size(), false);
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& alt : alts_) {
        if (nullable_[static_cast<std::size_t>(alt.lhs)]) continue;
        const bool all = std::all_of(alt.symbols.begin(), alt.symbols.end(), [&](const IndexedSymbol& s) {
          return s.kind == Symbol::Kind::nonterminal && nullable_[static_cast<std::size_t>(s.nonterminal)];
        });
        if (all) {
          nullable_[static_cast<std::size_t>(alt.lhs)] = true;
          changed = true;
        }
      }
    }
  }

  Grammar grammar_;
  std::map<std::string, int> ids_;
  std::vector<std::string> names_;
  std::vector<std::vector<int>> alts_of_;
  std::vector<IndexedAlternative> alts_;
  std::vector<std::size_t> min_cost_;
  std::vector<std::size_t> max_cost_;
  std::vector<bool> nullable_;
  int start_ = 0;
};

}  // namespace modelizer
