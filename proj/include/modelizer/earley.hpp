#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "modelizer/derivation.hpp"
#include "modelizer/errors.hpp"
#include "modelizer/grammar.hpp"

namespace modelizer {

// Earley recognizer over characters with multi-character terminals, plus a
// tree builder that walks completed items. Placeholders match their bare name
// or the augmented NAME_k form. Nullable non-terminals are handled by advancing
// over them at prediction time.
//
// Ambiguity: the builder tries alternatives in file order and split points
// from the left, so the first-listed alternative that yields a complete tree
// wins.
class EarleyParser {
 public:
  explicit EarleyParser(const PreparedGrammar& g) : g_(g) {}

  // `start` overrides the grammar's start symbol, e.g. to parse a fragment.
  DerivationTree parse(std::string_view input, std::optional<int> start_override = std::nullopt) const {
    const int start = start_override.value_or(g_.start());
    Chart chart = recognize(input, start);
    const std::size_t n = input.size();
    bool accepted = false;
    for (int a : g_.alternatives_of(start)) {
      if (chart.completed(n, a, 0)) accepted = true;
    }
    if (!accepted) throw ParseFailure(chart.furthest);

    Builder b{g_, input, chart, {}, {}};
    auto tree = b.build(start, 0, n);
    if (!tree) throw ParseFailure(chart.furthest);
    return std::move(*tree);
  }

  bool accepts(std::string_view input) const {
    try {
      parse(input);
      return true;
    } catch (const ParseFailure&) {
      return false;
    }
  }

 private:
  struct Item {
    int alt;
    int dot;
    std::size_t origin;
  };

  static std::uint64_t key(int alt, int dot, std::size_t origin) {
    return (static_cast<std::uint64_t>(alt) << 40) ^ (static_cast<std::uint64_t>(dot) << 32) ^
           static_cast<std::uint64_t>(origin);
  }

  struct Chart {
    std::vector<std::vector<Item>> sets;
    std::vector<std::unordered_set<std::uint64_t>> seen;
    // completed[k] holds (alt, origin) for items finished at k
    std::vector<std::unordered_set<std::uint64_t>> done;
    std::size_t furthest = 0;

    bool add(std::size_t k, Item it) {
      if (!seen[k].insert(key(it.alt, it.dot, it.origin)).second) return false;
      sets[k].push_back(it);
      return true;
    }
    bool completed(std::size_t k, int alt, std::size_t origin) const {
      return done[k].count(key(alt, 0, origin)) != 0;
    }
  };

  static std::vector<std::size_t> placeholder_matches(std::string_view input, std::size_t k, const std::string& name) {
    std::vector<std::size_t> lengths;
    if (input.substr(k, name.size()) != name) return lengths;
    lengths.push_back(name.size());
    std::size_t j = k + name.size();
    if (j < input.size() && input[j] == '_') {
      std::size_t d = j + 1;
      while (d < input.size() && std::isdigit(static_cast<unsigned char>(input[d]))) ++d;
      if (d > j + 1) lengths.push_back(d - k);
    }
    return lengths;
  }

  Chart recognize(std::string_view input, int start) const {
    const std::size_t n = input.size();
    Chart c;
    c.sets.resize(n + 1);
    c.seen.resize(n + 1);
    c.done.resize(n + 1);
    for (int a : g_.alternatives_of(start)) c.add(0, {a, 0, 0});

    for (std::size_t k = 0; k <= n; ++k) {
      if (!c.sets[k].empty()) c.furthest = k;
      for (std::size_t i = 0; i < c.sets[k].size(); ++i) {
        const Item it = c.sets[k][i];
        const auto& alt = g_.alternative(it.alt);
        if (it.dot == static_cast<int>(alt.symbols.size())) {
          c.done[k].insert(key(it.alt, 0, it.origin));
          // complete
          const int lhs = alt.lhs;
          const auto& origin_set = c.sets[it.origin];
          for (std::size_t j = 0; j < origin_set.size(); ++j) {
            const Item w = origin_set[j];
            const auto& wa = g_.alternative(w.alt);
            if (w.dot < static_cast<int>(wa.symbols.size()) &&
                wa.symbols[static_cast<std::size_t>(w.dot)].nonterminal == lhs) {
              c.add(k, {w.alt, w.dot + 1, w.origin});
            }
          }
          continue;
        }
        const auto& sym = alt.symbols[static_cast<std::size_t>(it.dot)];
        switch (sym.kind) {
          case Symbol::Kind::nonterminal:
            for (int a : g_.alternatives_of(sym.nonterminal)) c.add(k, {a, 0, k});
            if (g_.nullable(sym.nonterminal)) c.add(k, {it.alt, it.dot + 1, it.origin});
            break;
          case Symbol::Kind::terminal:
            if (input.substr(k, sym.text.size()) == sym.text) {
              c.add(k + sym.text.size(), {it.alt, it.dot + 1, it.origin});
            }
            break;
          case Symbol::Kind::placeholder:
            for (std::size_t len : placeholder_matches(input, k, sym.text)) {
              c.add(k + len, {it.alt, it.dot + 1, it.origin});
            }
            break;
        }
      }
    }
    return c;
  }

  struct Builder {
    const PreparedGrammar& g;
    std::string_view input;
    const Chart& chart;
    std::unordered_set<std::uint64_t> active;  // (nt, from, to) on the recursion stack
    std::unordered_map<std::uint64_t, bool> reach_memo;

    static std::uint64_t span_key(int nt, std::size_t from, std::size_t to) {
      return (static_cast<std::uint64_t>(nt) << 48) ^ (static_cast<std::uint64_t>(from) << 24) ^
             static_cast<std::uint64_t>(to);
    }

    bool nt_spans(int nt, std::size_t from, std::size_t to) const {
      for (int a : g.alternatives_of(nt)) {
        if (chart.completed(to, a, from)) return true;
      }
      return false;
    }

    // Can symbols [s, end) of `alt` derive input[p, to)?
    bool reachable(int alt, std::size_t s, std::size_t p, std::size_t to) {
      const auto& syms = g.alternative(alt).symbols;
      if (s == syms.size()) return p == to;
      const std::uint64_t k = (static_cast<std::uint64_t>(alt) << 44) ^ (static_cast<std::uint64_t>(s) << 36) ^
                              (static_cast<std::uint64_t>(p) << 18) ^ static_cast<std::uint64_t>(to);
      if (auto it = reach_memo.find(k); it != reach_memo.end()) return it->second;
      bool ok = false;
      const auto& sym = syms[s];
      switch (sym.kind) {
        case Symbol::Kind::terminal:
          ok = input.substr(p, sym.text.size()) == sym.text && reachable(alt, s + 1, p + sym.text.size(), to);
          break;
        case Symbol::Kind::placeholder:
          for (std::size_t len : placeholder_matches(input, p, sym.text)) {
            if (p + len <= to && reachable(alt, s + 1, p + len, to)) {
              ok = true;
              break;
            }
          }
          break;
        case Symbol::Kind::nonterminal:
          for (std::size_t q = p; q <= to && !ok; ++q) {
            ok = nt_spans(sym.nonterminal, p, q) && reachable(alt, s + 1, q, to);
          }
          break;
      }
      reach_memo[k] = ok;
      return ok;
    }

    std::optional<DerivationTree> build(int nt, std::size_t from, std::size_t to) {
      const auto sk = span_key(nt, from, to);
      if (active.count(sk)) return std::nullopt;
      active.insert(sk);
      std::optional<DerivationTree> result;
      for (int a : g.alternatives_of(nt)) {
        if (!chart.completed(to, a, from)) continue;
        DerivationTree node{Symbol::nonterminal(g.name(nt)), {}, {}, true};
        if (fill(a, 0, from, to, node)) {
          result = std::move(node);
          break;
        }
      }
      active.erase(sk);
      return result;
    }

    bool fill(int alt, std::size_t s, std::size_t p, std::size_t to, DerivationTree& node) {
      const auto& syms = g.alternative(alt).symbols;
      if (s == syms.size()) return p == to;
      const auto& sym = syms[s];
      switch (sym.kind) {
        case Symbol::Kind::terminal: {
          if (input.substr(p, sym.text.size()) != sym.text) return false;
          node.children.push_back({Symbol::terminal(sym.text), {}, sym.text, false});
          if (fill(alt, s + 1, p + sym.text.size(), to, node)) return true;
          node.children.pop_back();
          return false;
        }
        case Symbol::Kind::placeholder: {
          for (std::size_t len : placeholder_matches(input, p, sym.text)) {
            if (p + len > to || !reachable(alt, s + 1, p + len, to)) continue;
            node.children.push_back({Symbol::placeholder(sym.text), {}, std::string(input.substr(p, len)), false});
            if (fill(alt, s + 1, p + len, to, node)) return true;
            node.children.pop_back();
          }
          return false;
        }
        case Symbol::Kind::nonterminal: {
          for (std::size_t q = p; q <= to; ++q) {
            if (!nt_spans(sym.nonterminal, p, q) || !reachable(alt, s + 1, q, to)) continue;
            auto child = build(sym.nonterminal, p, q);
            if (!child) continue;
            node.children.push_back(std::move(*child));
            if (fill(alt, s + 1, q, to, node)) return true;
            node.children.pop_back();
          }
          return false;
        }
      }
      return false;
    }
  };

  const PreparedGrammar& g_;
};

inline DerivationTree earley_parse(const PreparedGrammar& g, std::string_view input) {
  return EarleyParser(g).parse(input);
}

inline DerivationTree earley_parse(const Grammar& g, std::string_view input) {
  const PreparedGrammar prepared(g);
  return earley_parse(prepared, input);
}

inline DerivationTree earley_parse(const PreparedGrammar& g, std::string_view input, const std::string& start) {
  return EarleyParser(g).parse(input, g.id(start));
}

}  // namespace modelizer
