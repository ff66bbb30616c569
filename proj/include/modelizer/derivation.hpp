#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/grammar.hpp"
#include "modelizer/rng.hpp"

namespace modelizer {

struct DerivationTree {
  Symbol symbol;
  std::vector<DerivationTree> children;
  std::string text;       // produced text for terminal and placeholder leaves
  bool expanded = false;  // meaningful for non-terminals only

  friend bool operator==(const DerivationTree&, const DerivationTree&) = default;
};

namespace detail {

inline void append_leaves(const DerivationTree& t, std::string& out) {
  if (t.symbol.is_nonterminal()) {
    if (!t.expanded) throw IncompleteTree();
    for (const auto& c : t.children) append_leaves(c, out);
  } else {
    out += t.text;
  }
}

}  // namespace detail

inline std::string tree_to_string(const DerivationTree& t) {
  std::string out;
  detail::append_leaves(t, out);
  return out;
}

inline std::size_t expansion_count(const DerivationTree& t) {
  if (!t.symbol.is_nonterminal() || !t.expanded) return 0;
  std::size_t n = 1;
  for (const auto& c : t.children) n += expansion_count(c);
  return n;
}

// ---------------------------------------------------------------------------
// Budgeted random expansion.
//
// Keeps the running interval [used + sum(min_cost(open)), used + sum(max_cost(open))]
// of reachable final expansion counts and only picks alternatives that keep it
// intersecting [lo, hi]. Among admissible alternatives the pick is weighted by
// effective probability; once the budget is spent only minimal-cost
// alternatives stay admissible, which closes the tree.
// ---------------------------------------------------------------------------

class Expander {
 public:
  explicit Expander(const PreparedGrammar& g) : g_(g) {}

  DerivationTree expand(std::uint64_t seed, std::size_t lo, std::size_t hi) const {
    if (lo == 0 || lo > hi) throw Error("expansion bounds must satisfy 0 < min <= max", ErrorClass::usage);
    const int start = g_.start();
    if (g_.min_cost(start) > hi || g_.max_cost(start) < lo) throw BudgetInfeasible(lo, hi);
    Rng rng(seed);
    for (int restart = 0; restart < max_restarts; ++restart) {
      DerivationTree root{Symbol::nonterminal(g_.name(start)), {}, {}, false};
      if (try_expand(root, rng, lo, hi)) return root;
    }
    throw BudgetInfeasible(lo, hi);
  }

 private:
  static constexpr int max_restarts = 64;

  struct Open {
    DerivationTree* node;
    int nt;
  };

  // Interval bound bookkeeping where the upper end may be unbounded.
  struct Upper {
    std::size_t finite = 0;
    std::size_t unbounded = 0;
    void add(std::size_t c) {
      if (c == infinite_cost) {
        ++unbounded;
      } else {
        finite += c;
      }
    }
    void remove(std::size_t c) {
      if (c == infinite_cost) {
        --unbounded;
      } else {
        finite -= c;
      }
    }
  };

  bool try_expand(DerivationTree& root, Rng& rng, std::size_t lo, std::size_t hi) const {
    std::vector<Open> open{{&root, g_.start()}};
    std::size_t used = 0;
    std::size_t pending_min = g_.min_cost(g_.start());
    Upper pending_max;
    pending_max.add(g_.max_cost(g_.start()));

    std::vector<int> admissible;
    std::vector<double> weights;
    std::vector<std::size_t> order;
    while (!open.empty()) {
      // Random leaf order; fall through to the next leaf when the chosen one
      // has no admissible alternative.
      order.resize(open.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t first = rng.below(open.size());
      std::swap(order[0], order[first]);

      bool progressed = false;
      for (std::size_t slot : order) {
        const Open leaf = open[slot];
        const std::size_t leaf_min = g_.min_cost(leaf.nt);
        const std::size_t leaf_max = g_.max_cost(leaf.nt);
        const std::size_t base_min = used + 1 + pending_min - leaf_min;
        Upper base_max = pending_max;
        base_max.remove(leaf_max);

        admissible.clear();
        weights.clear();
        for (int a : g_.alternatives_of(leaf.nt)) {
          const auto& alt = g_.alternative(a);
          if (alt.min_cost == infinite_cost) continue;
          if (base_min + alt.min_cost > hi) continue;
          Upper m = base_max;
          m.add(alt.max_cost);
          if (m.unbounded == 0 && used + 1 + m.finite < lo) continue;
          admissible.push_back(a);
          weights.push_back(alt.probability);
        }
        if (admissible.empty()) continue;

        const int pick = admissible[weighted_pick(weights, rng)];
        const auto& alt = g_.alternative(pick);

        open[slot] = open.back();
        open.pop_back();
        used += 1;
        pending_min -= leaf_min;
        pending_max.remove(leaf_max);

        DerivationTree& node = *leaf.node;
        node.expanded = true;
        node.children.reserve(alt.symbols.size());
        for (const auto& s : alt.symbols) {
          DerivationTree child;
          switch (s.kind) {
            case Symbol::Kind::terminal:
              child.symbol = Symbol::terminal(s.text);
              child.text = s.text;
              break;
            case Symbol::Kind::placeholder:
              child.symbol = Symbol::placeholder(s.text);
              child.text = s.text;
              break;
            case Symbol::Kind::nonterminal:
              child.symbol = Symbol::nonterminal(s.text);
              break;
          }
          node.children.push_back(std::move(child));
        }
        for (std::size_t i = 0; i < alt.symbols.size(); ++i) {
          const auto& s = alt.symbols[i];
          if (s.kind != Symbol::Kind::nonterminal) continue;
          open.push_back({&node.children[i], s.nonterminal});
          pending_min += g_.min_cost(s.nonterminal);
          pending_max.add(g_.max_cost(s.nonterminal));
        }
        progressed = true;
        break;
      }
      if (!progressed) return false;
    }
    return used >= lo && used <= hi;
  }

  static std::size_t weighted_pick(const std::vector<double>& w, Rng& rng) {
    double total = 0.0;
    for (double x : w) total += x;
    if (total <= 0.0) return rng.below(w.size());
    double r = rng.uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (r < w[i]) return i;
      r -= w[i];
    }
    return w.size() - 1;
  }

  const PreparedGrammar& g_;
};

inline DerivationTree expand(const PreparedGrammar& g, std::uint64_t seed, std::size_t min_expansions,
                             std::size_t max_expansions) {
  return Expander(g).expand(seed, min_expansions, max_expansions);
}

inline DerivationTree expand(const Grammar& g, std::uint64_t seed, std::size_t min_expansions,
                             std::size_t max_expansions) {
  const PreparedGrammar prepared(g);
  return expand(prepared, seed, min_expansions, max_expansions);
}

}  // namespace modelizer
