#include <gtest/gtest.h>

#include <map>
#include <string>

#include "modelizer/derivation.hpp"
#include "modelizer/earley.hpp"
#include "modelizer/grammar.hpp"

namespace modelizer {
namespace {

const std::string kListingExample = "TEXT [TEXT](URL) TEXT **TEXT** TEXT `TEXT` TEXT\n";

Grammar markdown() { return load_grammar(MODELIZER_SOURCE_DIR "/grammars/markdown.bnf"); }

TEST(GrammarFormat, ParsesBundledMarkdownGrammar) {
  const Grammar g = markdown();
  EXPECT_EQ(g.start_symbol, "start");
  EXPECT_EQ(g.placeholders, (std::set<std::string>{"TEXT", "URL"}));
  EXPECT_NO_THROW(validate_grammar(g));
  ASSERT_EQ(g.rules.at("document").size(), 2u);
  EXPECT_DOUBLE_EQ(*g.rules.at("document")[0].probability, 0.6);
  EXPECT_FALSE(g.rules.at("document")[1].probability.has_value());
}

TEST(GrammarFormat, EmptyAlternativeAndEscapes) {
  const Grammar g = parse_grammar("<s> ::= \"a\\n\" <t>\n<t> ::= \"\" | \"\\\"\"\n");
  ASSERT_EQ(g.rules.at("t").size(), 2u);
  EXPECT_TRUE(g.rules.at("t")[0].symbols.empty());
  EXPECT_EQ(g.rules.at("t")[1].symbols[0].text, "\"");
  EXPECT_EQ(g.rules.at("s")[0].symbols[0].text, "a\n");
}

TEST(GrammarFormat, RejectsUndeclaredBareWord) {
  EXPECT_THROW(parse_grammar("<s> ::= WORD\n"), GrammarSyntaxError);
}

TEST(ValidateGrammar, UndefinedNonTerminal) {
  const Grammar g = parse_grammar("<S> ::= <A>\n");
  try {
    validate_grammar(g);
    FAIL() << "expected UndefinedNonTerminal";
  } catch (const UndefinedNonTerminal& e) {
    EXPECT_EQ(e.name(), "A");
  }
}

TEST(ValidateGrammar, ProbabilityOverflow) {
  const Grammar g = parse_grammar("<S> ::= \"a\" @p=0.7 | \"b\" @p=0.6\n");
  EXPECT_THROW(validate_grammar(g), ProbabilityOverflow);
}

TEST(ValidateGrammar, DanglingPlaceholder) {
  const Grammar g = parse_grammar("%placeholders: TEXT URL\n<S> ::= TEXT\n");
  try {
    validate_grammar(g);
    FAIL() << "expected DanglingPlaceholder";
  } catch (const DanglingPlaceholder& e) {
    EXPECT_EQ(e.name(), "URL");
  }
}

TEST(ValidateGrammar, RemainderSplitEqually) {
  const Grammar g = parse_grammar("<S> ::= \"a\" @p=0.5 | \"b\" | \"c\"\n");
  const auto p = effective_probabilities(g.rules.at("S"));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.25);
  EXPECT_DOUBLE_EQ(p[2], 0.25);
}

TEST(ValidateGrammar, CostsOfMarkdownGrammar) {
  const PreparedGrammar g(markdown());
  // start -> document -> block -> paragraph -> line -> text-start
  EXPECT_EQ(g.min_cost(g.id("start")), 6u);
  EXPECT_EQ(g.max_cost(g.id("start")), infinite_cost);
  EXPECT_EQ(g.min_cost(g.id("bold")), 1u);
  EXPECT_EQ(g.max_cost(g.id("element")), 2u);
}

TEST(Expand, SingleDerivation) {
  const Grammar g = parse_grammar("<S> ::= \"a\"\n");
  const auto t = expand(g, 7, 1, 1);
  EXPECT_EQ(tree_to_string(t), "a");
  EXPECT_EQ(expansion_count(t), 1u);
}

TEST(Expand, DeterministicForSeed) {
  const PreparedGrammar g(markdown());
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    EXPECT_EQ(expand(g, seed, 10, 20), expand(g, seed, 10, 20));
  }
  EXPECT_NE(tree_to_string(expand(g, 1, 10, 20)), tree_to_string(expand(g, 2, 10, 20)));
}

TEST(Expand, CountWithinBounds) {
  const PreparedGrammar md(markdown());
  const PreparedGrammar sql(load_grammar(MODELIZER_SOURCE_DIR "/grammars/sql.bnf"));
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{10, 20}, {30, 40}, {6, 6}}) {
      const auto t = expand(md, seed, lo, hi);
      const auto n = expansion_count(t);
      EXPECT_GE(n, lo);
      EXPECT_LE(n, hi);
    }
    const auto n = expansion_count(expand(sql, seed, 10, 20));
    EXPECT_GE(n, 10u);
    EXPECT_LE(n, 20u);
  }
}

TEST(Expand, InfeasibleBudget) {
  const Grammar g = parse_grammar("<S> ::= \"a\"\n");
  EXPECT_THROW(expand(g, 0, 2, 3), BudgetInfeasible);
  const PreparedGrammar md(markdown());
  EXPECT_THROW(expand(md, 0, 1, 5), BudgetInfeasible);
}

TEST(Expand, PlaceholderLeavesCarryBareNames) {
  const PreparedGrammar g(markdown());
  const std::string s = tree_to_string(expand(g, 3, 10, 20));
  EXPECT_EQ(s.find("TEXT_"), std::string::npos);
  EXPECT_NE(s.find("TEXT"), std::string::npos);
}

TEST(Expand, EmpiricalProbabilities) {
  const PreparedGrammar g(parse_grammar("<S> ::= \"a\" @p=0.9 | \"b\" @p=0.1\n"));
  std::map<std::string, int> counts;
  const int n = 20000;
  for (int seed = 0; seed < n; ++seed) ++counts[tree_to_string(expand(g, static_cast<std::uint64_t>(seed), 1, 1))];
  EXPECT_NEAR(counts["a"] / static_cast<double>(n), 0.9, 0.03);
  EXPECT_NEAR(counts["b"] / static_cast<double>(n), 0.1, 0.03);
}

TEST(TreeToString, EmptyExpansion) {
  const Grammar g = parse_grammar("<S> ::= \"\"\n");
  const auto t = expand(g, 0, 1, 1);
  EXPECT_EQ(tree_to_string(t), "");
  EXPECT_EQ(expansion_count(t), 1u);
}

TEST(TreeToString, IncompleteTree) {
  DerivationTree t{Symbol::nonterminal("S"), {}, {}, false};
  EXPECT_THROW(tree_to_string(t), IncompleteTree);
}

TEST(EarleyParse, ListingExampleRoundTrips) {
  const PreparedGrammar g(markdown());
  const auto t = earley_parse(g, kListingExample);
  EXPECT_EQ(tree_to_string(t), kListingExample);
  // start, document, block, paragraph, line, 4 x text-start, 3 x (elem-start, element, link|bold|code)
  EXPECT_EQ(expansion_count(t), 18u);
}

TEST(EarleyParse, BoldFragment) {
  const PreparedGrammar g(markdown());
  const auto t = earley_parse(g, "**TEXT**", "bold");
  EXPECT_EQ(t.symbol.text, "bold");
  EXPECT_EQ(tree_to_string(t), "**TEXT**");

  // Within a document the bold text sits under an element node.
  const auto doc = earley_parse(g, "**TEXT**\n");
  const DerivationTree* node = &doc;
  while (node->symbol.text != "element") {
    ASSERT_FALSE(node->children.empty());
    node = &node->children.front();
  }
  EXPECT_EQ(node->children.front().symbol.text, "bold");
}

TEST(EarleyParse, RejectsForeignInput) {
  const PreparedGrammar g(markdown());
  try {
    earley_parse(g, "<<<");
    FAIL() << "expected ParseFailure";
  } catch (const ParseFailure& e) {
    EXPECT_EQ(e.position(), 0u);
  }
  try {
    earley_parse(g, "TEXT **TEXT\n");
    FAIL() << "expected ParseFailure";
  } catch (const ParseFailure& e) {
    EXPECT_EQ(e.position(), 11u);
  }
}

TEST(EarleyParse, FirstListedAlternativeWinsOnAmbiguity) {
  const PreparedGrammar g(parse_grammar("<S> ::= <A> | <B>\n<A> ::= \"x\"\n<B> ::= \"x\"\n"));
  const auto t = earley_parse(g, "x");
  EXPECT_EQ(t.children.front().symbol.text, "A");
}

TEST(EarleyParse, NullableAndAugmentedPlaceholders) {
  const PreparedGrammar g(
      parse_grammar("%placeholders: T\n<S> ::= <E> T <E> \"!\"\n<E> ::= \"\" | \"-\" <E>\n"));
  EXPECT_EQ(tree_to_string(earley_parse(g, "T!")), "T!");
  EXPECT_EQ(tree_to_string(earley_parse(g, "--T_12-!")), "--T_12-!");
}

TEST(EarleyParse, DualityOnGeneratedInputs) {
  const PreparedGrammar g(markdown());
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::string s = tree_to_string(expand(g, seed, 10, 20));
    EXPECT_EQ(tree_to_string(earley_parse(g, s)), s);
  }
}

}  // namespace
}  // namespace modelizer
