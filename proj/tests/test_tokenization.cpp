#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "modelizer/converter.hpp"
#include "modelizer/generator.hpp"
#include "modelizer/rng.hpp"
#include "modelizer/subword.hpp"
#include "modelizer/tokenizer.hpp"
#include "modelizer/vocabulary.hpp"
#include "test_support.hpp"

namespace modelizer {
namespace {

using Entries = std::vector<std::pair<std::string, std::string>>;

const std::string foobar = "<h1>Foobar</h1><p>Foobar is a <em>Python</em> library</p>";
const std::string foobar_extended =
    "<h1>Foobar</h1><p>Foobar is a <em>Python</em> library. Find more on <a href=\"127.0.0.1\"><i>Foobar</i>.com</a></p>";

TEST(HtmlTokenize, WorkedExample) {
  const auto r = mapped_tokenize(foobar, Format::html, MaskPolicy::optimizing);
  EXPECT_EQ(r.tokens, (TokenSequence{"<h1>", "TEXT_1", "</h1>", "<p>", "TEXT_2", "<em>", "TEXT_3", "</em>", "TEXT_4",
                                     "</p>"}));
  EXPECT_EQ(r.map.entries(),
            (Entries{{"TEXT_1", "Foobar"}, {"TEXT_2", "Foobar is a"}, {"TEXT_3", "Python"}, {"TEXT_4", "library"}}));
}

TEST(HtmlTokenize, ReconstructWithAndWithoutMap) {
  const auto r = mapped_tokenize(foobar, Format::html);
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::html), foobar);
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::html, Instantiation::late), foobar);
  EXPECT_EQ(reconstruct(r.tokens, nullptr, Format::html), "<h1>TEXT_1</h1><p>TEXT_2<em>TEXT_3</em>TEXT_4</p>");
  EXPECT_EQ(reconstruct({}, nullptr, Format::html), "");
  EXPECT_EQ(reconstruct({}, r.map, Format::html), "");
}

TEST(HtmlTokenize, MaskingPolicies) {
  const auto simplified = mapped_tokenize(foobar_extended, Format::html, MaskPolicy::simplified);
  EXPECT_EQ(simplified.tokens,
            (TokenSequence{"<h1>", "TEXT", "</h1>", "<p>", "TEXT", "<em>", "TEXT", "</em>", "TEXT", "<a",
                           "href=\"URL\">", "<i>", "TEXT", "</i>", "TEXT", "</a>", "</p>"}));
  const auto optimizing = mapped_tokenize(foobar_extended, Format::html, MaskPolicy::optimizing);
  EXPECT_EQ(optimizing.tokens,
            (TokenSequence{"<h1>", "TEXT_1", "</h1>", "<p>", "TEXT_2", "<em>", "TEXT_3", "</em>", "TEXT_4", "<a",
                           "href=\"URL_1\">", "<i>", "TEXT_1", "</i>", "TEXT_5", "</a>", "</p>"}));
  EXPECT_EQ(optimizing.map.lookup("URL_1"), "127.0.0.1");
  EXPECT_EQ(optimizing.map.lookup("TEXT_5"), ".com");
  const auto exhaustive = mapped_tokenize(foobar_extended, Format::html, MaskPolicy::exhaustive);
  EXPECT_EQ(exhaustive.tokens,
            (TokenSequence{"<h1>", "TEXT_1", "</h1>", "<p>", "TEXT_2", "<em>", "TEXT_3", "</em>", "TEXT_4", "<a",
                           "href=\"URL_1\">", "<i>", "TEXT_5", "</i>", "TEXT_6", "</a>", "</p>"}));
  EXPECT_EQ(exhaustive.map.size(), 7u);
  for (const auto* r : {&simplified, &optimizing, &exhaustive}) {
    EXPECT_EQ(reconstruct(r->tokens, r->map, Format::html), foobar_extended);
    EXPECT_EQ(reconstruct(r->tokens, r->map, Format::html, Instantiation::late), foobar_extended);
  }
}

TEST(HtmlTokenize, AttributesSurviveOnlyInLayout) {
  const std::string doc = "<P class=\"x\">a <a id='k' href='u?q=1' title=\"t\">b</a><br/></P>\n";
  const auto r = mapped_tokenize(doc, Format::html);
  EXPECT_EQ(r.tokens, (TokenSequence{"<p>", "TEXT_1", "<a", "href=\"URL_1\">", "TEXT_2", "</a>", "<br>", "</p>",
                                     "\n"}));
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::html), doc);
  EXPECT_EQ(reconstruct(r.tokens, r.map.content_only(), Format::html),
            "<p>a<a href=\"u?q=1\">b</a><br></p>\n");
}

TEST(HtmlTokenize, BlockLineBreaksAreTokens) {
  const auto r = mapped_tokenize("<h1>A</h1>\n<p>B\nC</p>\n", Format::html);
  EXPECT_EQ(r.tokens, (TokenSequence{"<h1>", "TEXT_1", "</h1>", "\n", "<p>", "TEXT_2", "</p>", "\n"}));
  EXPECT_EQ(reconstruct(r.tokens, nullptr, Format::html), "<h1>TEXT_1</h1>\n<p>TEXT_2</p>\n");
}

TEST(HtmlTokenize, Failures) {
  for (const char* bad : {"<div>x</div>", "<p>x", "<p>x</em>", "</p>", "<!-- c -->", "<p>a > b</p>", "<p class=\"x>a</p>",
                          "<a href=x>y</a>"}) {
    EXPECT_THROW(mapped_tokenize(bad, Format::html), TokenizeFailure) << bad;
  }
  try {
    mapped_tokenize("<p>ok</p><table>", Format::html);
    FAIL();
  } catch (const TokenizeFailure& e) {
    EXPECT_EQ(e.position(), 9u);
  }
}

TEST(MarkdownTokenize, StructuralMarkers) {
  const std::string doc = "# TEXT_1\n\nTEXT_2 _TEXT_3_ [TEXT_4](URL_1) **TEXT_5** `TEXT_6` *TEXT_7*\n";
  const auto r = mapped_tokenize(doc, Format::markdown);
  EXPECT_EQ(r.tokens, (TokenSequence{"#", "TEXT_1", "\n", "\n", "TEXT_2", "_", "TEXT_3", "_", "[", "TEXT_4", "](",
                                     "URL_1", ")", "**", "TEXT_5", "**", "`", "TEXT_6", "`", "*", "TEXT_7", "*", "\n"}));
  EXPECT_EQ(r.map.lookup("TEXT_3"), "TEXT_3");
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::markdown), doc);
  // the canonical join reproduces generator output without any layout
  EXPECT_EQ(reconstruct(r.tokens, nullptr, Format::markdown), doc);
}

TEST(MarkdownTokenize, RealContent) {
  const std::string doc = "## Foobar\n\nFoobar is a *Python* library, see [docs](http://x.org/a_b) or `pip  install`\n";
  const auto r = mapped_tokenize(doc, Format::markdown);
  EXPECT_EQ(r.tokens, (TokenSequence{"##", "TEXT_1", "\n", "\n", "TEXT_2", "*", "TEXT_3", "*", "TEXT_4", "[", "TEXT_5",
                                     "](", "URL_1", ")", "TEXT_6", "`", "TEXT_7", "`", "\n"}));
  EXPECT_EQ(r.map.lookup("TEXT_4"), "library, see");
  EXPECT_EQ(r.map.lookup("TEXT_7"), "pip  install");
  EXPECT_EQ(r.map.lookup("URL_1"), "http://x.org/a_b");
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::markdown), doc);
  EXPECT_EQ(reconstruct(r.tokens, r.map, Format::markdown, Instantiation::late), doc);
}

TEST(MarkdownTokenize, Failures) {
  for (const char* bad : {"> q\n", "- a\n", "1. a\n", "```\n", "a <b> c\n", "[a](b\n", "[a\n", "a ] b\n", "`a\n",
                          "#x\n", "####### x\n"}) {
    EXPECT_THROW(mapped_tokenize(bad, Format::markdown), TokenizeFailure) << bad;
  }
}

TEST(Tokenize, FreshIdsSkipIdsInDocument) {
  const auto r = mapped_tokenize("<p>Foo <em>TEXT_1</em></p>", Format::html);
  EXPECT_EQ(r.tokens, (TokenSequence{"<p>", "TEXT_2", "<em>", "TEXT_1", "</em>", "</p>"}));
  EXPECT_EQ(r.map.lookup("TEXT_2"), "Foo");
  EXPECT_EQ(r.map.lookup("TEXT_1"), "TEXT_1");
}

TEST(Reconstruct, UnboundPlaceholders) {
  const auto r = mapped_tokenize("<p>a</p>", Format::html);
  EXPECT_THROW(reconstruct({"<p>", "TEXT_9", "</p>"}, r.map, Format::html), UnboundPlaceholder);
  const auto s = mapped_tokenize("<p>a</p>", Format::html, MaskPolicy::simplified);
  EXPECT_EQ(reconstruct({"<p>", "TEXT", "</p>"}, s.map.content_only(), Format::html), "<p>a</p>");
  EXPECT_THROW(reconstruct({"<p>", "TEXT", "TEXT", "</p>"}, s.map, Format::html), UnboundPlaceholder);
}

TEST(Reconstruct, SimplifiedIsFifo) {
  const auto s = mapped_tokenize("<p>a<em>b</em>c</p>", Format::html, MaskPolicy::simplified);
  EXPECT_EQ(s.map.occurrences(), (Entries{{"TEXT", "a"}, {"TEXT", "b"}, {"TEXT", "c"}}));
  EXPECT_EQ(reconstruct({"<em>", "TEXT", "</em>", "TEXT"}, s.map.content_only(), Format::html), "<em>a</em>b");
}

TEST(Reconstruct, CrossFormatInstantiation) {
  // forward deployment: map from Markdown input, tokens of an HTML output
  const auto in = mapped_tokenize("Foobar is **great**\n", Format::markdown);
  const auto html = reconstruct({"<p>", "TEXT_1", "<strong>", "TEXT_2", "</strong>", "</p>"}, in.map.content_only(),
                                Format::html);
  EXPECT_EQ(html, "<p>Foobar is<strong>great</strong></p>");
  EXPECT_EQ(reconstruct({"<p>", "TEXT_1", "<strong>", "TEXT_2", "</strong>", "</p>"}, in.map.content_only(), Format::html,
                        Instantiation::late),
            html);
}

struct Corpus {
  std::vector<std::string> markdown;
  std::vector<std::string> html;
};

const Corpus& generated_corpus() {
  static const Corpus c = [] {
    Corpus c;
    HashStore store;
    GeneratorConfig cfg;
    cfg.master_seed = 99;
    for (auto& s : synthesize_unique(test_support::markdown_grammar(), cfg, 1000, store)) {
      c.html.push_back(builtin_convert(s));
      c.markdown.push_back(std::move(s));
    }
    return c;
  }();
  return c;
}

TEST(Tokenize, RoundTripOnGeneratedDocuments) {
  for (auto policy : {MaskPolicy::simplified, MaskPolicy::optimizing, MaskPolicy::exhaustive}) {
    for (auto format : {Format::markdown, Format::html}) {
      const auto& docs = format == Format::markdown ? generated_corpus().markdown : generated_corpus().html;
      for (const auto& d : docs) {
        const auto r = mapped_tokenize(d, format, policy);
        ASSERT_EQ(reconstruct(r.tokens, r.map, format), d);
        ASSERT_EQ(reconstruct(r.tokens, r.map, format, Instantiation::late), d);
        for (const auto& t : r.tokens) ASSERT_FALSE(t.empty());
      }
    }
  }
}

TEST(Tokenize, GeneratedMarkdownNeedsNoLayout) {
  for (const auto& d : generated_corpus().markdown) {
    const auto r = mapped_tokenize(d, Format::markdown);
    ASSERT_EQ(reconstruct(r.tokens, nullptr, Format::markdown), d);
  }
}

std::set<std::string> vocab_of(const std::vector<std::string>& docs, Format f, MaskPolicy p) {
  std::set<std::string> v;
  for (const auto& d : docs) {
    for (auto& t : mapped_tokenize(d, f, p).tokens) v.insert(t);
  }
  return v;
}

// Real-content documents: distinct words give distinct content fragments.
std::vector<std::string> real_content_docs() {
  Rng rng(4);
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta"};
  std::vector<std::string> docs;
  for (int i = 0; i < 200; ++i) {
    std::string d = "<h1>" + words[rng.below(4)] + "</h1><p>";
    const auto n = 1 + rng.below(5);
    for (std::uint64_t k = 0; k < n; ++k) {
      d += words[rng.below(4)];
      if (rng.below(2)) d += " <em>" + words[rng.below(4)] + "</em> ";
      if (rng.below(3) == 0) d += "<a href=\"" + words[rng.below(4)] + ".org\">" + words[rng.below(4)] + "</a> ";
    }
    docs.push_back(d + "</p>");
  }
  return docs;
}

TEST(Tokenize, PolicyVocabularyOrdering) {
  const auto docs = real_content_docs();
  const auto s = vocab_of(docs, Format::html, MaskPolicy::simplified);
  const auto o = vocab_of(docs, Format::html, MaskPolicy::optimizing);
  const auto e = vocab_of(docs, Format::html, MaskPolicy::exhaustive);
  EXPECT_TRUE(std::includes(e.begin(), e.end(), o.begin(), o.end()));
  EXPECT_LT(s.size(), o.size());
  // SIMPLIFIED only differs by dropping identifiers
  std::set<std::string> stripped;
  for (const auto& t : o) stripped.insert(strip_placeholder_ids(t, {"TEXT", "URL"}));
  EXPECT_EQ(s, stripped);
}

TEST(Tokenize, OptimizingReuseAndExhaustiveFreshness) {
  for (const auto& d : real_content_docs()) {
    const auto o = mapped_tokenize(d, Format::html, MaskPolicy::optimizing);
    std::set<std::string> contents;
    for (const auto& [k, v] : o.map.entries()) EXPECT_TRUE(contents.insert(k.substr(0, 4) + v).second);
    const auto e = mapped_tokenize(d, Format::html, MaskPolicy::exhaustive);
    const auto s = mapped_tokenize(d, Format::html, MaskPolicy::simplified);
    EXPECT_EQ(e.map.size(), s.map.occurrences().size());
  }
}

TEST(Tokenize, EveryStructuralMarkerIsOneToken) {
  for (const auto& d : generated_corpus().html) {
    const auto r = mapped_tokenize(d, Format::html);
    std::size_t tags = 0;
    for (char c : d) tags += c == '<';
    std::size_t tag_tokens = 0;
    for (const auto& t : r.tokens) tag_tokens += t[0] == '<';
    ASSERT_EQ(tags, tag_tokens) << d;
  }
}

TEST(Vocabulary, FrequencyOrder) {
  const auto v = build_vocabulary({{"a", "b"}, {"b"}});
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<PAD>", "<BOS>", "<EOS>", "<UNK>", "b", "a"}));
  EXPECT_EQ(v.id("zzz"), unk_id);
  EXPECT_EQ(v.id("b"), 4);
  EXPECT_THROW(build_vocabulary({}), EmptyCorpus);
  const auto w = build_vocabulary({{"c", "a", "b"}});
  EXPECT_EQ(w.tokens()[4], "a");
  EXPECT_EQ(w.tokens()[6], "c");
}

TEST(Vocabulary, FileRoundTrip) {
  const auto v = build_vocabulary({{"\n", "a\\b", "#", "href=\"URL_1\">"}, {"\n"}});
  const auto path = (std::filesystem::temp_directory_path() / "modelizer_vocab_test.txt").string();
  save_vocabulary(v, path);
  EXPECT_EQ(load_vocabulary(path), v);
  std::ifstream in(path);
  std::string line;
  for (int i = 0; i < 5; ++i) std::getline(in, line);
  EXPECT_EQ(line, "\\n");
  std::filesystem::remove(path);
}

TEST(Vocabulary, GeneratedMarkdownCorpusSize) {
  std::vector<TokenSequence> corpus;
  std::set<std::string> distinct;
  for (const auto& d : generated_corpus().markdown) {
    corpus.push_back(mapped_tokenize(d, Format::markdown).tokens);
    distinct.insert(corpus.back().begin(), corpus.back().end());
  }
  const auto v = build_vocabulary(corpus);
  EXPECT_EQ(v.size(), distinct.size() + reserved_count);
}

TEST(Subword, MostFrequentPairFirst) {
  const auto t = subword_train({"aaab", "aaab"}, 260);
  ASSERT_FALSE(t.merges().empty());
  EXPECT_EQ(t.merges()[0], (SubwordTokenizer::Merge{"a", "a"}));
  EXPECT_THROW(subword_train({"a", "b"}, 300), CorpusTooSmall);
  EXPECT_THROW(subword_train({"ab"}, 256), ConfigInvalid);
}

TEST(Subword, LosslessAndDeterministic) {
  const auto& docs = generated_corpus().markdown;
  const auto t = subword_train(docs, 400);
  EXPECT_EQ(t.vocab_size(), 400u);
  const auto again = subword_train(docs, 400);
  EXPECT_EQ(t.merges(), again.merges());
  for (const auto& d : docs) {
    const auto pieces = t.segment(d);
    ASSERT_EQ(SubwordTokenizer::join(pieces), d);
    EXPECT_LT(pieces.size(), d.size());
  }
  const std::string odd = "\x01\xff unseen \t\n bytes";
  EXPECT_EQ(SubwordTokenizer::join(t.segment(odd)), odd);

  const auto path = (std::filesystem::temp_directory_path() / "modelizer_merges_test.txt").string();
  save_merges(t, path);
  EXPECT_EQ(load_merges(path).merges(), t.merges());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace modelizer
