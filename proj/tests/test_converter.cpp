#include <gtest/gtest.h>

#include <string>

#include "modelizer/converter.hpp"
#include "modelizer/generator.hpp"
#include "test_support.hpp"

namespace modelizer {
namespace {

TEST(Converter, RuleTable) {
  EXPECT_EQ(builtin_convert("**TEXT_1**\n"), "<p><strong>TEXT_1</strong></p>\n");
  EXPECT_EQ(builtin_convert(""), "");
  EXPECT_EQ(builtin_convert("# TEXT_1\n"), "<h1>TEXT_1</h1>\n");
  EXPECT_EQ(builtin_convert("## TEXT_1\n"), "<h2>TEXT_1</h2>\n");
  EXPECT_EQ(builtin_convert("*a* _b_\n"), "<p><em>a</em> <em>b</em></p>\n");
  EXPECT_EQ(builtin_convert("`x*y`\n"), "<p><code>x*y</code></p>\n");
  EXPECT_EQ(builtin_convert("[TEXT_2](URL_1)\n"), "<p><a href=\"URL_1\">TEXT_2</a></p>\n");
  EXPECT_EQ(builtin_convert("a & b > c\n"), "<p>a &amp; b &gt; c</p>\n");
  EXPECT_EQ(builtin_convert("one\ntwo\n\nthree"), "<p>one\ntwo</p>\n<p>three</p>\n");
  EXPECT_EQ(builtin_convert("snake_case_word\n"), "<p>snake_case_word</p>\n");
}

TEST(Converter, WorkedExample) {
  EXPECT_EQ(builtin_convert("TEXT_1 [TEXT_2](URL_1) TEXT_3 **TEXT_4** TEXT_5 `TEXT_6` TEXT_7\n"),
            "<p>TEXT_1 <a href=\"URL_1\">TEXT_2</a> TEXT_3 <strong>TEXT_4</strong> TEXT_5 <code>TEXT_6</code> "
            "TEXT_7</p>\n");
}

TEST(Converter, RejectsUnsupportedMarkers) {
  for (const char* bad : {"> quote\n", "- item\n", "* item\n", "1. item\n", "```\ncode\n```\n", "| a |\n",
                          "<b>x</b>\n", "![a](b)\n", "~~s~~\n", "a \\* b\n", "**open\n", "[a](b\n", "####### h\n",
                          "#nospace\n", "**a *b* c**\n", " lead\n", "---\n"}) {
    EXPECT_THROW(builtin_convert(bad), ConversionError) << bad;
  }
  try {
    builtin_convert("ok\n\n**open\n");
    FAIL();
  } catch (const ConversionError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
}

TEST(Converter, AcceptsEveryGeneratedInput) {
  const auto& g = test_support::markdown_grammar();
  const std::vector<std::string> names{"TEXT", "URL"};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto s = augment_placeholders(tree_to_string(expand(g, seed, 10, 60)), names);
    EXPECT_NO_THROW(builtin_convert(s)) << s;
  }
}

}  // namespace
}  // namespace modelizer
