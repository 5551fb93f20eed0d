#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include <gtest/gtest.h>

#include "morphoglot/igt.hpp"
#include "morphoglot/synth.hpp"
#include "test_support.hpp"

namespace morphoglot {
namespace {

const char* kTsez =
    "\\t T'ay riƛ łu ragäλin\n"
    "\\m t'ay riƛ łu r-agi-a-λin\n"
    "\\g from.here butter who.ERG IV-lick-Q-QUOT\n"
    "\\l Who licked the butter out of it?\n";

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out(1);
  for (char c : s) {
    if (c == sep)
      out.emplace_back();
    else
      out.back() += c;
  }
  return out;
}

TEST(Morpheme, RejectsEmptyFieldsAndSeparator) {
  EXPECT_THROW(Morpheme("", "X"), std::invalid_argument);
  EXPECT_THROW(Morpheme("a", "  "), std::invalid_argument);
  EXPECT_THROW(Morpheme("a-b", "X"), std::invalid_argument);
  EXPECT_NE(Morpheme("a", "X"), Morpheme("a", "Y"));
}

TEST(ParseCorpus, TsezExample) {
  const Corpus c = test::parse_text(kTsez);
  ASSERT_EQ(c.size(), 1u);
  const auto& s = c.sentences[0];
  ASSERT_EQ(s.words.size(), 4u);
  EXPECT_EQ(s.words[3], "ragäλin");
  const WordAnalysis expected{{"r", "IV"}, {"agi", "lick"}, {"a", "Q"}, {"λin", "QUOT"}};
  EXPECT_EQ(s.word_analyses[3], expected);
  EXPECT_EQ(extract_word_morphemes(s, 3), expected);
  EXPECT_EQ(s.translation, "Who licked the butter out of it?");
  EXPECT_EQ(s.language, "test");
}

TEST(ParseCorpus, EmptyStream) {
  EXPECT_EQ(test::parse_text("").size(), 0u);
  EXPECT_EQ(test::parse_text("\n\n  \n").size(), 0u);
}

TEST(ParseCorpus, MisalignedWordIsRejectedWithLine) {
  const std::string text = "\\t abc\n\\m a-b-c\n\\g X-Y\n";
  try {
    test::parse_text(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream in(text + "\n" + kTsez);
  std::vector<ParseDiagnostic> rejected;
  const Corpus c = parse_corpus(in, "x", Split::train, &rejected);
  EXPECT_EQ(c.size(), 1u);
  ASSERT_EQ(rejected.size(), 1u);
}

TEST(ParseCorpus, CommentLinesAreIgnored) {
  const Corpus c = test::parse_text(std::string("# header\n# more\n\n") + kTsez);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.sentences[0].words.size(), 4u);
}

TEST(ParseCorpus, WriteThenParseRoundTrips) {
  const Corpus c = generate_corpus(SynthSpec::standard(4), 50);
  std::ostringstream out;
  write_corpus(out, c);
  std::istringstream in(out.str());
  const Corpus back = parse_corpus(in, c.sentences[0].language, c.split);
  EXPECT_EQ(back, c);
}

TEST(ExtractWordMorphemes, MonomorphemicWordIsSingleton) {
  const Corpus c = test::parse_text(kTsez);
  EXPECT_EQ(extract_word_morphemes(c.sentences[0], 1), (WordAnalysis{{"riƛ", "butter"}}));
}

TEST(ExtractWordMorphemes, LengthMatchesHyphenCountInBothTiers) {
  const Corpus c = generate_corpus(SynthSpec::standard(2), 200);
  std::ostringstream out;
  write_corpus(out, c);
  std::istringstream lines(out.str());
  std::vector<std::string> m_lines, g_lines;
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("\\m ", 0) == 0) m_lines.push_back(line.substr(3));
    if (line.rfind("\\g ", 0) == 0) g_lines.push_back(line.substr(3));
  }
  ASSERT_EQ(m_lines.size(), c.size());
  for (std::size_t s = 0; s < c.size(); ++s) {
    const auto m_words = split_on(m_lines[s], ' ');
    const auto g_words = split_on(g_lines[s], ' ');
    for (std::size_t w = 0; w < c.sentences[s].words.size(); ++w) {
      const auto n = extract_word_morphemes(c.sentences[s], w).size();
      EXPECT_EQ(n, static_cast<std::size_t>(std::count(m_words[w].begin(), m_words[w].end(), '-')) + 1);
      EXPECT_EQ(n, static_cast<std::size_t>(std::count(g_words[w].begin(), g_words[w].end(), '-')) + 1);
    }
  }
}

TEST(BagOfMorphemes, TsezWordHasFourMembers) {
  const Corpus c = test::parse_text(kTsez);
  const BagOfMorphemes bag = bag_of_morphemes(c.sentences[0], 3);
  EXPECT_EQ(bag, (BagOfMorphemes{{"r", "IV"}, {"agi", "lick"}, {"a", "Q"}, {"λin", "QUOT"}}));
}

TEST(BagOfMorphemes, DuplicatesCollapse) {
  const Corpus c = test::parse_text("\\t aa\n\\m a-a\n\\g X-X\n");
  EXPECT_EQ(bag_of_morphemes(c.sentences[0], 0).size(), 1u);
}

TEST(BagOfMorphemes, SizeMatchesSortDedupCount) {
  SynthSpec spec = SynthSpec::standard(9);
  spec.stem_count = 3;  // small inventories make repeats likely
  const Corpus c = generate_corpus(spec, 400);
  std::size_t checked = 0;
  for (const auto& s : c.sentences)
    for (std::size_t w = 0; w < s.words.size() && checked < 1000; ++w, ++checked) {
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& m : s.word_analyses[w]) pairs.emplace_back(m.segment, m.gloss);
      std::sort(pairs.begin(), pairs.end());
      pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
      EXPECT_EQ(bag_of_morphemes(s, w).size(), pairs.size());
    }
  EXPECT_EQ(checked, 1000u);
}

TEST(RenderWordPrompt, AllOptionsOn) {
  WordInContext w{"ab", "ab cd", std::string("hi"), PromptOptions{true, true, true}};
  EXPECT_EQ(render_word_prompt(w), "a b | Context: a b c d | Translation: hi");
}

TEST(RenderWordPrompt, WordOnly) {
  WordInContext w{"ab", "ab cd", std::string("hi"), PromptOptions{false, false, false}};
  EXPECT_EQ(render_word_prompt(w), "ab");
}

TEST(RenderWordPrompt, InjectiveOverSyntheticTriples) {
  const Corpus c = generate_corpus(SynthSpec::standard(5), 300);
  std::set<std::tuple<std::string, std::string, std::string>> triples;
  std::unordered_set<std::string> renders;
  for (const auto& s : c.sentences)
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      const auto wic = word_in_context(s, w, PromptOptions{});
      if (triples.emplace(wic.word, wic.transcript, wic.translation.value_or("")).second)
        EXPECT_TRUE(renders.insert(render_word_prompt(wic)).second) << render_word_prompt(wic);
    }
  EXPECT_EQ(triples.size(), renders.size());
}

TEST(RenderMorphemePrompt, SpacedAndSingleCharacter) {
  EXPECT_EQ(render_morpheme_prompt(Morpheme("λin", "QUOT"), true), "λ i n | Gloss: QUOT");
  EXPECT_EQ(render_morpheme_prompt(Morpheme("a", "Q"), true), "a | Gloss: Q");
}

TEST(RenderMorphemePrompt, DistinctMorphemesGiveDistinctPrompts) {
  const Corpus c = generate_corpus(SynthSpec::standard(6), 500);
  const auto morphemes = distinct_morphemes(c);
  for (bool spacing : {false, true}) {
    std::unordered_set<std::string> seen;
    for (const auto& m : morphemes) EXPECT_TRUE(seen.insert(render_morpheme_prompt(m, spacing)).second);
  }
}

TEST(WordInContext, WordIsATokenOfTranscript) {
  const Corpus c = test::parse_text(kTsez);
  const auto wic = word_in_context(c.sentences[0], 2, PromptOptions{});
  EXPECT_EQ(wic.word, "łu");
  EXPECT_EQ(wic.transcript, "T'ay riƛ łu ragäλin");
  EXPECT_THROW(word_in_context(c.sentences[0], 4, PromptOptions{}), std::out_of_range);
}

}  // namespace
}  // namespace morphoglot
