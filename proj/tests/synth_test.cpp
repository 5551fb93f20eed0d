#include <sstream>

#include <gtest/gtest.h>

#include "morphoglot/metrics.hpp"
#include "morphoglot/synth.hpp"

namespace morphoglot {
namespace {

std::string rendered(const Corpus& c) {
  std::ostringstream out;
  write_corpus(out, c);
  return out.str();
}

std::set<Morpheme> keys_of(const Corpus& c) {
  std::set<Morpheme> keys;
  for (const auto& s : c.sentences)
    for (const auto& a : s.word_analyses) keys.insert(a.begin(), a.end());
  return keys;
}

TEST(GenerateCorpus, SameSeedIsByteIdentical) {
  const auto spec = SynthSpec::standard(17);
  EXPECT_EQ(rendered(generate_corpus(spec, 100)), rendered(generate_corpus(spec, 100)));
  EXPECT_NE(rendered(generate_corpus(spec, 100)), rendered(generate_corpus(SynthSpec::standard(18), 100)));
}

TEST(GenerateCorpus, ZeroSentences) { EXPECT_TRUE(generate_corpus(SynthSpec::standard(), 0).empty()); }

TEST(GenerateCorpus, FullOccupancyGivesThreeMorphemesPerWord) {
  auto spec = SynthSpec::standard(3);
  for (auto& slot : spec.slots) slot.occupancy = 1.0;
  const Corpus c = generate_corpus(spec, 300);
  std::size_t words = 0;
  for (const auto& s : c.sentences)
    for (const auto& a : s.word_analyses) {
      EXPECT_EQ(a.size(), 3u);
      ++words;
    }
  EXPECT_GT(words, 0u);
}

TEST(GenerateCorpus, StandardLanguageShape) {
  const auto spec = SynthSpec::standard(1);
  const SynthLanguage lang = build_language(spec);
  EXPECT_EQ(lang.stems.size(), 50u);
  ASSERT_EQ(lang.slots.size(), 2u);
  std::set<Morpheme> all(lang.stems.begin(), lang.stems.end());
  for (const auto& slot : lang.slots) {
    EXPECT_EQ(slot.affixes.size(), 4u);
    all.insert(slot.affixes.begin(), slot.affixes.end());
  }
  EXPECT_EQ(all.size(), 58u);
  const Corpus c = generate_corpus(spec, 50);
  for (const auto& s : c.sentences)
    for (std::size_t w = 0; w < s.words.size(); ++w)
      EXPECT_EQ(s.words[w], lang.surface(s.word_analyses[w]));
}

TEST(BuildLanguage, RejectsBadOccupancyAndEmptyStems) {
  auto spec = SynthSpec::standard();
  spec.slots[0].occupancy = 1.5;
  EXPECT_THROW(build_language(spec), std::invalid_argument);
  spec = SynthSpec::standard();
  spec.stem_count = 0;
  EXPECT_THROW(build_language(spec), std::invalid_argument);
}

TEST(SplitWithTargetOov, ZeroTargetOnWellCoveredCorpus) {
  auto spec = SynthSpec::standard(2);
  spec.stem_count = 10;
  const Corpus c = generate_corpus(spec, 1000);
  const auto split = split_with_target_oov(c, 0.8, 0.0, 1);
  EXPECT_EQ(split.train.size(), 800u);
  EXPECT_EQ(split.eval.size(), 200u);
  EXPECT_EQ(split.achieved_oov, 0.0);
  EXPECT_TRUE(split.feasible);
}

TEST(SplitWithTargetOov, ReportedRateMatchesIndependentMeasurement) {
  auto spec = SynthSpec::standard(3);
  spec.stem_count = 200;
  spec.sentence_min = 2;
  spec.sentence_max = 5;
  const Corpus c = generate_corpus(spec, 1000);
  const auto split = split_with_target_oov(c, 0.8, 0.10, 3);
  EXPECT_EQ(split.train.size() + split.eval.size(), 1000u);
  EXPECT_NEAR(oov_rate(keys_of(split.train), split.eval), split.achieved_oov, 1e-12);
  EXPECT_NEAR(split.achieved_oov, 0.10, 0.02);
}

TEST(ParadigmGrid, GroupsPairWordsDifferingByOneAffix) {
  auto spec = SynthSpec::standard(1);
  spec.stem_count = 5;
  const PromptOptions options{false, false, false};
  const ParadigmGrid grid = generate_paradigm_grid(spec, options);
  EXPECT_EQ(grid.corpus.size(), 5u * 5u * 5u);
  // 2 slots x 4 x 3 ordered affix pairs, 5 stems x 5 other-slot states each.
  ASSERT_EQ(grid.groups.size(), 24u);
  for (const auto& g : grid.groups) {
    EXPECT_EQ(g.pairs.size(), 25u) << g.name;
    for (const auto& [a, b] : g.pairs) EXPECT_NE(a.word, b.word);
  }
}

TEST(ParseSynthSpec, ReadsKeysAndSlots) {
  std::istringstream in(
      "stem_count = 12\nsentence_min = 2\nsentence_max = 4\nseed = 9\n"
      "punctuation_rate = 0.5\n\n[slot.tense]\noccupancy = 1.0\naffixes = PST PRS\n");
  const SynthSpec spec = parse_synth_spec(in);
  EXPECT_EQ(spec.stem_count, 12);
  EXPECT_EQ(spec.sentence_min, 2);
  EXPECT_EQ(spec.seed, 9u);
  ASSERT_EQ(spec.slots.size(), 1u);
  EXPECT_EQ(spec.slots[0].affixes.size(), 2u);
  EXPECT_DOUBLE_EQ(spec.slots[0].occupancy, 1.0);
}

}  // namespace
}  // namespace morphoglot
