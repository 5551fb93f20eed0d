#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "morphoglot/lexicon.hpp"
#include "morphoglot/random.hpp"
#include "morphoglot/synth.hpp"
#include "test_support.hpp"

namespace morphoglot {
namespace {

Eigen::VectorXf random_unit(Rng& rng, int dim) {
  Eigen::VectorXf v(dim);
  for (int i = 0; i < dim; ++i) v(i) = static_cast<float>(rng.normal());
  return v.normalized();
}

std::vector<Morpheme> numbered_morphemes(int n) {
  std::vector<Morpheme> out;
  for (int i = 0; i < n; ++i) out.emplace_back("m" + std::to_string(i), "G" + std::to_string(i % 37));
  return out;
}

// Double-loop ranking with the same tie rule (lower index first).
std::vector<Neighbor> naive_nearest(const Lexicon& lex, const Eigen::VectorXf& q, int k) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < lex.size(); ++i) {
    float dot = 0.0f;
    for (int j = 0; j < lex.dim(); ++j) dot += lex.embeddings()(static_cast<Eigen::Index>(i), j) * q(j);
    all.push_back({i, dot});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; });
  all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(k)));
  return all;
}

class LexiconTest : public ::testing::Test {
 protected:
  test::EncoderFixture f = test::tiny_encoder_fixture(8, 1, 2);
};

TEST_F(LexiconTest, EosRowFirstAndRowsUnitNorm) {
  const Lexicon lex = build_lexicon(f.model, f.corpus);
  EXPECT_EQ(lex.entry(Lexicon::kEos).morpheme.segment, std::string(kEosPrompt));
  EXPECT_EQ(static_cast<std::size_t>(lex.embeddings().rows()), lex.size());
  for (Eigen::Index r = 0; r < lex.embeddings().rows(); ++r)
    EXPECT_NEAR(lex.embeddings().row(r).norm(), 1.0f, 1e-5f);
  EXPECT_EQ(lex.encoder_fingerprint(), f.model.fingerprint());
}

TEST_F(LexiconTest, CountsDistinctMorphemes) {
  // kani, pa, sulo, ti -> 4 morphemes.
  EXPECT_EQ(build_lexicon(f.model, f.corpus).size(), 5u);
  const Corpus seven = test::parse_text("\\t abcdefg\n\\m a-b-c-d\n\\g A-B-C-D\n\n\\t x\n\\m a-e-f-g\n\\g A-E-F-G\n");
  EXPECT_EQ(build_lexicon(f.model, seven).size(), 8u);
}

TEST_F(LexiconTest, SizeMatchesSortDedupOracle) {
  const Corpus c = generate_corpus(SynthSpec::standard(13), 300);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& s : c.sentences)
    for (const auto& a : s.word_analyses)
      for (const auto& m : a) pairs.emplace_back(m.segment, m.gloss);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  auto vocab_corpus = c;
  vocab_corpus.sentences.push_back(f.corpus.sentences[0]);
  const auto model = make_encoder(f.model.config, build_vocab(vocab_corpus, f.model.config.prompt_options), 2);
  const Lexicon lex = build_lexicon(model, c);
  EXPECT_EQ(lex.size(), pairs.size() + 1);
  EXPECT_EQ(lex, build_lexicon(model, c));
  EXPECT_EQ(lex.serialize(), build_lexicon(model, c).serialize());
}

TEST_F(LexiconTest, AddEntryIsIdempotentAndAppendOnly) {
  Lexicon lex = build_lexicon(f.model, f.corpus);
  const Matrix<float> snapshot = lex.embeddings();
  bool added = true;
  const std::size_t idx = lex.add_entry(f.model, Morpheme("pa", "PL"), Provenance::user, &added);
  EXPECT_FALSE(added);
  EXPECT_EQ(idx, *lex.find(Morpheme("pa", "PL")));
  EXPECT_EQ(lex.size(), 5u);

  const std::size_t fresh = lex.add_entry(f.model, Morpheme("kan", "dog"), Provenance::user, &added);
  EXPECT_TRUE(added);
  EXPECT_EQ(fresh, 5u);
  EXPECT_EQ(lex.size(), 6u);
  EXPECT_EQ(lex.entry(fresh).provenance, Provenance::user);
  const auto top = lex.nearest_k(lex.embeddings().row(static_cast<Eigen::Index>(fresh)).transpose(), 1);
  EXPECT_EQ(top[0].index, fresh);

  lex.add_entries(f.model, {Morpheme("s", "A"), Morpheme("pa", "PL"), Morpheme("t", "B")}, Provenance::user);
  EXPECT_EQ(lex.size(), 8u);
  EXPECT_EQ(std::memcmp(lex.embeddings().data(), snapshot.data(), snapshot.size() * sizeof(float)), 0);
  EXPECT_EQ(lex.count(Provenance::user), 3u);
  EXPECT_EQ(lex.count(Provenance::train), 4u);
}

TEST_F(LexiconTest, ForeignEncoderIsRefused) {
  Lexicon lex = build_lexicon(f.model, f.corpus);
  const auto other = test::tiny_encoder_fixture(8, 1, 2, 99);
  EXPECT_THROW(lex.add_entry(other.model, Morpheme("zz", "Z"), Provenance::user), StaleLexicon);
  EXPECT_THROW(lex.check_encoder(other.model), StaleLexicon);
}

TEST_F(LexiconTest, StoredRowIsItsOwnNearestNeighbour) {
  const Lexicon lex = build_lexicon(f.model, f.corpus);
  for (std::size_t i = 0; i < lex.size(); ++i) {
    const auto top = lex.nearest_k(lex.embeddings().row(static_cast<Eigen::Index>(i)).transpose(), 3);
    EXPECT_EQ(top[0].index, i);
    EXPECT_NEAR(top[0].similarity, 1.0f, 1e-6f);
  }
  EXPECT_THROW(lex.nearest_k(Eigen::VectorXf::Ones(8), 1), std::invalid_argument);
  EXPECT_THROW(lex.nearest_k(Eigen::VectorXf::Unit(8, 0), 0), std::invalid_argument);
  EXPECT_THROW(lex.nearest_k(Eigen::VectorXf::Unit(4, 0), 1), std::invalid_argument);
}

TEST_F(LexiconTest, IdenticalRowsTieTowardLowerIndex) {
  const Lexicon lex = build_lexicon(f.model, f.corpus);
  std::string bytes = lex.serialize();
  // Rows trail the file; copy row 1 over rows 2 and 4.
  const std::size_t row_bytes = static_cast<std::size_t>(lex.dim()) * sizeof(float);
  const std::size_t base = bytes.size() - lex.size() * row_bytes;
  bytes.replace(base + 2 * row_bytes, row_bytes, bytes, base + row_bytes, row_bytes);
  bytes.replace(base + 4 * row_bytes, row_bytes, bytes, base + row_bytes, row_bytes);
  const Lexicon tied = Lexicon::deserialize(bytes);
  const auto top = tied.nearest_k(tied.embeddings().row(1).transpose(), 3);
  EXPECT_EQ(top[0].index, 1u);
  EXPECT_EQ(top[1].index, 2u);
  EXPECT_EQ(top[2].index, 4u);
}

TEST_F(LexiconTest, NearestMatchesDoubleLoopOnRandomQueries) {
  Lexicon lex = build_lexicon(f.model, f.corpus);
  auto vocab_corpus = f.corpus;
  const auto model = make_encoder(f.model.config, build_vocab(test::parse_text(
      "\\t m0123456789 G\n\\m m0123456789 G\n\\g G0123456789 G\n"), f.model.config.prompt_options), 5);
  Lexicon big(model);
  big.add_entries(model, numbered_morphemes(499), Provenance::train);
  ASSERT_EQ(big.size(), 500u);
  Rng rng(8);
  for (int q = 0; q < 1000; ++q) {
    const Eigen::VectorXf query = random_unit(rng, big.dim());
    const auto got = big.nearest_k(query, 10);
    const auto want = naive_nearest(big, query, 10);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t r = 0; r < got.size(); ++r) {
      EXPECT_NEAR(got[r].similarity, want[r].similarity, 1e-6f);
      // Indices must agree except across float-rounding ties.
      if (r + 1 < want.size() && want[r].similarity - want[r + 1].similarity > 1e-5f &&
          (r == 0 || want[r - 1].similarity - want[r].similarity > 1e-5f))
        EXPECT_EQ(got[r].index, want[r].index) << "query " << q << " rank " << r;
    }
  }
}

TEST_F(LexiconTest, ExtendWithOracleCountsDistinctOovAndIsIdempotent) {
  const Corpus c = generate_corpus(SynthSpec::standard(14), 200);
  auto vocab_corpus = c;
  const auto model = make_encoder(f.model.config, build_vocab(vocab_corpus, f.model.config.prompt_options), 3);
  const Corpus train{{c.sentences.begin(), c.sentences.begin() + 100}, Split::train};
  const Corpus eval{{c.sentences.begin() + 100, c.sentences.end()}, Split::test};
  Lexicon lex = build_lexicon(model, train);
  EXPECT_EQ(extend_with_oracle(lex, model, train), 0u);

  std::set<Morpheme> train_keys, oov;
  for (const auto& s : train.sentences)
    for (const auto& a : s.word_analyses) train_keys.insert(a.begin(), a.end());
  for (const auto& s : eval.sentences)
    for (const auto& a : s.word_analyses)
      for (const auto& m : a)
        if (!train_keys.count(m)) oov.insert(m);
  const std::size_t before = lex.size();
  EXPECT_EQ(extend_with_oracle(lex, model, eval), oov.size());
  EXPECT_EQ(lex.size(), before + oov.size());
  EXPECT_EQ(lex.count(Provenance::eval_oracle), oov.size());
  EXPECT_EQ(extend_with_oracle(lex, model, eval), 0u);
}

TEST_F(LexiconTest, SaveLoadRoundTripPreservesBehaviour) {
  Lexicon lex = build_lexicon(f.model, f.corpus);
  lex.add_entry(f.model, Morpheme("su", "run"), Provenance::user);
  const auto path = std::filesystem::temp_directory_path() / "morphoglot_lexicon_test.mglx";
  save_lexicon(path.string(), lex);
  const Lexicon back = load_lexicon(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back, lex);
  EXPECT_EQ(back.serialize(), lex.serialize());
  EXPECT_EQ(back.entries().back().provenance, Provenance::user);
  Rng rng(10);
  for (int q = 0; q < 100; ++q) {
    const Eigen::VectorXf query = random_unit(rng, lex.dim());
    const auto a = lex.nearest_k(query, 4);
    const auto b = back.nearest_k(query, 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
      EXPECT_EQ(a[r].index, b[r].index);
      EXPECT_EQ(a[r].similarity, b[r].similarity);
    }
  }
}

TEST_F(LexiconTest, CorruptFilesAreRejected) {
  const std::string bytes = build_lexicon(f.model, f.corpus).serialize();
  std::string bad = bytes;
  bad[1] = '?';
  EXPECT_THROW(Lexicon::deserialize(bad), nn::FormatError);
  EXPECT_THROW(Lexicon::deserialize(bytes.substr(0, bytes.size() - 1)), nn::FormatError);
  EXPECT_THROW(Lexicon::deserialize(bytes + "x"), nn::FormatError);
  EXPECT_THROW(load_lexicon("/nonexistent/lexicon.mglx"), std::runtime_error);
}

TEST_F(LexiconTest, TsvOmitsEosAndListsProvenance) {
  Lexicon lex = build_lexicon(f.model, f.corpus);
  lex.add_entry(f.model, Morpheme("su", "run"), Provenance::user);
  const std::string tsv = lex.to_tsv();
  EXPECT_EQ(tsv.find(std::string(kEosPrompt)), std::string::npos);
  EXPECT_NE(tsv.find("su\trun\tuser"), std::string::npos);
}

}  // namespace
}  // namespace morphoglot
