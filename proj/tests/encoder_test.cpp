#include <cmath>

#include <gtest/gtest.h>

#include "morphoglot/encoder.hpp"
#include "morphoglot/pipeline.hpp"
#include "morphoglot/random.hpp"
#include "morphoglot/synth.hpp"
#include "test_support.hpp"

namespace morphoglot {
namespace {

using nn::Tape;

double infonce_loss(const Matrix<double>& words, const Matrix<double>& morphemes, double log_inv_tau,
                    const std::vector<std::vector<bool>>& positives) {
  Tape<double> tape;
  Matrix<double> lit(1, 1);
  lit(0, 0) = log_inv_tau;
  return contrastive_loss_from_embeddings(tape.constant(words), tape.constant(morphemes),
                                          tape.constant(lit), positives)
      .value()(0, 0);
}

std::vector<std::vector<bool>> diagonal(std::size_t b) {
  std::vector<std::vector<bool>> m(b, std::vector<bool>(b, false));
  for (std::size_t i = 0; i < b; ++i) m[i][i] = true;
  return m;
}

TEST(ContrastiveLoss, SingleItemBatchIsZero) {
  Matrix<double> w(1, 3), m(1, 3);
  w << 0.6, 0.8, 0.0;
  m << 0.0, 0.6, 0.8;
  EXPECT_EQ(infonce_loss(w, m, 2.0, diagonal(1)), 0.0);
}

TEST(ContrastiveLoss, IdentitySimilaritiesGiveHandValue) {
  const Matrix<double> eye = Matrix<double>::Identity(2, 2);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(infonce_loss(eye, eye, 0.0, diagonal(2)), expected, 1e-12);
  EXPECT_NEAR(infonce_loss(eye, eye, 0.0, diagonal(2)), 0.31326, 1e-5);
}

TEST(ContrastiveLoss, AllOnesWithSharedPositivesIsLogTwo) {
  const Matrix<double> ones = Matrix<double>::Ones(2, 1);
  const std::vector<std::vector<bool>> all{{true, true}, {true, true}};
  EXPECT_NEAR(infonce_loss(ones, ones, 0.0, all), std::log(2.0), 1e-12);
  EXPECT_NEAR(infonce_loss(ones, ones, 0.0, all), 0.69315, 1e-5);
}

TEST(ContrastiveLoss, DiagonalPositivesReduceToInfoNce) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng.below(7)), n = 6;
    Matrix<double> w(b, n), m(b, n);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = rng.normal();
      m.data()[i] = rng.normal();
    }
    w.rowwise().normalize();
    m.rowwise().normalize();
    const double log_inv_tau = std::log(1.0 / 0.05);
    double reference = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
      double denom = 0;
      for (Eigen::Index j = 0; j < b; ++j) denom += std::exp(w.row(i).dot(m.row(j)) / 0.05);
      reference -= std::log(std::exp(w.row(i).dot(m.row(i)) / 0.05) / denom);
    }
    reference /= static_cast<double>(b);
    EXPECT_NEAR(infonce_loss(w, m, log_inv_tau, diagonal(static_cast<std::size_t>(b))), reference, 1e-12);
  }
}

TEST(PositivesMask, SharedAffixMarksBothWords) {
  const Morpheme a("a", "PL");
  const std::vector<BagOfMorphemes> bags{{a, Morpheme("x", "dog")}, {a, Morpheme("y", "cat")}};
  const auto mask = build_positives_mask(bags, {a, a});
  EXPECT_EQ(mask, (std::vector<std::vector<bool>>{{true, true}, {true, true}}));
}

TEST(PositivesMask, DisjointBagsGiveIdentity) {
  const std::vector<BagOfMorphemes> bags{{Morpheme("a", "A")}, {Morpheme("b", "B")}, {Morpheme("c", "C")}};
  EXPECT_EQ(build_positives_mask(bags, {Morpheme("a", "A"), Morpheme("b", "B"), Morpheme("c", "C")}),
            diagonal(3));
}

TEST(PositivesMask, MatchesBruteForceOnRandomBatches) {
  const Corpus c = generate_corpus(SynthSpec::standard(4), 200);
  std::vector<std::pair<std::size_t, std::size_t>> refs;
  for (std::size_t s = 0; s < c.size(); ++s)
    for (std::size_t w = 0; w < c.sentences[s].words.size(); ++w) refs.emplace_back(s, w);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<BagOfMorphemes> bags;
    std::vector<Morpheme> morphemes;
    for (int i = 0; i < 16; ++i) {
      const auto [s, w] = refs[rng.below(refs.size())];
      const auto& analysis = c.sentences[s].word_analyses[w];
      bags.push_back(bag_of_morphemes(c.sentences[s], w));
      morphemes.push_back(analysis[rng.below(analysis.size())]);
    }
    const auto mask = build_positives_mask(bags, morphemes);
    for (std::size_t i = 0; i < bags.size(); ++i) {
      EXPECT_TRUE(mask[i][i]);
      for (std::size_t j = 0; j < morphemes.size(); ++j) {
        bool member = false;
        for (const auto& m : bags[i]) member = member || (m.segment == morphemes[j].segment && m.gloss == morphemes[j].gloss);
        EXPECT_EQ(mask[i][j], member);
      }
    }
  }
}

TEST(Embedding, UnitNormDeterministicAndGlossSensitive) {
  const auto f = test::tiny_encoder_fixture(8, 1, 2);
  const auto w = word_in_context(f.corpus.sentences[0], 0, f.model.config.prompt_options);
  const Eigen::VectorXf a = embed_word(f.model, w);
  EXPECT_NEAR(a.norm(), 1.0f, 1e-5f);
  EXPECT_EQ(a, embed_word(f.model, w));
  const Eigen::VectorXf x = embed_morpheme(f.model, Morpheme("pa", "PL"));
  const Eigen::VectorXf y = embed_morpheme(f.model, Morpheme("pa", "DU"));
  EXPECT_NEAR(x.norm(), 1.0f, 1e-5f);
  EXPECT_NE(x, y);
  EXPECT_GT(f.model.tau(), 0.0);
}

TEST(Similarity, SelfOrthogonalAndOrderOfOperations) {
  const auto f = test::tiny_encoder_fixture(8, 1, 2);
  const auto w = word_in_context(f.corpus.sentences[1], 0, f.model.config.prompt_options);
  const Morpheme m("ti", "PST");
  const Eigen::VectorXf wv = embed_word(f.model, w);
  const Eigen::VectorXf mv = embed_morpheme(f.model, m);
  EXPECT_NEAR(wv.dot(wv), 1.0f, 1e-6f);
  Eigen::VectorXf o = Eigen::VectorXf::Zero(wv.size());
  o(0) = -wv(1);
  o(1) = wv(0);
  EXPECT_NEAR(wv.dot(o), 0.0f, 1e-6f);
  EXPECT_NEAR(similarity(f.model, w, m), mv.dot(wv), 1e-7f);
  EXPECT_GE(similarity(f.model, w, m), -1.0f);
  EXPECT_LE(similarity(f.model, w, m), 1.0f);
}

TEST(EncodeSequence, SingleUnpaddedPositionIsThePooledVector) {
  const auto f = test::tiny_encoder_fixture(8, 2, 2);
  const std::vector<int> ids = f.model.vocab.encode("sulo");
  const std::vector<bool> mask{true, true, false, true};
  const auto out = encode_sequence(f.model, ids, mask);
  EXPECT_TRUE(out.pooled.transpose().isApprox(out.per_token.row(2), 1e-6f));
  EXPECT_EQ(out.per_token.row(0).norm(), 0.0f);
  const auto again = encode_sequence(f.model, ids, mask);
  EXPECT_EQ(out.pooled, again.pooled);
  EXPECT_EQ(out.per_token, again.per_token);
}

TEST(EncoderCheckpoint, RoundTripIsBitwiseAndFingerprintStable) {
  auto f = test::tiny_encoder_fixture(8, 1, 2);
  f.model.run_config = "seed = 3\n[encoder]\nnote = a\\b";
  const std::string bytes = f.model.serialize();
  const EncoderModel back = EncoderModel::deserialize(bytes);
  EXPECT_EQ(back.serialize(), bytes);
  EXPECT_EQ(back.fingerprint(), f.model.fingerprint());
  EXPECT_EQ(back.run_config, f.model.run_config);
  EXPECT_EQ(back.vocab, f.model.vocab);
  EXPECT_EQ(back.config.prompt_options, f.model.config.prompt_options);
}

TEST(TrainEncoder, SingleSentenceBatchOfOneHasZeroLoss) {
  const Corpus c = test::parse_text("\\t kani-pa\n\\m kani-pa\n\\g dog-PL\n");
  RunConfig cfg = quick_config(1);
  cfg.encoder.transformer.d_model = 8;
  cfg.encoder.transformer.n_heads = 2;
  cfg.encoder.transformer.d_ff = 16;
  cfg.encoder.embedding_dim = 8;
  cfg.encoder_train.batch_size = 1;
  cfg.encoder_train.epochs = 1;
  const auto result = train_encoder(c, nullptr, cfg.encoder, cfg.encoder_train);
  ASSERT_FALSE(result.log.step_losses.empty());
  for (double l : result.log.step_losses) EXPECT_EQ(l, 0.0);
}

TEST(TrainEncoder, FixedSeedGivesIdenticalLossCurves) {
  const Corpus c = generate_corpus(SynthSpec::standard(2), 60);
  RunConfig cfg = quick_config(7);
  cfg.encoder.transformer.d_model = 16;
  cfg.encoder.transformer.d_ff = 32;
  cfg.encoder.embedding_dim = 16;
  cfg.encoder_train.batch_size = 32;
  cfg.encoder_train.epochs = 2;
  cfg.encoder_train.seed = 7;
  const auto a = train_encoder(c, nullptr, cfg.encoder, cfg.encoder_train);
  const auto b = train_encoder(c, nullptr, cfg.encoder, cfg.encoder_train);
  EXPECT_EQ(a.log.step_losses, b.log.step_losses);
  EXPECT_EQ(a.model.serialize(), b.model.serialize());
  EXPECT_THROW(train_encoder(Corpus{}, nullptr, cfg.encoder, cfg.encoder_train), std::invalid_argument);
}

// One training run on the standard synthetic language shared by the checks
// that need a learned geometry.
class TrainedEncoder : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const Corpus all = generate_corpus(SynthSpec::standard(1), 2300);
    train_ = new Corpus{{all.sentences.begin(), all.sentences.begin() + 2000}, Split::train};
    dev_ = new Corpus{{all.sentences.begin() + 2000, all.sentences.end()}, Split::dev};
    RunConfig cfg = quick_config(1);
    cfg.encoder_train.epochs = 30;
    cfg.encoder_train.target_p_at_1 = 0.85;
    cfg.encoder_train.seed = 1;
    result_ = new EncoderTrainResult(train_encoder(*train_, dev_, cfg.encoder, cfg.encoder_train));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete train_;
    delete dev_;
  }
  static Corpus* train_;
  static Corpus* dev_;
  static EncoderTrainResult* result_;
};
Corpus* TrainedEncoder::train_ = nullptr;
Corpus* TrainedEncoder::dev_ = nullptr;
EncoderTrainResult* TrainedEncoder::result_ = nullptr;

TEST_F(TrainedEncoder, ValidationPrecisionAtOneReachesTarget) {
  const auto candidates = distinct_morphemes(*train_);
  const RetrievalScores scores = evaluate_retrieval(result_->model, *dev_, candidates, 0);
  EXPECT_GE(scores.precision_at_1, 0.85);
  EXPECT_LE(result_->log.epochs.size(), 30u);
}

TEST_F(TrainedEncoder, GoldPairsOutscoreRandomNonMembers) {
  const auto& model = result_->model;
  const auto morphemes = distinct_morphemes(*train_);
  Rng rng(3);
  double pos = 0, neg = 0;
  for (int k = 0; k < 500; ++k) {
    const auto& s = dev_->sentences[rng.below(dev_->size())];
    const std::size_t w = rng.below(s.words.size());
    const auto bag = bag_of_morphemes(s, w);
    const auto word = word_in_context(s, w, model.config.prompt_options);
    const auto& analysis = s.word_analyses[w];
    pos += similarity(model, word, analysis[rng.below(analysis.size())]);
    Morpheme other;
    do other = morphemes[rng.below(morphemes.size())];
    while (bag.count(other));
    neg += similarity(model, word, other);
  }
  EXPECT_GT(pos / 500 - neg / 500, 0.2);
}

TEST_F(TrainedEncoder, EveryMorphemeRetrievesItself) {
  const auto morphemes = distinct_morphemes(*train_);
  const Matrix<float> e = embed_morphemes(result_->model, morphemes);
  const Matrix<float> sims = e * e.transpose();
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    Eigen::Index best = 0;
    sims.row(i).maxCoeff(&best);
    EXPECT_EQ(best, i) << morphemes[static_cast<std::size_t>(i)].segment;
  }
}

}  // namespace
}  // namespace morphoglot
