#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "morphoglot/analysis.hpp"
#include "morphoglot/random.hpp"
#include "morphoglot/synth.hpp"
#include "test_support.hpp"

namespace morphoglot {
namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Eigen::MatrixXd random_rotation(Rng& rng, int dim) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, dim, dim));
  return qr.householderQ();
}

TEST(NearestWords, QueryFindsItselfAndMatchesBruteForce) {
  const auto f = test::tiny_encoder_fixture(8, 1, 2);
  auto spec = SynthSpec::standard(3);
  const Corpus c = generate_corpus(spec, 200);
  auto vocab_corpus = c;
  const auto model = make_encoder(f.model.config, build_vocab(vocab_corpus, f.model.config.prompt_options), 4);
  std::vector<WordInContext> pool = corpus_words(c, model.config.prompt_options);
  pool.resize(std::min<std::size_t>(pool.size(), 300));
  ASSERT_GE(pool.size(), 250u);
  const auto& query = pool[17];
  const auto got = nearest_words(model, pool, query, 10);
  EXPECT_EQ(got[0].word.word, query.word);
  EXPECT_NEAR(got[0].similarity, 1.0, 1e-6);

  const Eigen::VectorXf q = embed_word(model, query);
  std::vector<std::pair<double, std::size_t>> brute;
  for (std::size_t i = 0; i < pool.size(); ++i) brute.emplace_back(-static_cast<double>(embed_word(model, pool[i]).dot(q)), i);
  std::stable_sort(brute.begin(), brute.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t r = 0; r < got.size(); ++r) {
    EXPECT_NEAR(got[r].similarity, -brute[r].first, 1e-5);
    if (r + 1 < got.size() && brute[r + 1].first - brute[r].first > 1e-5)
      EXPECT_EQ(got[r].word.word, pool[brute[r].second].word);
  }
}

TEST(AnalogyConsistency, ParallelAndOrthogonalDiffs) {
  Eigen::MatrixXd src(3, 3), dst(3, 3);
  src << 1, 0, 0, 0, 1, 0, 2, 2, 2;
  dst = src;
  dst.col(2).array() += 0.5;
  EXPECT_NEAR(analogy_consistency(src, dst).mean_cosine, 1.0, 1e-12);

  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(2, 2), d2(2, 2);
  d2 << 1, 0, 0, 1;
  EXPECT_NEAR(analogy_consistency(s2, d2).mean_cosine, 0.0, 1e-12);
}

TEST(AnalogyConsistency, FivePairsMatchDoubleLoop) {
  Rng rng(2);
  const Eigen::MatrixXd src = random_matrix(rng, 5, 6), dst = random_matrix(rng, 5, 6);
  double sum = 0;
  int count = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j) {
      const Eigen::VectorXd a = dst.row(i) - src.row(i), b = dst.row(j) - src.row(j);
      sum += a.dot(b) / (a.norm() * b.norm());
      ++count;
    }
  EXPECT_EQ(count, 10);
  const auto score = analogy_consistency(src, dst);
  EXPECT_NEAR(score.mean_cosine, sum / 10, 1e-12);
  EXPECT_EQ(score.pairs_used, 5u);
}

TEST(AnalogyConsistency, NeedsTwoNonZeroDiffs) {
  Eigen::MatrixXd src = Eigen::MatrixXd::Ones(3, 2), dst = src;
  dst(0, 0) = 3;
  EXPECT_THROW(analogy_consistency(src, dst), std::invalid_argument);
  EXPECT_THROW(analogy_consistency(src.topRows(1), dst.topRows(1)), std::invalid_argument);
}

TEST(AnalogyConsistency, InvariantUnderRotation) {
  Rng rng(3);
  const Eigen::MatrixXd src = random_matrix(rng, 12, 8), dst = random_matrix(rng, 12, 8);
  const Eigen::MatrixXd r = random_rotation(rng, 8);
  EXPECT_NEAR(analogy_consistency(src, dst).mean_cosine, analogy_consistency(src * r, dst * r).mean_cosine, 1e-6);
}

TEST(Pca2d, CollinearPointsHaveNoSecondAxis) {
  Eigen::MatrixXd x(6, 4);
  Eigen::RowVectorXd dir(4);
  dir << 1, -2, 0.5, 3;
  for (int i = 0; i < 6; ++i) x.row(i) = (i * 0.7 - 1.0) * dir;
  const Pca2d p = pca_2d(x);
  EXPECT_NEAR(p.explained_variance_ratio[0], 1.0, 1e-8);
  EXPECT_NEAR(p.explained_variance_ratio[1], 0.0, 1e-8);
  EXPECT_TRUE(p.rank_deficient);
}

TEST(Pca2d, PlanarDataKeepsPairwiseDistances) {
  Rng rng(4);
  const Eigen::MatrixXd plane = random_matrix(rng, 20, 2);
  Eigen::MatrixXd basis = random_rotation(rng, 7).leftCols(2).transpose();
  const Eigen::MatrixXd x = (plane * basis).rowwise() + Eigen::RowVectorXd::Constant(7, 3.0);
  const Pca2d p = pca_2d(x);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      EXPECT_NEAR((p.coordinates.row(i) - p.coordinates.row(j)).norm(), (x.row(i) - x.row(j)).norm(), 1e-8);
  EXPECT_NEAR(p.explained_variance_ratio[0] + p.explained_variance_ratio[1], 1.0, 1e-10);
}

TEST(Pca2d, MatchesFullEigendecomposition) {
  Rng rng(5);
  Eigen::MatrixXd x = random_matrix(rng, 50, 16);
  x.col(3) *= 4.0;
  x.col(7) *= 2.5;
  const Pca2d p = pca_2d(x);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 50.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd values = eig.eigenvalues();  // ascending
  const double total = values.sum();
  EXPECT_NEAR(p.explained_variance_ratio[0], values(15) / total, 1e-6);
  EXPECT_NEAR(p.explained_variance_ratio[1], values(14) / total, 1e-6);
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd v = eig.eigenvectors().col(15 - k);
    EXPECT_NEAR(std::abs(p.components.row(k).dot(v)), 1.0, 1e-6);
  }
  EXPECT_TRUE(p.coordinates.isApprox(centered * p.components.transpose(), 1e-10));
}

TEST(Flops, HandCountedTinyLayer) {
  EXPECT_EQ(layer_flops_per_token({1, 2, 4}, 1), 72);
  CostModelInput in;
  in.encoder = {1, 2, 4};
  in.decoder = {1, 2, 4};
  in.encoder_passes = 1;
  in.encoder_seq_len = 1;
  in.decoder_runs = 0;
  EXPECT_EQ(flops_estimate(in).encoder, 72);
  EXPECT_EQ(flops_estimate(in).decoder, 0);
}

TEST(Flops, LinearInLayerCount) {
  for (const CostModelInput& base : {retrieval_glosser_workload(), byte_seq2seq_workload()}) {
    const FlopsBreakdown a = flops_estimate(base);
    CostModelInput enc2 = base, dec2 = base;
    enc2.encoder.n_layers *= 2;
    dec2.decoder.n_layers *= 2;
    EXPECT_EQ(flops_estimate(enc2).encoder, 2 * a.encoder);
    EXPECT_EQ(flops_estimate(enc2).decoder, a.decoder);
    EXPECT_EQ(flops_estimate(dec2).decoder, 2 * a.decoder);
    EXPECT_EQ(flops_estimate(dec2).encoder, a.encoder);
  }
}

TEST(Flops, CrossAttentionAddsItsProjectionsAndScores) {
  const StackShape s{1, 8, 32};
  EXPECT_EQ(layer_flops_per_token(s, 5, 7) - layer_flops_per_token(s, 5), 2 * 4 * 8 * 8 + 2 * 2 * 7 * 8);
}

}  // namespace
}  // namespace morphoglot
