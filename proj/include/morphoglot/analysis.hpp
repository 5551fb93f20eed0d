#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphoglot/encoder.hpp"
#include "morphoglot/synth.hpp"

namespace morphoglot {

struct WordNeighbor {
  std::string prompt;
  WordInContext word;
  float similarity = 0.0f;
};

/// Exact cosine ranking of the distinct (by prompt) words of `pool`
/// against `query`; ties go to the earlier pool entry.
std::vector<WordNeighbor> nearest_words(const EncoderModel& encoder,
                                        const std::vector<WordInContext>& pool,
                                        const WordInContext& query, int k);

/// Distinct words-in-context of a corpus, first occurrence order.
std::vector<WordInContext> corpus_words(const Corpus& corpus, const PromptOptions& options);

struct AnalogyScore {
  double mean_cosine = 0.0;
  std::size_t pairs_used = 0;
  // Pairs whose difference vector was (numerically) zero.
  std::size_t pairs_excluded = 0;
};

/// Mean cosine over all unordered pairs of difference vectors
/// target_i - source_i (rows). Needs >= 2 usable pairs.
AnalogyScore analogy_consistency(const Eigen::MatrixXd& sources, const Eigen::MatrixXd& targets);
AnalogyScore analogy_consistency(const EncoderModel& encoder, const TransformationGroup& group);

struct Pca2d {
  Eigen::MatrixXd coordinates;  // rows x 2
  Eigen::MatrixXd components;   // 2 x dim, unit rows
  double explained_variance_ratio[2] = {0.0, 0.0};
  bool rank_deficient = false;
};

/// Top-2 principal directions by power iteration with deflation. Each axis
/// is signed so its largest-magnitude loading is positive.
Pca2d pca_2d(const Eigen::MatrixXd& vectors);

// Shape of one transformer stack for the cost model.
struct StackShape {
  int n_layers = 1;
  int d_model = 1;
  int d_ff = 1;
};

/// Per-token multiply-accumulate FLOPs of one layer attending over `seq`
/// positions (plus `cross_len` encoder positions when cross-attending).
std::int64_t layer_flops_per_token(const StackShape& shape, std::int64_t seq,
                                   std::int64_t cross_len = 0);

struct CostModelInput {
  StackShape encoder;
  StackShape decoder;
  // Encoder passes per sentence (one per word, or one per sentence) and
  // tokens per pass.
  int encoder_passes = 8;
  int encoder_seq_len = 16;
  // Decoder runs per sentence, steps per run, positions present before the
  // first step, and cross-attention source length (0 = none).
  int decoder_runs = 8;
  int decoder_steps = 4;
  int decoder_initial_context = 2;
  int cross_attention_len = 0;
  int beam_width = 5;
};

struct FlopsBreakdown {
  std::int64_t encoder = 0;
  std::int64_t decoder = 0;
  std::int64_t total() const { return encoder + decoder; }
};

FlopsBreakdown flops_estimate(const CostModelInput& input);

/// Full-scale workloads: 8 words per sentence, 3 morphemes per word.
CostModelInput retrieval_glosser_workload();  // LaBSE-sized encoder, 4x512 decoder, beam 5
CostModelInput byte_seq2seq_workload();       // ByT5-base, 128 output bytes, beam 3

}  // namespace morphoglot
