#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "morphoglot/igt.hpp"
#include "morphoglot/metrics.hpp"
#include "morphoglot/nn/checkpoint.hpp"
#include "morphoglot/nn/optim.hpp"
#include "morphoglot/nn/transformer.hpp"
#include "morphoglot/unicode.hpp"

namespace morphoglot {

using nn::Matrix;

/// Character vocabulary over Unicode scalar values with PAD and UNK.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  CharVocab() = default;

  void add_text(std::string_view text);
  int size() const { return static_cast<int>(symbols_.size()) + 2; }
  // Unknown scalar values map to kUnk.
  std::vector<int> encode(std::string_view text) const;

  std::string serialize() const;
  static CharVocab deserialize(const std::string& text);

  bool operator==(const CharVocab& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<char32_t> symbols_;
  std::map<char32_t, int> ids_;
};

enum class Pooling { mean, cls };

struct EncoderConfig {
  nn::TransformerConfig transformer{0, 128, 2, 4, 512, 256, 0.0, false};
  int embedding_dim = 128;
  PromptOptions prompt_options;
  Pooling pooling = Pooling::mean;
  double tau_init = 0.05;
  double tau_min = 1e-3;
  double tau_max = 1.0;
};

/// Dual encoder with shared weights: character transformer, pooling, a
/// bias-free projection to `embedding_dim` and L2 normalization. The
/// temperature is exp(-log_inv_tau).
struct EncoderModel {
  EncoderConfig config;
  CharVocab vocab;
  nn::ParameterSet<float> params;
  // Effective run configuration echoed into the checkpoint.
  std::string run_config;

  double tau() const;
  std::string serialize() const;
  static EncoderModel deserialize(const std::string& bytes);
  nn::Fingerprint fingerprint() const;
};

CharVocab build_vocab(const Corpus& corpus, const PromptOptions& options);

EncoderModel make_encoder(const EncoderConfig& config, CharVocab vocab,
                          std::uint64_t seed);

void save_encoder(const std::string& path, const EncoderModel& model);
EncoderModel load_encoder(const std::string& path);

// ---------------------------------------------------------------------------
// Forward pass, generic in the scalar type.

struct TokenizedBatch {
  std::vector<nn::Index> ids;
  std::vector<nn::Index> positions;
  nn::SequenceLayout layout;
};

/// Packs token sequences; entries flagged in `pad_masks` (true = pad) are
/// dropped but keep their original position for the positional encoding.
TokenizedBatch pack_tokens(const std::vector<std::vector<int>>& sequences,
                           const std::vector<std::vector<bool>>* pad_masks = nullptr);

template <typename T>
nn::Var<T> encoder_token_states(nn::Tape<T>& tape, nn::ParameterSet<T>& params,
                                const EncoderConfig& config, const TokenizedBatch& batch,
                                std::vector<Matrix<T>>* attention_probe = nullptr) {
  const auto& tc = config.transformer;
  for (auto id : batch.ids)
    if (id < 0 || id >= tc.vocab_size) throw std::out_of_range("token id out of range");
  nn::Var<T> x = nn::gather_rows(tape.parameter(params["enc.tok_emb"]), batch.ids);
  x = x + tape.constant(nn::position_rows<T>(batch.positions, tc.d_model));
  x = nn::dropout(x, tc.dropout_rate);
  return nn::transformer_stack(tape, params, "enc", tc, x, batch.layout, attention_probe);
}

template <typename T>
nn::Var<T> pool_states(nn::Var<T> states, const EncoderConfig& config,
                       const nn::SequenceLayout& layout) {
  if (config.pooling == Pooling::cls) {
    std::vector<nn::Index> first(layout.offsets.begin(), layout.offsets.end());
    return nn::gather_rows(states, std::move(first));
  }
  return nn::segment_mean(states, layout);
}

/// Unit-norm embeddings (sequences x embedding_dim) of tokenized prompts.
template <typename T>
nn::Var<T> encode_prompts(nn::Tape<T>& tape, nn::ParameterSet<T>& params,
                          const EncoderConfig& config, const TokenizedBatch& batch) {
  nn::Var<T> states = encoder_token_states(tape, params, config, batch);
  nn::Var<T> pooled = pool_states(states, config, batch.layout);
  return nn::l2_normalize_rows(nn::matmul(pooled, tape.parameter(params["enc.proj"])));
}

/// InfoNCE with multiple positives over unit embeddings, temperature from
/// the log_inv_tau parameter.
template <typename T>
nn::Var<T> contrastive_loss_from_embeddings(nn::Var<T> words, nn::Var<T> morphemes,
                                            nn::Var<T> log_inv_tau,
                                            const std::vector<std::vector<bool>>& positives) {
  nn::Var<T> sims = nn::matmul_nt(words, morphemes);
  return nn::multi_positive_infonce(nn::scale_exp(sims, log_inv_tau), positives);
}

struct TrainingBatch {
  std::vector<WordInContext> words;
  std::vector<Morpheme> morphemes;
  std::vector<BagOfMorphemes> bags;
  std::vector<std::vector<bool>> positives;
};

/// mask[i][j] = morphemes[j] in bags[i].
std::vector<std::vector<bool>> build_positives_mask(const std::vector<BagOfMorphemes>& bags,
                                                    const std::vector<Morpheme>& morphemes);

TrainingBatch make_training_batch(std::vector<WordInContext> words,
                                  std::vector<Morpheme> morphemes,
                                  std::vector<BagOfMorphemes> bags);

TokenizedBatch tokenize_word_prompts(const CharVocab& vocab, const EncoderConfig& config,
                                     std::span<const WordInContext> words);
TokenizedBatch tokenize_morpheme_prompts(const CharVocab& vocab, const EncoderConfig& config,
                                         std::span<const Morpheme> morphemes);
TokenizedBatch tokenize_texts(const CharVocab& vocab, const EncoderConfig& config,
                              const std::vector<std::string>& prompts);

template <typename T>
nn::Var<T> contrastive_loss(nn::Tape<T>& tape, nn::ParameterSet<T>& params,
                            const EncoderConfig& config, const CharVocab& vocab,
                            const TrainingBatch& batch) {
  const TokenizedBatch words = tokenize_word_prompts(vocab, config, batch.words);
  const TokenizedBatch morphs = tokenize_morpheme_prompts(vocab, config, batch.morphemes);
  // One packed pass over both prompt kinds.
  TokenizedBatch joint = words;
  const nn::Index shift = words.layout.total();
  for (auto id : morphs.ids) joint.ids.push_back(id);
  for (auto p : morphs.positions) joint.positions.push_back(p);
  for (std::size_t s = 0; s < morphs.layout.count(); ++s) {
    joint.layout.offsets.push_back(morphs.layout.offsets[s] + shift);
    joint.layout.lengths.push_back(morphs.layout.lengths[s]);
  }
  nn::Var<T> emb = encode_prompts(tape, params, config, joint);
  const auto b = static_cast<nn::Index>(batch.words.size());
  std::vector<nn::Index> wi(static_cast<std::size_t>(b)), mi(static_cast<std::size_t>(b));
  for (nn::Index i = 0; i < b; ++i) {
    wi[static_cast<std::size_t>(i)] = i;
    mi[static_cast<std::size_t>(i)] = b + i;
  }
  return contrastive_loss_from_embeddings(nn::gather_rows(emb, wi), nn::gather_rows(emb, mi),
                                          tape.parameter(params["enc.log_inv_tau"]),
                                          batch.positives);
}

// ---------------------------------------------------------------------------
// Inference (evaluation mode, float).

struct EncodedSequence {
  Eigen::VectorXf pooled;
  Matrix<float> per_token;
};

/// Single-sequence forward: pad positions (mask true) are excluded from
/// attention and pooling; their per-token rows are zero.
EncodedSequence encode_sequence(const EncoderModel& model, const std::vector<int>& token_ids,
                                const std::vector<bool>& pad_mask);

Matrix<float> embed_texts(const EncoderModel& model, const std::vector<std::string>& prompts);
Matrix<float> embed_words(const EncoderModel& model, std::span<const WordInContext> words);
Matrix<float> embed_morphemes(const EncoderModel& model, std::span<const Morpheme> morphemes);
Eigen::VectorXf embed_word(const EncoderModel& model, const WordInContext& word);
Eigen::VectorXf embed_morpheme(const EncoderModel& model, const Morpheme& morpheme);
float similarity(const EncoderModel& model, const WordInContext& word, const Morpheme& morpheme);

// ---------------------------------------------------------------------------
// Training.

struct EncoderTrainConfig {
  int batch_size = 128;
  int epochs = 100;
  nn::OptimizerConfig optimizer{2e-5, 0.9, 0.999, 1e-8, 0.01, 1.0, 100};
  int samples_per_word = 1;
  std::uint64_t seed = 0;
  // Cap on validation queries per epoch (0 = all words of the dev corpus).
  std::size_t validation_queries = 500;
  // Stop once validation P@1 reaches this value (> 1 disables).
  double target_p_at_1 = 2.0;
};

struct EncoderEpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double validation_p_at_1 = 0.0;
  double tau = 0.0;
};

struct EncoderTrainLog {
  std::vector<double> step_losses;
  std::vector<EncoderEpochRecord> epochs;
  int best_epoch = -1;
};

struct EncoderTrainResult {
  EncoderModel model;
  EncoderTrainLog log;
};

using EncoderEpochCallback = std::function<void(const EncoderEpochRecord&, const EncoderModel&)>;

/// Trains from scratch on (word-in-context, sampled constituent morpheme)
/// pairs and returns the epoch with the best validation P@1 (dev corpus if
/// given, else the training corpus). Throws std::invalid_argument when the
/// corpus has no analyzed word.
EncoderTrainResult train_encoder(const Corpus& train, const Corpus* dev,
                                 const EncoderConfig& config,
                                 const EncoderTrainConfig& train_config,
                                 const EncoderEpochCallback& on_epoch = nullptr);

/// Ranks `candidates` for every analyzed word of `eval` (up to
/// `max_queries`, 0 = all); relevance is the word's bag of morphemes.
RetrievalScores evaluate_retrieval(const EncoderModel& model, const Corpus& eval,
                                   const std::vector<Morpheme>& candidates,
                                   std::size_t max_queries = 0);

}  // namespace morphoglot
