#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "morphoglot/encoder.hpp"
#include "morphoglot/lexicon.hpp"

namespace morphoglot {

struct DecoderConfig {
  // vocab_size is unused: inputs are continuous lexicon and word vectors.
  nn::TransformerConfig transformer{1, 128, 2, 4, 512, 32, 0.1, true};
  double kappa_init = 0.05;
  double kappa_min = 1e-3;
  double kappa_max = 1.0;
  // Normalize the projected hidden state before scoring (logits = cos / kappa).
  bool normalize_hidden = true;
};

/// Autoregressive decoder over lexicon indices. Input rows are
/// [word vector, BOS, emb(prefix_1), ...], projected n -> d_model.
struct DecoderModel {
  DecoderConfig config;
  int embedding_dim = 0;
  nn::ParameterSet<float> params;
  nn::Fingerprint encoder_fingerprint{};
  // Effective run configuration echoed into the checkpoint.
  std::string run_config;

  double kappa() const;
  std::string serialize() const;
  static DecoderModel deserialize(const std::string& bytes);

  /// Throws StaleLexicon unless the lexicon was built by the same encoder.
  void check_lexicon(const Lexicon& lexicon) const;
};

DecoderModel make_decoder(const DecoderConfig& config, int embedding_dim,
                          const nn::Fingerprint& encoder_fingerprint, std::uint64_t seed);

void save_decoder(const std::string& path, const DecoderModel& model);
DecoderModel load_decoder(const std::string& path);

/// Codebook logits for packed prefixes. Sequence s reads word_vecs row s and
/// prefixes[s]; with `last_only` one row per sequence (the next-index
/// distribution), otherwise prefixes[s].size() + 1 rows per sequence.
template <typename T>
nn::Var<T> decoder_logits_batch(nn::Tape<T>& tape, nn::ParameterSet<T>& params,
                                const DecoderConfig& config, const Matrix<T>& word_vecs,
                                const Matrix<T>& lexicon,
                                const std::vector<std::vector<nn::Index>>& prefixes,
                                bool last_only) {
  const nn::Index b = word_vecs.rows();
  const nn::Index v = lexicon.rows();
  if (static_cast<nn::Index>(prefixes.size()) != b)
    throw std::invalid_argument("decoder: one prefix per word vector required");
  Matrix<T> table(b + v, word_vecs.cols());
  table.topRows(b) = word_vecs;
  table.bottomRows(v) = lexicon;
  const nn::Index bos = b + v;

  std::vector<nn::Index> rows, positions, queries, lengths;
  for (nn::Index s = 0; s < b; ++s) {
    const auto& prefix = prefixes[static_cast<std::size_t>(s)];
    const auto len = static_cast<nn::Index>(prefix.size()) + 2;
    if (len > config.transformer.max_seq_len)
      throw std::invalid_argument("decoder: prefix longer than max_seq_len allows");
    const auto start = static_cast<nn::Index>(rows.size());
    rows.push_back(s);
    rows.push_back(bos);
    for (nn::Index idx : prefix) {
      if (idx < 0 || idx >= v) throw std::out_of_range("decoder: lexicon index out of range");
      rows.push_back(b + idx);
    }
    for (nn::Index p = 0; p < len; ++p) positions.push_back(p);
    if (last_only) {
      queries.push_back(start + len - 1);
    } else {
      for (nn::Index p = 1; p < len; ++p) queries.push_back(start + p);
    }
    lengths.push_back(len);
  }

  nn::Var<T> full = nn::concat_rows<T>({tape.constant(table), tape.parameter(params["dec.bos"])});
  nn::Var<T> x = nn::linear(tape, params, "dec.in_proj", nn::gather_rows(full, rows));
  x = x + tape.constant(nn::position_rows<T>(positions, config.transformer.d_model));
  x = nn::dropout(x, config.transformer.dropout_rate);
  x = nn::transformer_stack(tape, params, "dec", config.transformer, x,
                            nn::SequenceLayout::from_lengths(lengths));
  nn::Var<T> h = nn::linear(tape, params, "dec.out_proj", nn::gather_rows(x, queries));
  if (config.normalize_hidden) h = nn::l2_normalize_rows(h);
  return nn::scale_exp(nn::matmul_nt(h, tape.constant(lexicon)),
                       tape.parameter(params["dec.log_inv_kappa"]));
}

/// Teacher-forced mean cross-entropy; targets[s] are gold lexicon indices
/// without the end-of-word index, which is appended here.
template <typename T>
nn::Var<T> decoder_loss(nn::Tape<T>& tape, nn::ParameterSet<T>& params,
                        const DecoderConfig& config, const Matrix<T>& word_vecs,
                        const Matrix<T>& lexicon,
                        const std::vector<std::vector<nn::Index>>& targets) {
  nn::Var<T> logits = decoder_logits_batch(tape, params, config, word_vecs, lexicon, targets, false);
  std::vector<nn::Index> flat;
  for (const auto& t : targets) {
    flat.insert(flat.end(), t.begin(), t.end());
    flat.push_back(static_cast<nn::Index>(Lexicon::kEos));
  }
  return nn::cross_entropy(logits, flat);
}

/// Next-index logits for one word and prefix (evaluation mode).
Eigen::VectorXf decoder_logits(const DecoderModel& model, const Lexicon& lexicon,
                               const Eigen::VectorXf& word_vec,
                               const std::vector<std::size_t>& prefix);

struct Alternative {
  std::size_t index = 0;
  float probability = 0.0f;
};

struct DecodeStep {
  std::size_t index = 0;
  float probability = 0.0f;
  // Most probable indices of this step's distribution, descending.
  std::vector<Alternative> alternatives;
};

struct BeamHypothesis {
  std::vector<std::size_t> indices;
  double log_prob = 0.0;
  bool finished = false;
  std::vector<DecodeStep> steps;
};

struct DecodeOptions {
  int beam_width = 5;
  int max_len = 12;
  int top_k = 5;
};

/// Best hypothesis, end-of-word index stripped; `steps` has one entry per
/// returned index.
struct DecodeResult {
  std::vector<std::size_t> indices;
  double log_prob = 0.0;
  std::vector<DecodeStep> steps;
};

DecodeResult beam_decode(const DecoderModel& model, const Lexicon& lexicon,
                         const Eigen::VectorXf& word_vec, const DecodeOptions& options);
DecodeResult beam_decode(const EncoderModel& encoder, const DecoderModel& model,
                         const Lexicon& lexicon, const WordInContext& word,
                         const DecodeOptions& options);

struct MorphemeAlternative {
  Morpheme morpheme;
  float probability = 0.0f;
};

struct WordGloss {
  std::string surface;
  bool punctuation = false;
  std::vector<Morpheme> morphemes;
  std::vector<float> probabilities;
  std::vector<std::vector<MorphemeAlternative>> alternatives;
  double log_prob = 0.0;
};

struct SentenceGloss {
  std::vector<WordGloss> words;
};

/// Glosses each non-punctuation word independently; punctuation-only tokens
/// pass through with empty analyses.
SentenceGloss gloss_sentence(const EncoderModel& encoder, const DecoderModel& model,
                             const Lexicon& lexicon, const std::string& transcription,
                             const std::optional<std::string>& translation,
                             const DecodeOptions& options = {});

/// Predicted copy of `input` with every word analysis replaced by the
/// decoder's output. Punctuation-only words are analyzed as themselves.
Corpus gloss_corpus(const EncoderModel& encoder, const DecoderModel& model,
                    const Lexicon& lexicon, const Corpus& input,
                    const DecodeOptions& options = {});

struct DecoderTrainConfig {
  int batch_size = 32;
  int epochs = 20;
  nn::OptimizerConfig optimizer{1e-4, 0.9, 0.999, 1e-8, 0.01, 1.0, 0};
  std::uint64_t seed = 0;
  // Sentences of the validation corpus decoded per epoch (0 = all).
  std::size_t validation_sentences = 200;
  DecodeOptions validation_decode;
  // Stop once validation gloss MER is at or below this value.
  double target_mer = -1.0;
};

struct DecoderEpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double validation_gloss_mer = 0.0;
  double validation_segment_mer = 0.0;
  double kappa = 0.0;
};

struct DecoderTrainLog {
  std::vector<double> step_losses;
  std::vector<DecoderEpochRecord> epochs;
  int best_epoch = -1;
};

struct DecoderTrainResult {
  DecoderModel model;
  DecoderTrainLog log;
};

using DecoderEpochCallback =
    std::function<void(const DecoderEpochRecord&, const DecoderModel&)>;

/// Teacher-forced training against a frozen encoder; keeps the epoch with the
/// lowest validation gloss MER (dev corpus if given, else training corpus).
/// Throws std::invalid_argument naming any gold morpheme absent from the
/// lexicon.
DecoderTrainResult train_decoder(const EncoderModel& encoder, const Lexicon& lexicon,
                                 const Corpus& train, const Corpus* dev,
                                 const DecoderConfig& config,
                                 const DecoderTrainConfig& train_config,
                                 const DecoderEpochCallback& on_epoch = nullptr);

}  // namespace morphoglot
