#include "morphoglot/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "morphoglot/random.hpp"

namespace morphoglot {

void CharVocab::add_text(std::string_view text) {
  for (char32_t cp : decode_utf8(text)) {
    if (ids_.count(cp)) continue;
    ids_[cp] = static_cast<int>(symbols_.size()) + 2;
    symbols_.push_back(cp);
  }
}

std::vector<int> CharVocab::encode(std::string_view text) const {
  std::vector<int> out;
  for (char32_t cp : decode_utf8(text)) {
    auto it = ids_.find(cp);
    out.push_back(it == ids_.end() ? kUnk : it->second);
  }
  return out;
}

std::string CharVocab::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (i > 0) out << ',';
    out << std::hex << static_cast<std::uint32_t>(symbols_[i]);
  }
  return out.str();
}

CharVocab CharVocab::deserialize(const std::string& text) {
  CharVocab vocab;
  if (text.empty()) return vocab;
  for (const auto& item : split_on(text, ',')) {
    const auto cp = static_cast<char32_t>(std::stoul(item, nullptr, 16));
    vocab.ids_[cp] = static_cast<int>(vocab.symbols_.size()) + 2;
    vocab.symbols_.push_back(cp);
  }
  return vocab;
}

CharVocab build_vocab(const Corpus& corpus, const PromptOptions& options) {
  CharVocab vocab;
  vocab.add_text(render_morpheme_prompt(Morpheme("a", "a"), false));
  vocab.add_text(" | Context:  | Translation: ");
  vocab.add_text(kEosPrompt);
  for (const auto& sentence : corpus.sentences) {
    vocab.add_text(sentence.transcript());
    if (sentence.translation && options.include_translation) vocab.add_text(*sentence.translation);
    for (const auto& analysis : sentence.word_analyses)
      for (const auto& m : analysis) vocab.add_text(m.gloss);
  }
  return vocab;
}

double EncoderModel::tau() const {
  return std::exp(-static_cast<double>(params["enc.log_inv_tau"].value(0, 0)));
}

EncoderModel make_encoder(const EncoderConfig& config, CharVocab vocab, std::uint64_t seed) {
  EncoderModel model;
  model.config = config;
  model.config.transformer.vocab_size = vocab.size();
  model.config.transformer.causal = false;
  model.config.transformer.validate();
  model.vocab = std::move(vocab);
  Rng rng = Rng::stream(seed, "encoder-init");
  const auto& tc = model.config.transformer;
  nn::init_normal(model.params.add("enc.tok_emb", tc.vocab_size, tc.d_model), rng, 1.0);
  nn::init_transformer_stack(model.params, "enc", tc, rng);
  nn::init_normal(model.params.add("enc.proj", tc.d_model, config.embedding_dim), rng,
                  1.0 / std::sqrt(static_cast<double>(tc.d_model)));
  model.params.add("enc.log_inv_tau", 1, 1, false).value(0, 0) =
      static_cast<float>(-std::log(config.tau_init));
  return model;
}

namespace {

std::string pooling_name(Pooling p) { return p == Pooling::cls ? "cls" : "mean"; }

void clamp_temperature(nn::ParameterSet<float>& params, const EncoderConfig& config) {
  float& v = params["enc.log_inv_tau"].value(0, 0);
  const float lo = static_cast<float>(-std::log(config.tau_max));
  const float hi = static_cast<float>(-std::log(config.tau_min));
  v = std::clamp(v, lo, hi);
}

}  // namespace

std::string EncoderModel::serialize() const {
  const auto& tc = config.transformer;
  nn::Metadata meta{
      {"kind", "encoder"},
      {"vocab_size", std::to_string(tc.vocab_size)},
      {"d_model", std::to_string(tc.d_model)},
      {"n_layers", std::to_string(tc.n_layers)},
      {"n_heads", std::to_string(tc.n_heads)},
      {"d_ff", std::to_string(tc.d_ff)},
      {"max_seq_len", std::to_string(tc.max_seq_len)},
      {"dropout_rate", std::to_string(tc.dropout_rate)},
      {"norm", "pre"},
      {"embedding_dim", std::to_string(config.embedding_dim)},
      {"pooling", pooling_name(config.pooling)},
      {"prompt.transcript", config.prompt_options.include_transcript ? "1" : "0"},
      {"prompt.translation", config.prompt_options.include_translation ? "1" : "0"},
      {"prompt.char_spacing", config.prompt_options.char_spacing ? "1" : "0"},
      {"tau_init", std::to_string(config.tau_init)},
      {"tau_min", std::to_string(config.tau_min)},
      {"tau_max", std::to_string(config.tau_max)},
      {"tau", std::to_string(tau())},
      {"vocab", vocab.serialize()},
  };
  if (!run_config.empty()) meta["run_config"] = run_config;
  return nn::serialize_checkpoint(params, nn::format_metadata(meta));
}

EncoderModel EncoderModel::deserialize(const std::string& bytes) {
  nn::Checkpoint ckpt = nn::deserialize_checkpoint(bytes);
  const nn::Metadata meta = nn::parse_metadata(ckpt.metadata);
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw nn::FormatError("encoder checkpoint missing '" + key + "'");
    return it->second;
  };
  if (get("kind") != "encoder") throw nn::FormatError("checkpoint is not an encoder");
  EncoderModel model;
  auto& tc = model.config.transformer;
  tc.vocab_size = std::stoi(get("vocab_size"));
  tc.d_model = std::stoi(get("d_model"));
  tc.n_layers = std::stoi(get("n_layers"));
  tc.n_heads = std::stoi(get("n_heads"));
  tc.d_ff = std::stoi(get("d_ff"));
  tc.max_seq_len = std::stoi(get("max_seq_len"));
  tc.dropout_rate = std::stod(get("dropout_rate"));
  tc.causal = false;
  model.config.embedding_dim = std::stoi(get("embedding_dim"));
  model.config.pooling = get("pooling") == "cls" ? Pooling::cls : Pooling::mean;
  model.config.prompt_options.include_transcript = get("prompt.transcript") == "1";
  model.config.prompt_options.include_translation = get("prompt.translation") == "1";
  model.config.prompt_options.char_spacing = get("prompt.char_spacing") == "1";
  model.config.tau_init = std::stod(get("tau_init"));
  model.config.tau_min = std::stod(get("tau_min"));
  model.config.tau_max = std::stod(get("tau_max"));
  model.vocab = CharVocab::deserialize(get("vocab"));
  if (model.vocab.size() != tc.vocab_size)
    throw nn::FormatError("encoder vocab size does not match its metadata");
  if (auto it = meta.find("run_config"); it != meta.end()) model.run_config = it->second;
  model.params = std::move(ckpt.params);
  return model;
}

nn::Fingerprint EncoderModel::fingerprint() const { return nn::sha256(serialize()); }

void save_encoder(const std::string& path, const EncoderModel& model) {
  nn::write_file(path, model.serialize());
}

EncoderModel load_encoder(const std::string& path) {
  return EncoderModel::deserialize(nn::read_file(path));
}

TokenizedBatch pack_tokens(const std::vector<std::vector<int>>& sequences,
                           const std::vector<std::vector<bool>>* pad_masks) {
  TokenizedBatch batch;
  nn::Index offset = 0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    nn::Index len = 0;
    for (std::size_t i = 0; i < sequences[s].size(); ++i) {
      if (pad_masks && (*pad_masks)[s][i]) continue;
      batch.ids.push_back(sequences[s][i]);
      batch.positions.push_back(static_cast<nn::Index>(i));
      ++len;
    }
    if (len == 0) throw std::invalid_argument("pack_tokens: empty sequence");
    batch.layout.offsets.push_back(offset);
    batch.layout.lengths.push_back(len);
    offset += len;
  }
  return batch;
}

TokenizedBatch tokenize_texts(const CharVocab& vocab, const EncoderConfig& config,
                              const std::vector<std::string>& prompts) {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(prompts.size());
  for (const auto& p : prompts) {
    auto ids = vocab.encode(p);
    if (ids.empty()) ids.push_back(CharVocab::kUnk);
    if (static_cast<int>(ids.size()) > config.transformer.max_seq_len)
      ids.resize(static_cast<std::size_t>(config.transformer.max_seq_len));
    seqs.push_back(std::move(ids));
  }
  return pack_tokens(seqs);
}

TokenizedBatch tokenize_word_prompts(const CharVocab& vocab, const EncoderConfig& config,
                                     std::span<const WordInContext> words) {
  std::vector<std::string> prompts;
  prompts.reserve(words.size());
  for (const auto& w : words) prompts.push_back(render_word_prompt(w));
  return tokenize_texts(vocab, config, prompts);
}

TokenizedBatch tokenize_morpheme_prompts(const CharVocab& vocab, const EncoderConfig& config,
                                         std::span<const Morpheme> morphemes) {
  std::vector<std::string> prompts;
  prompts.reserve(morphemes.size());
  for (const auto& m : morphemes)
    prompts.push_back(render_morpheme_prompt(m, config.prompt_options.char_spacing));
  return tokenize_texts(vocab, config, prompts);
}

std::vector<std::vector<bool>> build_positives_mask(const std::vector<BagOfMorphemes>& bags,
                                                    const std::vector<Morpheme>& morphemes) {
  std::vector<std::vector<bool>> mask(bags.size(), std::vector<bool>(morphemes.size(), false));
  for (std::size_t i = 0; i < bags.size(); ++i)
    for (std::size_t j = 0; j < morphemes.size(); ++j) mask[i][j] = bags[i].count(morphemes[j]) > 0;
  return mask;
}

TrainingBatch make_training_batch(std::vector<WordInContext> words,
                                  std::vector<Morpheme> morphemes,
                                  std::vector<BagOfMorphemes> bags) {
  TrainingBatch batch{std::move(words), std::move(morphemes), std::move(bags), {}};
  batch.positives = build_positives_mask(batch.bags, batch.morphemes);
  for (std::size_t i = 0; i < batch.positives.size(); ++i)
    if (!batch.positives[i][i])
      throw std::invalid_argument("training batch: morpheme " + std::to_string(i) +
                                  " is not in its word's bag");
  return batch;
}

EncodedSequence encode_sequence(const EncoderModel& model, const std::vector<int>& token_ids,
                                const std::vector<bool>& pad_mask) {
  if (pad_mask.size() != token_ids.size())
    throw std::invalid_argument("encode_sequence: pad mask length mismatch");
  if (static_cast<int>(token_ids.size()) > model.config.transformer.max_seq_len)
    throw std::invalid_argument("encode_sequence: sequence longer than max_seq_len");
  const std::vector<std::vector<int>> seqs{token_ids};
  const std::vector<std::vector<bool>> masks{pad_mask};
  const TokenizedBatch batch = pack_tokens(seqs, &masks);
  auto& params = const_cast<nn::ParameterSet<float>&>(model.params);
  auto tape = nn::Tape<float>::inference();
  nn::Var<float> states = encoder_token_states(tape, params, model.config, batch);
  nn::Var<float> pooled = pool_states(states, model.config, batch.layout);
  EncodedSequence out;
  out.pooled = pooled.value().row(0).transpose();
  out.per_token = Matrix<float>::Zero(static_cast<nn::Index>(token_ids.size()),
                                      model.config.transformer.d_model);
  for (std::size_t r = 0; r < batch.positions.size(); ++r)
    out.per_token.row(batch.positions[r]) = states.value().row(static_cast<nn::Index>(r));
  return out;
}

Matrix<float> embed_texts(const EncoderModel& model, const std::vector<std::string>& prompts) {
  constexpr std::size_t kChunk = 64;
  Matrix<float> out(static_cast<nn::Index>(prompts.size()), model.config.embedding_dim);
  auto& params = const_cast<nn::ParameterSet<float>&>(model.params);
  for (std::size_t start = 0; start < prompts.size(); start += kChunk) {
    const std::size_t end = std::min(prompts.size(), start + kChunk);
    std::vector<std::string> chunk(prompts.begin() + static_cast<std::ptrdiff_t>(start),
                                   prompts.begin() + static_cast<std::ptrdiff_t>(end));
    auto tape = nn::Tape<float>::inference();
    nn::Var<float> emb =
        encode_prompts(tape, params, model.config, tokenize_texts(model.vocab, model.config, chunk));
    out.middleRows(static_cast<nn::Index>(start), emb.rows()) = emb.value();
  }
  return out;
}

Matrix<float> embed_words(const EncoderModel& model, std::span<const WordInContext> words) {
  std::vector<std::string> prompts;
  prompts.reserve(words.size());
  for (const auto& w : words) prompts.push_back(render_word_prompt(w));
  return embed_texts(model, prompts);
}

Matrix<float> embed_morphemes(const EncoderModel& model, std::span<const Morpheme> morphemes) {
  std::vector<std::string> prompts;
  prompts.reserve(morphemes.size());
  for (const auto& m : morphemes)
    prompts.push_back(render_morpheme_prompt(m, model.config.prompt_options.char_spacing));
  return embed_texts(model, prompts);
}

Eigen::VectorXf embed_word(const EncoderModel& model, const WordInContext& word) {
  return embed_words(model, std::span<const WordInContext>(&word, 1)).row(0).transpose();
}

Eigen::VectorXf embed_morpheme(const EncoderModel& model, const Morpheme& morpheme) {
  return embed_morphemes(model, std::span<const Morpheme>(&morpheme, 1)).row(0).transpose();
}

float similarity(const EncoderModel& model, const WordInContext& word, const Morpheme& morpheme) {
  return embed_word(model, word).dot(embed_morpheme(model, morpheme));
}

namespace {

struct WordRef {
  std::size_t sentence;
  std::size_t word;
};

std::vector<WordRef> analyzed_words(const Corpus& corpus) {
  std::vector<WordRef> refs;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto& sentence = corpus.sentences[s];
    for (std::size_t w = 0; w < sentence.word_analyses.size(); ++w) {
      if (w < sentence.words.size() && is_punctuation_only(sentence.words[w])) continue;
      const auto& analysis = sentence.word_analyses[w];
      const bool any = std::any_of(analysis.begin(), analysis.end(), [](const Morpheme& m) {
        return !is_punctuation_only(m.segment);
      });
      if (any) refs.push_back({s, w});
    }
  }
  return refs;
}

BagOfMorphemes content_bag(const IGTSentence& sentence, std::size_t w) {
  BagOfMorphemes bag;
  for (const auto& m : sentence.word_analyses[w])
    if (!is_punctuation_only(m.segment)) bag.insert(m);
  return bag;
}

}  // namespace

RetrievalScores evaluate_retrieval(const EncoderModel& model, const Corpus& eval,
                                   const std::vector<Morpheme>& candidates,
                                   std::size_t max_queries) {
  std::vector<WordRef> refs = analyzed_words(eval);
  if (max_queries > 0 && refs.size() > max_queries) {
    // Evenly spaced subsample keeps the selection deterministic.
    std::vector<WordRef> picked;
    for (std::size_t i = 0; i < max_queries; ++i)
      picked.push_back(refs[i * refs.size() / max_queries]);
    refs = std::move(picked);
  }
  std::vector<WordInContext> words;
  for (const auto& r : refs)
    words.push_back(word_in_context(eval.sentences[r.sentence], r.word,
                                    model.config.prompt_options));
  const Matrix<float> wemb = embed_words(model, words);
  const Matrix<float> memb = embed_morphemes(model, candidates);
  std::map<Morpheme, std::size_t> index;
  for (std::size_t j = 0; j < candidates.size(); ++j) index[candidates[j]] = j;

  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::set<std::size_t>> relevant;
  const Matrix<float> sims = wemb * memb.transpose();
  for (std::size_t q = 0; q < refs.size(); ++q) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    const auto row = sims.row(static_cast<nn::Index>(q));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return row(static_cast<nn::Index>(a)) > row(static_cast<nn::Index>(b));
    });
    if (order.size() > 100) order.resize(100);
    rankings.push_back(std::move(order));
    std::set<std::size_t> rel;
    for (const auto& m : content_bag(eval.sentences[refs[q].sentence], refs[q].word)) {
      auto it = index.find(m);
      if (it != index.end()) rel.insert(it->second);
    }
    relevant.push_back(std::move(rel));
  }
  return retrieval_scores(rankings, relevant);
}

EncoderTrainResult train_encoder(const Corpus& train, const Corpus* dev,
                                 const EncoderConfig& config,
                                 const EncoderTrainConfig& tc,
                                 const EncoderEpochCallback& on_epoch) {
  const std::vector<WordRef> refs = analyzed_words(train);
  if (refs.empty()) throw std::invalid_argument("train_encoder: corpus has no analyzed word");
  if (tc.batch_size < 1) throw std::invalid_argument("train_encoder: batch_size must be >= 1");

  EncoderTrainResult result{make_encoder(config, build_vocab(train, config.prompt_options),
                                         tc.seed),
                            {}};
  EncoderModel& model = result.model;
  const std::vector<Morpheme> candidates = distinct_morphemes(train);
  const Corpus& validation = dev ? *dev : train;

  Rng sample_rng = Rng::stream(tc.seed, "positive-sampling");
  Rng shuffle_rng = Rng::stream(tc.seed, "shuffle");
  Rng dropout_seeds = Rng::stream(tc.seed, "dropout");

  nn::ParameterSet<float> best_params = model.params;
  double best_p1 = -1.0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<std::pair<std::size_t, Morpheme>> pairs;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      const auto& analysis = train.sentences[refs[r].sentence].word_analyses[refs[r].word];
      std::vector<const Morpheme*> content;
      for (const auto& m : analysis)
        if (!is_punctuation_only(m.segment)) content.push_back(&m);
      for (int k = 0; k < tc.samples_per_word; ++k)
        pairs.emplace_back(r, *content[sample_rng.below(content.size())]);
    }
    shuffle_rng.shuffle(pairs);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<WordInContext> words;
      std::vector<Morpheme> morphemes;
      std::vector<BagOfMorphemes> bags;
      for (std::size_t i = start; i < end; ++i) {
        const WordRef& ref = refs[pairs[i].first];
        const auto& sentence = train.sentences[ref.sentence];
        words.push_back(word_in_context(sentence, ref.word, config.prompt_options));
        morphemes.push_back(pairs[i].second);
        bags.push_back(content_bag(sentence, ref.word));
      }
      const TrainingBatch batch =
          make_training_batch(std::move(words), std::move(morphemes), std::move(bags));
      nn::Tape<float> tape(true, dropout_seeds.next());
      nn::Var<float> loss = contrastive_loss(tape, model.params, model.config, model.vocab, batch);
      const nn::StepReport step = nn::backprop_step(tape, loss, model.params, tc.optimizer);
      clamp_temperature(model.params, model.config);
      result.log.step_losses.push_back(step.loss);
      loss_sum += step.loss;
      ++batches;
    }

    EncoderEpochRecord record;
    record.epoch = epoch;
    record.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    record.validation_p_at_1 =
        evaluate_retrieval(model, validation, candidates, tc.validation_queries).precision_at_1;
    record.tau = model.tau();
    result.log.epochs.push_back(record);
    if (on_epoch) on_epoch(record, model);
    if (record.validation_p_at_1 > best_p1) {
      best_p1 = record.validation_p_at_1;
      best_params = model.params;
      result.log.best_epoch = epoch;
    }
    if (record.validation_p_at_1 >= tc.target_p_at_1) break;
  }
  model.params = std::move(best_params);
  return result;
}

}  // namespace morphoglot
