#include "morphoglot/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <limits>
#include <numeric>

#include "morphoglot/metrics.hpp"
#include "morphoglot/unicode.hpp"

namespace morphoglot {

double DecoderModel::kappa() const {
  return std::exp(-static_cast<double>(params["dec.log_inv_kappa"].value(0, 0)));
}

void DecoderModel::check_lexicon(const Lexicon& lexicon) const {
  if (lexicon.encoder_fingerprint() != encoder_fingerprint)
    throw StaleLexicon("decoder is bound to encoder " + nn::to_hex(encoder_fingerprint) +
                       " but the lexicon was built with " +
                       nn::to_hex(lexicon.encoder_fingerprint()));
  if (lexicon.dim() != embedding_dim)
    throw StaleLexicon("lexicon embedding width differs from the decoder's");
}

DecoderModel make_decoder(const DecoderConfig& config, int embedding_dim,
                          const nn::Fingerprint& encoder_fingerprint, std::uint64_t seed) {
  DecoderModel model;
  model.config = config;
  model.config.transformer.causal = true;
  model.config.transformer.validate();
  model.embedding_dim = embedding_dim;
  model.encoder_fingerprint = encoder_fingerprint;
  Rng rng = Rng::stream(seed, "decoder-init");
  const int d = model.config.transformer.d_model;
  nn::add_linear(model.params, "dec.in_proj", embedding_dim, d, rng);
  nn::init_normal(model.params.add("dec.bos", 1, embedding_dim),
                  rng, 1.0 / std::sqrt(static_cast<double>(embedding_dim)));
  nn::init_transformer_stack(model.params, "dec", model.config.transformer, rng);
  nn::add_linear(model.params, "dec.out_proj", d, embedding_dim, rng);
  model.params.add("dec.log_inv_kappa", 1, 1, false).value(0, 0) =
      static_cast<float>(-std::log(config.kappa_init));
  return model;
}

std::string DecoderModel::serialize() const {
  const auto& tc = config.transformer;
  nn::Metadata meta{
      {"kind", "decoder"},
      {"d_model", std::to_string(tc.d_model)},
      {"n_layers", std::to_string(tc.n_layers)},
      {"n_heads", std::to_string(tc.n_heads)},
      {"d_ff", std::to_string(tc.d_ff)},
      {"max_seq_len", std::to_string(tc.max_seq_len)},
      {"dropout_rate", std::to_string(tc.dropout_rate)},
      {"norm", "pre"},
      {"embedding_dim", std::to_string(embedding_dim)},
      {"normalize_hidden", config.normalize_hidden ? "1" : "0"},
      {"kappa_init", std::to_string(config.kappa_init)},
      {"kappa_min", std::to_string(config.kappa_min)},
      {"kappa_max", std::to_string(config.kappa_max)},
      {"kappa", std::to_string(kappa())},
      {"encoder_fingerprint", nn::to_hex(encoder_fingerprint)},
  };
  if (!run_config.empty()) meta["run_config"] = run_config;
  return nn::serialize_checkpoint(params, nn::format_metadata(meta));
}

DecoderModel DecoderModel::deserialize(const std::string& bytes) {
  nn::Checkpoint ckpt = nn::deserialize_checkpoint(bytes);
  const nn::Metadata meta = nn::parse_metadata(ckpt.metadata);
  auto get = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw nn::FormatError("decoder checkpoint missing '" + key + "'");
    return it->second;
  };
  if (get("kind") != "decoder") throw nn::FormatError("checkpoint is not a decoder");
  DecoderModel model;
  auto& tc = model.config.transformer;
  tc.d_model = std::stoi(get("d_model"));
  tc.n_layers = std::stoi(get("n_layers"));
  tc.n_heads = std::stoi(get("n_heads"));
  tc.d_ff = std::stoi(get("d_ff"));
  tc.max_seq_len = std::stoi(get("max_seq_len"));
  tc.dropout_rate = std::stod(get("dropout_rate"));
  tc.causal = true;
  model.embedding_dim = std::stoi(get("embedding_dim"));
  model.config.normalize_hidden = get("normalize_hidden") == "1";
  model.config.kappa_init = std::stod(get("kappa_init"));
  model.config.kappa_min = std::stod(get("kappa_min"));
  model.config.kappa_max = std::stod(get("kappa_max"));
  model.encoder_fingerprint = nn::from_hex(get("encoder_fingerprint"));
  if (auto it = meta.find("run_config"); it != meta.end()) model.run_config = it->second;
  model.params = std::move(ckpt.params);
  return model;
}

void save_decoder(const std::string& path, const DecoderModel& model) {
  nn::write_file(path, model.serialize());
}

DecoderModel load_decoder(const std::string& path) {
  return DecoderModel::deserialize(nn::read_file(path));
}

Eigen::VectorXf decoder_logits(const DecoderModel& model, const Lexicon& lexicon,
                               const Eigen::VectorXf& word_vec,
                               const std::vector<std::size_t>& prefix) {
  model.check_lexicon(lexicon);
  auto& params = const_cast<nn::ParameterSet<float>&>(model.params);
  auto tape = nn::Tape<float>::inference();
  const Matrix<float> word = word_vec.transpose();
  const std::vector<std::vector<nn::Index>> prefixes{
      std::vector<nn::Index>(prefix.begin(), prefix.end())};
  nn::Var<float> logits = decoder_logits_batch(tape, params, model.config, word,
                                               lexicon.embeddings(), prefixes, true);
  return logits.value().row(0).transpose();
}

namespace {

// Log-softmax in double precision.
Eigen::VectorXd log_softmax(const Eigen::VectorXf& logits) {
  const Eigen::VectorXd z = logits.cast<double>();
  const double mx = z.maxCoeff();
  const double lse = mx + std::log((z.array() - mx).exp().sum());
  return z.array() - lse;
}

std::vector<Alternative> top_alternatives(const Eigen::VectorXd& log_probs, int k) {
  std::vector<std::size_t> order(static_cast<std::size_t>(log_probs.size()));
  std::iota(order.begin(), order.end(), 0);
  const auto take = std::min(order.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double la = log_probs(static_cast<nn::Index>(a));
                      const double lb = log_probs(static_cast<nn::Index>(b));
                      return la != lb ? la > lb : a < b;
                    });
  std::vector<Alternative> out;
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({order[i], static_cast<float>(std::exp(log_probs(static_cast<nn::Index>(order[i]))))});
  return out;
}

bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.finished != b.finished) return a.finished;
  return a.indices < b.indices;
}

}  // namespace

DecodeResult beam_decode(const DecoderModel& model, const Lexicon& lexicon,
                         const Eigen::VectorXf& word_vec, const DecodeOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("beam_decode: max_len must be >= 1");
  if (options.beam_width < 1) throw std::invalid_argument("beam_decode: beam_width must be >= 1");
  model.check_lexicon(lexicon);
  const auto width = static_cast<std::size_t>(options.beam_width);

  std::vector<BeamHypothesis> live{BeamHypothesis{}};
  std::vector<BeamHypothesis> finished;
  for (int step = 0; step < options.max_len && !live.empty(); ++step) {
    const bool last = step + 1 == options.max_len;
    std::vector<BeamHypothesis> pool = finished;
    for (const auto& h : live) {
      const Eigen::VectorXd lp = log_softmax(decoder_logits(model, lexicon, word_vec, h.indices));
      const std::vector<Alternative> alternatives = top_alternatives(lp, options.top_k);
      // A hypothesis can contribute at most `width` survivors.
      const std::vector<Alternative> best = top_alternatives(lp, options.beam_width);
      for (const auto& cand : best) {
        BeamHypothesis next = h;
        next.indices.push_back(cand.index);
        next.log_prob = h.log_prob + lp(static_cast<nn::Index>(cand.index));
        next.steps.push_back({cand.index, static_cast<float>(std::exp(lp(static_cast<nn::Index>(cand.index)))),
                              alternatives});
        next.finished = cand.index == Lexicon::kEos || last;
        pool.push_back(std::move(next));
      }
    }
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > width) pool.resize(width);
    finished.clear();
    live.clear();
    for (auto& h : pool) (h.finished ? finished : live).push_back(std::move(h));
  }

  const BeamHypothesis& top = *std::min_element(finished.begin(), finished.end(), better);
  DecodeResult result;
  result.log_prob = top.log_prob;
  for (std::size_t i = 0; i < top.indices.size(); ++i) {
    if (top.indices[i] == Lexicon::kEos) break;
    result.indices.push_back(top.indices[i]);
    result.steps.push_back(top.steps[i]);
  }
  return result;
}

DecodeResult beam_decode(const EncoderModel& encoder, const DecoderModel& model,
                         const Lexicon& lexicon, const WordInContext& word,
                         const DecodeOptions& options) {
  lexicon.check_encoder(encoder);
  return beam_decode(model, lexicon, embed_word(encoder, word), options);
}

namespace {

WordGloss to_word_gloss(const std::string& surface, const DecodeResult& decoded,
                        const Lexicon& lexicon) {
  WordGloss out;
  out.surface = surface;
  out.log_prob = decoded.log_prob;
  for (const auto& step : decoded.steps) {
    out.morphemes.push_back(lexicon.entry(step.index).morpheme);
    out.probabilities.push_back(step.probability);
    std::vector<MorphemeAlternative> alts;
    for (const auto& a : step.alternatives)
      alts.push_back({lexicon.entry(a.index).morpheme, a.probability});
    out.alternatives.push_back(std::move(alts));
  }
  return out;
}

// Decodes words of many sentences, sharing work between identical prompts.
class CachedGlosser {
 public:
  CachedGlosser(const EncoderModel& encoder, const DecoderModel& model, const Lexicon& lexicon,
                const DecodeOptions& options)
      : encoder_(encoder), model_(model), lexicon_(lexicon), options_(options) {
    lexicon.check_encoder(encoder);
    model.check_lexicon(lexicon);
  }

  std::vector<WordGloss> gloss(const IGTSentence& sentence) {
    std::vector<WordGloss> out(sentence.words.size());
    std::vector<std::size_t> pending;
    std::vector<WordInContext> contexts;
    for (std::size_t w = 0; w < sentence.words.size(); ++w) {
      out[w].surface = sentence.words[w];
      if (is_punctuation_only(sentence.words[w])) {
        out[w].punctuation = true;
        continue;
      }
      pending.push_back(w);
      contexts.push_back(word_in_context(sentence, w, encoder_.config.prompt_options));
    }
    std::vector<std::string> prompts;
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      prompts.push_back(render_word_prompt(contexts[i]));
      if (!cache_.count(prompts.back())) missing.push_back(i);
    }
    if (!missing.empty()) {
      std::vector<WordInContext> todo;
      for (auto i : missing) todo.push_back(contexts[i]);
      const Matrix<float> emb = embed_words(encoder_, todo);
      for (std::size_t j = 0; j < missing.size(); ++j) {
        const std::string& key = prompts[missing[j]];
        if (cache_.count(key)) continue;
        cache_[key] = beam_decode(model_, lexicon_,
                                  emb.row(static_cast<nn::Index>(j)).transpose(), options_);
      }
    }
    for (std::size_t i = 0; i < pending.size(); ++i)
      out[pending[i]] = to_word_gloss(sentence.words[pending[i]], cache_.at(prompts[i]), lexicon_);
    return out;
  }

 private:
  const EncoderModel& encoder_;
  const DecoderModel& model_;
  const Lexicon& lexicon_;
  DecodeOptions options_;
  std::map<std::string, DecodeResult> cache_;
};

}  // namespace

SentenceGloss gloss_sentence(const EncoderModel& encoder, const DecoderModel& model,
                             const Lexicon& lexicon, const std::string& transcription,
                             const std::optional<std::string>& translation,
                             const DecodeOptions& options) {
  IGTSentence sentence;
  sentence.words = split_whitespace(transcription);
  sentence.translation = translation;
  CachedGlosser glosser(encoder, model, lexicon, options);
  return SentenceGloss{glosser.gloss(sentence)};
}

Corpus gloss_corpus(const EncoderModel& encoder, const DecoderModel& model,
                    const Lexicon& lexicon, const Corpus& input, const DecodeOptions& options) {
  CachedGlosser glosser(encoder, model, lexicon, options);
  Corpus out;
  out.split = input.split;
  for (const auto& gold : input.sentences) {
    IGTSentence pred;
    pred.words = gold.words;
    pred.translation = gold.translation;
    pred.language = gold.language;
    for (auto& word : glosser.gloss(gold)) {
      WordAnalysis analysis;
      if (word.punctuation) {
        if (word.surface.find('-') == std::string::npos)
          analysis.emplace_back(word.surface, word.surface);
      } else {
        analysis = std::move(word.morphemes);
      }
      pred.word_analyses.push_back(std::move(analysis));
    }
    out.sentences.push_back(std::move(pred));
  }
  return out;
}

namespace {

struct Example {
  std::size_t word_row = 0;
  std::vector<nn::Index> targets;
};

void clamp_kappa(nn::ParameterSet<float>& params, const DecoderConfig& config) {
  float& v = params["dec.log_inv_kappa"].value(0, 0);
  v = std::clamp(v, static_cast<float>(-std::log(config.kappa_max)),
                 static_cast<float>(-std::log(config.kappa_min)));
}

Corpus validation_subset(const Corpus& corpus, std::size_t cap) {
  if (cap == 0 || corpus.size() <= cap) return corpus;
  Corpus out;
  out.split = corpus.split;
  for (std::size_t i = 0; i < cap; ++i)
    out.sentences.push_back(corpus.sentences[i * corpus.size() / cap]);
  return out;
}

}  // namespace

DecoderTrainResult train_decoder(const EncoderModel& encoder, const Lexicon& lexicon,
                                 const Corpus& train, const Corpus* dev,
                                 const DecoderConfig& config, const DecoderTrainConfig& tc,
                                 const DecoderEpochCallback& on_epoch) {
  if (tc.batch_size < 1) throw std::invalid_argument("train_decoder: batch_size must be >= 1");
  const nn::Fingerprint frozen = encoder.fingerprint();
  lexicon.check_encoder(encoder);

  std::vector<WordInContext> words;
  std::vector<Example> examples;
  for (const auto& sentence : train.sentences) {
    for (std::size_t w = 0; w < sentence.word_analyses.size(); ++w) {
      if (w < sentence.words.size() && is_punctuation_only(sentence.words[w])) continue;
      Example ex;
      for (const auto& m : sentence.word_analyses[w]) {
        if (is_punctuation_only(m.segment)) continue;
        auto idx = lexicon.find(m);
        if (!idx)
          throw std::invalid_argument("train_decoder: morpheme " + m.segment + " (" + m.gloss +
                                      ") is not in the lexicon");
        ex.targets.push_back(static_cast<nn::Index>(*idx));
      }
      if (ex.targets.empty()) continue;
      ex.word_row = words.size();
      words.push_back(word_in_context(sentence, w, encoder.config.prompt_options));
      examples.push_back(std::move(ex));
    }
  }
  if (examples.empty()) throw std::invalid_argument("train_decoder: corpus has no analyzed word");
  const Matrix<float> word_vecs = embed_words(encoder, words);

  DecoderTrainResult result{make_decoder(config, encoder.config.embedding_dim,
                                         lexicon.encoder_fingerprint(), tc.seed),
                            {}};
  DecoderModel& model = result.model;
  const Corpus validation = validation_subset(dev ? *dev : train, tc.validation_sentences);

  Rng shuffle_rng = Rng::stream(tc.seed, "decoder-shuffle");
  Rng dropout_seeds = Rng::stream(tc.seed, "decoder-dropout");
  nn::ParameterSet<float> best_params = model.params;
  double best_mer = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      Matrix<float> batch_vecs(static_cast<nn::Index>(end - start), word_vecs.cols());
      std::vector<std::vector<nn::Index>> targets;
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = examples[order[i]];
        batch_vecs.row(static_cast<nn::Index>(i - start)) =
            word_vecs.row(static_cast<nn::Index>(ex.word_row));
        targets.push_back(ex.targets);
      }
      nn::Tape<float> tape(true, dropout_seeds.next());
      nn::Var<float> loss = decoder_loss(tape, model.params, model.config, batch_vecs,
                                         lexicon.embeddings(), targets);
      const nn::StepReport step = nn::backprop_step(tape, loss, model.params, tc.optimizer);
      clamp_kappa(model.params, model.config);
      result.log.step_losses.push_back(step.loss);
      loss_sum += step.loss;
      ++batches;
    }

    const Corpus predicted = gloss_corpus(encoder, model, lexicon, validation, tc.validation_decode);
    const EvalReport report = evaluate_predictions(validation, predicted);
    DecoderEpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(batches);
    record.validation_gloss_mer = report.gloss_mer;
    record.validation_segment_mer = report.segment_mer;
    record.kappa = model.kappa();
    result.log.epochs.push_back(record);
    if (on_epoch) on_epoch(record, model);
    if (record.validation_gloss_mer < best_mer) {
      best_mer = record.validation_gloss_mer;
      best_params = model.params;
      result.log.best_epoch = epoch;
    }
    if (record.validation_gloss_mer <= tc.target_mer) break;
  }
  model.params = std::move(best_params);
  if (encoder.fingerprint() != frozen)
    throw std::logic_error("train_decoder: encoder parameters changed during training");
  return result;
}

}  // namespace morphoglot
