#pragma once

#include <sstream>
#include <string>

#include "morphoglot/encoder.hpp"
#include "morphoglot/igt.hpp"

namespace morphoglot::test {

inline Corpus parse_text(const std::string& text, Split split = Split::train) {
  std::istringstream in(text);
  return parse_corpus(in, "test", split);
}

// Two-sentence corpus with shared and distinct morphemes.
inline const char* kTinyCorpus =
    "\\t kani-pa sulo\n"
    "\\m kani-pa sulo\n"
    "\\g dog-PL run\n"
    "\\l Dogs run.\n"
    "\n"
    "\\t sulo-ti kani\n"
    "\\m sulo-ti kani\n"
    "\\g run-PST dog\n"
    "\\l The dog ran.\n";

struct EncoderFixture {
  Corpus corpus;
  EncoderModel model;
  TrainingBatch batch;
};

/// A tiny randomly initialized encoder plus a three-pair training batch
/// drawn from kTinyCorpus, with prompts short enough for exhaustive checks.
inline EncoderFixture tiny_encoder_fixture(int d_model, int layers, int heads,
                                           std::uint64_t seed = 1) {
  EncoderFixture f;
  f.corpus = parse_text(kTinyCorpus);
  EncoderConfig config;
  config.transformer.d_model = d_model;
  config.transformer.n_layers = layers;
  config.transformer.n_heads = heads;
  config.transformer.d_ff = 2 * d_model;
  config.transformer.max_seq_len = 64;
  config.embedding_dim = d_model;
  config.prompt_options = PromptOptions{false, false, false};
  f.model = make_encoder(config, build_vocab(f.corpus, config.prompt_options), seed);
  const auto& s0 = f.corpus.sentences[0];
  const auto& s1 = f.corpus.sentences[1];
  std::vector<WordInContext> words{word_in_context(s0, 0, config.prompt_options),
                                   word_in_context(s0, 1, config.prompt_options),
                                   word_in_context(s1, 0, config.prompt_options)};
  std::vector<Morpheme> morphemes{Morpheme("pa", "PL"), Morpheme("sulo", "run"),
                                  Morpheme("ti", "PST")};
  std::vector<BagOfMorphemes> bags{bag_of_morphemes(s0, 0), bag_of_morphemes(s0, 1),
                                   bag_of_morphemes(s1, 0)};
  f.batch = make_training_batch(std::move(words), std::move(morphemes), std::move(bags));
  return f;
}

}  // namespace morphoglot::test
