#include "morphoglot/pipeline.hpp"

#include <iomanip>
#include <sstream>

#include "morphoglot/evaluation.hpp"
#include "morphoglot/random.hpp"

namespace morphoglot {

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  out << std::setprecision(10);
  const auto& et = encoder.transformer;
  const auto& dt = decoder.transformer;
  auto flag = [](bool b) { return b ? "true" : "false"; };
  out << "seed = " << seed << "\n\n[encoder]\n"
      << "d_model = " << et.d_model << "\nn_layers = " << et.n_layers
      << "\nn_heads = " << et.n_heads << "\nd_ff = " << et.d_ff
      << "\nmax_seq_len = " << et.max_seq_len << "\ndropout = " << et.dropout_rate
      << "\nembedding_dim = " << encoder.embedding_dim
      << "\npooling = " << (encoder.pooling == Pooling::cls ? "cls" : "mean")
      << "\ntranscript = " << flag(encoder.prompt_options.include_transcript)
      << "\ntranslation = " << flag(encoder.prompt_options.include_translation)
      << "\nchar_spacing = " << flag(encoder.prompt_options.char_spacing)
      << "\ntau_init = " << encoder.tau_init << "\nbatch_size = " << encoder_train.batch_size
      << "\nepochs = " << encoder_train.epochs
      << "\nlr = " << encoder_train.optimizer.learning_rate
      << "\nwarmup = " << encoder_train.optimizer.warmup_steps
      << "\nweight_decay = " << encoder_train.optimizer.weight_decay
      << "\nclip = " << encoder_train.optimizer.clip_norm
      << "\nsamples_per_word = " << encoder_train.samples_per_word
      << "\nvalidation_queries = " << encoder_train.validation_queries
      << "\ntarget_p1 = " << encoder_train.target_p_at_1 << "\n\n[decoder]\n"
      << "d_model = " << dt.d_model << "\nn_layers = " << dt.n_layers
      << "\nn_heads = " << dt.n_heads << "\nd_ff = " << dt.d_ff
      << "\nmax_seq_len = " << dt.max_seq_len << "\ndropout = " << dt.dropout_rate
      << "\nkappa_init = " << decoder.kappa_init
      << "\nnormalize_hidden = " << flag(decoder.normalize_hidden)
      << "\nbatch_size = " << decoder_train.batch_size << "\nepochs = " << decoder_train.epochs
      << "\nlr = " << decoder_train.optimizer.learning_rate
      << "\nwarmup = " << decoder_train.optimizer.warmup_steps
      << "\nweight_decay = " << decoder_train.optimizer.weight_decay
      << "\nclip = " << decoder_train.optimizer.clip_norm
      << "\nvalidation_sentences = " << decoder_train.validation_sentences
      << "\ntarget_mer = " << decoder_train.target_mer << "\n\n[decode]\n"
      << "beam_width = " << decode.beam_width << "\nmax_len = " << decode.max_len
      << "\ntop_k = " << decode.top_k << "\n";
  return out.str();
}

RunConfig quick_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.encoder.transformer.d_model = 64;
  c.encoder.transformer.n_heads = 4;
  c.encoder.transformer.d_ff = 256;
  c.encoder.transformer.max_seq_len = 64;
  c.encoder.embedding_dim = 64;
  c.encoder.prompt_options = PromptOptions{false, false, false};
  c.encoder_train.epochs = 6;
  c.encoder_train.optimizer.learning_rate = 1e-3;
  c.encoder_train.validation_queries = 300;
  c.decoder.transformer.d_model = 64;
  c.decoder.transformer.d_ff = 256;
  c.decoder_train.epochs = 6;
  c.decoder_train.optimizer.learning_rate = 1e-3;
  c.decoder_train.validation_sentences = 100;
  return c;
}

RunConfig full_config(std::uint64_t seed) {
  RunConfig c;
  c.seed = seed;
  c.encoder.transformer.d_model = 768;
  c.encoder.transformer.n_layers = 12;
  c.encoder.transformer.n_heads = 12;
  c.encoder.transformer.d_ff = 3072;
  c.encoder.embedding_dim = 768;
  c.decoder.transformer.d_model = 512;
  c.decoder.transformer.n_layers = 4;
  c.decoder.transformer.n_heads = 8;
  c.decoder.transformer.d_ff = 2048;
  return c;
}

RunConfig preset_config(const std::string& name, std::uint64_t seed) {
  if (name == "desk") {
    RunConfig c;
    c.seed = seed;
    return c;
  }
  if (name == "quick") return quick_config(seed);
  if (name == "full") return full_config(seed);
  throw std::invalid_argument("unknown preset '" + name + "' (desk, quick, full)");
}

PipelineResult run_pipeline(const Corpus& train, const Corpus* dev, const RunConfig& config) {
  EncoderTrainConfig et = config.encoder_train;
  et.seed = config.seed;
  EncoderTrainResult enc = train_encoder(train, dev, config.encoder, et);
  enc.model.run_config = config.to_ini();
  Lexicon lexicon = build_lexicon(enc.model, train);
  DecoderTrainConfig dt = config.decoder_train;
  dt.seed = config.seed;
  dt.validation_decode = config.decode;
  DecoderTrainResult dec = train_decoder(enc.model, lexicon, train, dev, config.decoder, dt);
  dec.model.run_config = enc.model.run_config;
  return {std::move(enc.model), std::move(lexicon), std::move(dec.model), std::move(enc.log),
          std::move(dec.log)};
}

std::string SweepResult::to_tsv(const std::string& header_comment) const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6);
  std::istringstream comment(header_comment);
  for (std::string line; std::getline(comment, line);) out << "# " << line << '\n';
  out << "size\tseed\tgloss_mer\tsegment_mer\n";
  for (const auto& r : rows)
    out << r.size << '\t' << r.seed << '\t' << r.gloss_mer << '\t' << r.segment_mer << '\n';
  for (const auto& s : summary)
    out << s.size << "\tmean\t" << s.mean_gloss_mer << '\t' << s.mean_segment_mer << '\n';
  return out.str();
}

SweepResult run_sweep(const Corpus& pool, const Corpus& test, const std::vector<int>& sizes,
                      int seeds, const RunConfig& config, const SweepProgress& progress) {
  if (seeds < 1) throw std::invalid_argument("sweep: need at least one seed");
  for (int size : sizes)
    if (size < 1 || static_cast<std::size_t>(size) > pool.size())
      throw std::invalid_argument("sweep: size " + std::to_string(size) +
                                  " exceeds the pool of " + std::to_string(pool.size()));
  SweepResult result;
  for (int seed = 0; seed < seeds; ++seed) {
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng::stream(config.seed + static_cast<std::uint64_t>(seed), "sweep-subset");
    rng.shuffle(order);
    for (int size : sizes) {
      Corpus train;
      train.split = Split::train;
      for (int i = 0; i < size; ++i) train.sentences.push_back(pool.sentences[order[static_cast<std::size_t>(i)]]);
      RunConfig run = config;
      run.seed = config.seed + static_cast<std::uint64_t>(seed);
      const PipelineResult model = run_pipeline(train, nullptr, run);
      const Evaluation eval = evaluate_glosser(model.encoder, model.decoder, model.lexicon, test,
                                               LexiconSetting::train, config.decode);
      SweepRow row{size, seed, eval.report.gloss_mer, eval.report.segment_mer};
      result.rows.push_back(row);
      if (progress) progress(row);
    }
  }
  for (int size : sizes) {
    SweepSummary s{size, 0.0, 0.0};
    for (const auto& r : result.rows)
      if (r.size == size) {
        s.mean_gloss_mer += r.gloss_mer / seeds;
        s.mean_segment_mer += r.segment_mer / seeds;
      }
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace morphoglot
