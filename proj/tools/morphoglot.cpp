#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "morphoglot/analysis.hpp"
#include "morphoglot/evaluation.hpp"
#include "morphoglot/pipeline.hpp"
#include "morphoglot/service.hpp"
#include "morphoglot/synth.hpp"

namespace mg = morphoglot;
using json = nlohmann::json;

namespace {

// Hyperparameter flags layered over a preset; unset flags keep the preset.
struct EncoderFlags {
  std::optional<int> d_model, layers, heads, d_ff, max_seq_len, embedding_dim;
  std::optional<int> batch_size, epochs, warmup, samples_per_word, validation_queries;
  std::optional<double> lr, weight_decay, clip, tau_init, target_p1;
  std::optional<bool> transcript, translation, char_spacing;
  std::optional<std::string> pooling;

  void add(CLI::App* app) {
    app->add_option("--enc-d-model", d_model, "Encoder hidden size");
    app->add_option("--enc-layers", layers, "Encoder layers");
    app->add_option("--enc-heads", heads, "Encoder attention heads");
    app->add_option("--enc-d-ff", d_ff, "Encoder feed-forward size");
    app->add_option("--enc-max-seq-len", max_seq_len, "Longest prompt in characters");
    app->add_option("--embedding-dim", embedding_dim, "Shared embedding dimension n");
    app->add_option("--enc-batch-size", batch_size, "Words per contrastive batch");
    app->add_option("--enc-epochs", epochs, "Encoder epochs");
    app->add_option("--enc-warmup", warmup, "Linear warmup steps");
    app->add_option("--enc-lr", lr, "Encoder learning rate");
    app->add_option("--enc-weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--enc-clip", clip, "Global gradient norm clip");
    app->add_option("--tau-init", tau_init, "Initial temperature");
    app->add_option("--samples-per-word", samples_per_word, "Positives drawn per word per epoch");
    app->add_option("--validation-queries", validation_queries, "Retrieval queries per validation");
    app->add_option("--target-p1", target_p1, "Stop once validation P@1 reaches this");
    app->add_option("--transcript", transcript, "Include the sentence transcript in word prompts");
    app->add_option("--translation", translation, "Include the translation in word prompts");
    app->add_option("--char-spacing", char_spacing, "Space-separate characters in prompts");
    app->add_option("--pooling", pooling, "mean or cls")->check(CLI::IsMember({"mean", "cls"}));
  }

  void apply(mg::RunConfig& c) const {
    auto& t = c.encoder.transformer;
    auto& o = c.encoder_train.optimizer;
    if (d_model) t.d_model = *d_model;
    if (layers) t.n_layers = *layers;
    if (heads) t.n_heads = *heads;
    if (d_ff) t.d_ff = *d_ff;
    if (max_seq_len) t.max_seq_len = *max_seq_len;
    if (embedding_dim) c.encoder.embedding_dim = *embedding_dim;
    if (batch_size) c.encoder_train.batch_size = *batch_size;
    if (epochs) c.encoder_train.epochs = *epochs;
    if (warmup) o.warmup_steps = *warmup;
    if (lr) o.learning_rate = *lr;
    if (weight_decay) o.weight_decay = *weight_decay;
    if (clip) o.clip_norm = *clip;
    if (tau_init) c.encoder.tau_init = *tau_init;
    if (samples_per_word) c.encoder_train.samples_per_word = *samples_per_word;
    if (validation_queries) c.encoder_train.validation_queries = static_cast<std::size_t>(*validation_queries);
    if (target_p1) c.encoder_train.target_p_at_1 = *target_p1;
    if (transcript) c.encoder.prompt_options.include_transcript = *transcript;
    if (translation) c.encoder.prompt_options.include_translation = *translation;
    if (char_spacing) c.encoder.prompt_options.char_spacing = *char_spacing;
    if (pooling) c.encoder.pooling = *pooling == "cls" ? mg::Pooling::cls : mg::Pooling::mean;
  }
};

struct DecoderFlags {
  std::optional<int> d_model, layers, heads, d_ff, max_seq_len;
  std::optional<int> batch_size, epochs, warmup, validation_sentences;
  std::optional<double> lr, weight_decay, clip, dropout, kappa_init, target_mer;
  std::optional<bool> normalize_hidden;

  void add(CLI::App* app) {
    app->add_option("--dec-d-model", d_model, "Decoder hidden size");
    app->add_option("--dec-layers", layers, "Decoder blocks");
    app->add_option("--dec-heads", heads, "Decoder attention heads");
    app->add_option("--dec-d-ff", d_ff, "Decoder feed-forward size");
    app->add_option("--dec-max-seq-len", max_seq_len, "Longest morpheme sequence + 2");
    app->add_option("--dec-batch-size", batch_size, "Words per decoder batch");
    app->add_option("--dec-epochs", epochs, "Decoder epochs");
    app->add_option("--dec-warmup", warmup, "Linear warmup steps");
    app->add_option("--dec-lr", lr, "Decoder learning rate");
    app->add_option("--dec-weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--dec-clip", clip, "Global gradient norm clip");
    app->add_option("--dec-dropout", dropout, "Dropout rate");
    app->add_option("--kappa-init", kappa_init, "Initial codebook temperature");
    app->add_option("--normalize-hidden", normalize_hidden, "L2-normalize decoder states");
    app->add_option("--validation-sentences", validation_sentences, "Sentences decoded per validation (0 = all)");
    app->add_option("--target-mer", target_mer, "Stop once validation gloss MER reaches this");
  }

  void apply(mg::RunConfig& c) const {
    auto& t = c.decoder.transformer;
    auto& o = c.decoder_train.optimizer;
    if (d_model) t.d_model = *d_model;
    if (layers) t.n_layers = *layers;
    if (heads) t.n_heads = *heads;
    if (d_ff) t.d_ff = *d_ff;
    if (max_seq_len) t.max_seq_len = *max_seq_len;
    if (dropout) t.dropout_rate = *dropout;
    if (batch_size) c.decoder_train.batch_size = *batch_size;
    if (epochs) c.decoder_train.epochs = *epochs;
    if (warmup) o.warmup_steps = *warmup;
    if (lr) o.learning_rate = *lr;
    if (weight_decay) o.weight_decay = *weight_decay;
    if (clip) o.clip_norm = *clip;
    if (kappa_init) c.decoder.kappa_init = *kappa_init;
    if (normalize_hidden) c.decoder.normalize_hidden = *normalize_hidden;
    if (validation_sentences) c.decoder_train.validation_sentences = static_cast<std::size_t>(*validation_sentences);
    if (target_mer) c.decoder_train.target_mer = *target_mer;
  }
};

struct DecodeFlags {
  std::optional<int> beam_width, max_len, top_k;

  void add(CLI::App* app) {
    app->add_option("--beam-width", beam_width, "Beam width")->check(CLI::PositiveNumber);
    app->add_option("--max-len", max_len, "Maximum morphemes per word")->check(CLI::PositiveNumber);
    app->add_option("--top-k", top_k, "Alternatives reported per position");
  }
  void apply(mg::RunConfig& c) const {
    if (beam_width) c.decode.beam_width = *beam_width;
    if (max_len) c.decode.max_len = *max_len;
    if (top_k) c.decode.top_k = *top_k;
  }
};

struct Flags {
  std::uint64_t seed = 0;
  std::string preset = "desk";
  std::string language = "und";
  EncoderFlags enc;
  DecoderFlags dec;
  DecodeFlags decode;

  mg::RunConfig run_config() const {
    mg::RunConfig c = mg::preset_config(preset, seed);
    enc.apply(c);
    dec.apply(c);
    decode.apply(c);
    return c;
  }
};

// Artifact header: effective run configuration plus the invocation's own
// settings, one "# " line each.
std::string header_text(const std::string& command, const std::string& run_config,
                        const CLI::App* sub) {
  std::ostringstream out;
  out << "morphoglot " << command << '\n' << run_config;
  if (sub) {
    out << "\n[" << command << "]\n";
    std::istringstream in(sub->config_to_str(true, false));
    for (std::string line; std::getline(in, line);)
      if (!line.ends_with("=\"\"")) out << line << '\n';
  }
  return out.str();
}

std::string commented(const std::string& text) {
  std::ostringstream out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out << "# " << line << '\n';
  return out.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void emit(const std::optional<std::string>& path, const std::string& content) {
  if (path)
    write_file(*path, content);
  else
    std::cout << content;
}

mg::Corpus read_corpus(const std::string& path, const std::string& language, mg::Split split) {
  return mg::parse_corpus_file(path, language, split);
}

std::string corpus_text(const mg::Corpus& corpus, const std::string& header) {
  std::ostringstream out;
  out << commented(header) << '\n';
  mg::write_corpus(out, corpus);
  return out.str();
}

json report_json(const mg::EvalReport& report, const std::string& header) {
  json j = json::parse(mg::report_to_json(report));
  j["run_config"] = header;
  return j;
}

void log_encoder_epoch(const mg::EncoderEpochRecord& r) {
  std::cerr << "encoder epoch " << r.epoch << " loss " << r.mean_loss << " P@1 "
            << r.validation_p_at_1 << " tau " << r.tau << '\n';
}

void log_decoder_epoch(const mg::DecoderEpochRecord& r) {
  std::cerr << "decoder epoch " << r.epoch << " loss " << r.mean_loss << " gloss MER "
            << r.validation_gloss_mer << " segment MER " << r.validation_segment_mer
            << " kappa " << r.kappa << '\n';
}

mg::Provenance provenance_flag(const std::string& text) { return mg::parse_provenance(text); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"morphoglot: retrieval-constrained interlinear glossing"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Sectioned key = value file; sections name subcommands")
      ->envname("MORPHOGLOT_CONFIG");
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", f.seed, "Random seed")->capture_default_str();
    sub->add_option("--language", f.language, "Language code recorded on corpora");
  };
  auto presets = [&](CLI::App* sub) {
    sub->add_option("--preset", f.preset, "Base configuration: desk, quick or full")
        ->check(CLI::IsMember({"desk", "quick", "full"}))
        ->capture_default_str();
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic IGT corpus");
  std::optional<std::string> synth_spec, synth_out;
  int synth_sentences = 2000;
  synth->add_option("--spec", synth_spec, "Language spec file (default: standard language)")
      ->check(CLI::ExistingFile);
  synth->add_option("--sentences,-n", synth_sentences, "Number of sentences")
      ->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--out,-o", synth_out, "Output corpus (default: stdout)");
  int synth_heldout = 0;
  std::optional<std::string> synth_heldout_out;
  std::optional<double> synth_target_oov;
  auto* heldout_opt = synth->add_option("--heldout", synth_heldout, "Extra sentences of the same language for evaluation")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--heldout-out", synth_heldout_out, "Held-out corpus file")->needs(heldout_opt);
  synth->add_option("--target-oov", synth_target_oov, "Choose the held-out split to reach this p_oov")
      ->check(CLI::Range(0.0, 1.0))->needs(heldout_opt);
  synth->add_option("--seed", f.seed, "Overrides the spec seed when given");

  // train-encoder
  auto* train_enc = app.add_subcommand("train-encoder", "Train the contrastive dual encoder");
  std::string te_train, te_out;
  std::optional<std::string> te_dev, te_log;
  train_enc->add_option("--train", te_train, "Training corpus")->required()->check(CLI::ExistingFile);
  train_enc->add_option("--dev", te_dev, "Validation corpus")->check(CLI::ExistingFile);
  train_enc->add_option("--out,-o", te_out, "Encoder checkpoint")->required();
  train_enc->add_option("--log", te_log, "Per-epoch TSV log");
  common(train_enc);
  presets(train_enc);
  f.enc.add(train_enc);

  // build-lexicon
  auto* build_lex = app.add_subcommand("build-lexicon", "Embed every training morpheme");
  std::string bl_encoder, bl_train, bl_out;
  std::optional<std::string> bl_tsv;
  build_lex->add_option("--encoder", bl_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  build_lex->add_option("--train", bl_train, "Training corpus")->required()->check(CLI::ExistingFile);
  build_lex->add_option("--out,-o", bl_out, "Lexicon file")->required();
  build_lex->add_option("--tsv", bl_tsv, "Also write the entries as TSV");
  common(build_lex);

  // train-decoder
  auto* train_dec = app.add_subcommand("train-decoder", "Train the codebook-constrained decoder");
  std::string td_encoder, td_lexicon, td_train, td_out;
  std::optional<std::string> td_dev, td_log;
  train_dec->add_option("--encoder", td_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  train_dec->add_option("--lexicon", td_lexicon, "Lexicon file")->required()->check(CLI::ExistingFile);
  train_dec->add_option("--train", td_train, "Training corpus")->required()->check(CLI::ExistingFile);
  train_dec->add_option("--dev", td_dev, "Validation corpus")->check(CLI::ExistingFile);
  train_dec->add_option("--out,-o", td_out, "Decoder checkpoint")->required();
  train_dec->add_option("--log", td_log, "Per-epoch TSV log");
  common(train_dec);
  presets(train_dec);
  f.dec.add(train_dec);
  f.decode.add(train_dec);

  // gloss
  auto* gloss = app.add_subcommand("gloss", "Gloss a corpus or a single sentence");
  std::string g_encoder, g_decoder, g_lexicon;
  std::optional<std::string> g_input, g_text, g_translation, g_out;
  bool g_json = false;
  gloss->add_option("--encoder", g_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  gloss->add_option("--decoder", g_decoder, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  gloss->add_option("--lexicon", g_lexicon, "Lexicon file")->required()->check(CLI::ExistingFile);
  auto* g_input_opt = gloss->add_option("--input,-i", g_input, "Corpus to gloss")->check(CLI::ExistingFile);
  auto* g_text_opt = gloss->add_option("--text", g_text, "One transcription line");
  g_input_opt->excludes(g_text_opt);
  gloss->add_option("--translation", g_translation, "Translation for --text")->needs(g_text_opt);
  gloss->add_flag("--json", g_json, "Emit JSON with probabilities and alternatives");
  gloss->add_option("--out,-o", g_out, "Output file (default: stdout)");
  common(gloss);
  f.decode.add(gloss);

  // eval
  auto* eval = app.add_subcommand("eval", "Score the glosser against a gold corpus");
  std::string e_encoder, e_decoder, e_lexicon, e_gold;
  std::optional<std::string> e_out, e_predictions;
  bool e_extended = false, e_table = false;
  eval->add_option("--encoder", e_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--decoder", e_decoder, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--lexicon", e_lexicon, "Lexicon file")->required()->check(CLI::ExistingFile);
  eval->add_option("--gold", e_gold, "Gold corpus")->required()->check(CLI::ExistingFile);
  eval->add_flag("--extended", e_extended, "Also score with the gold morphemes added to the lexicon");
  eval->add_flag("--table", e_table, "Print a text table instead of JSON");
  eval->add_option("--out,-o", e_out, "Report file (default: stdout)");
  eval->add_option("--predictions", e_predictions, "Write the predicted corpus");
  common(eval);
  f.decode.add(eval);

  // extend-lexicon
  auto* extend = app.add_subcommand("extend-lexicon", "Add morphemes without retraining");
  std::string x_encoder, x_lexicon, x_out, x_provenance = "user";
  std::optional<std::string> x_corpus, x_tsv;
  std::vector<std::string> x_entries;
  extend->add_option("--encoder", x_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  extend->add_option("--lexicon", x_lexicon, "Lexicon file to extend")->required()->check(CLI::ExistingFile);
  extend->add_option("--corpus", x_corpus, "Add every morpheme of this corpus")->check(CLI::ExistingFile);
  extend->add_option("--entry", x_entries, "segment=gloss pair (repeatable)");
  extend->add_option("--provenance", x_provenance, "user or eval_oracle")
      ->check(CLI::IsMember({"user", "eval_oracle"}))->capture_default_str();
  extend->add_option("--out,-o", x_out, "Extended lexicon file")->required();
  extend->add_option("--tsv", x_tsv, "Also write the entries as TSV");
  common(extend);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "MER as a function of training-set size");
  std::vector<int> s_sizes;
  std::optional<std::string> s_pool, s_test, s_out, s_spec;
  int s_seeds = 3, s_pool_size = 2000, s_test_size = 300;
  sweep->add_option("--sizes", s_sizes, "Comma-separated training sizes")->required()->delimiter(',');
  sweep->add_option("--seeds", s_seeds, "Independent subsets per size")
      ->check(CLI::PositiveNumber)->capture_default_str();
  sweep->add_option("--pool", s_pool, "Corpus to draw subsets from")->check(CLI::ExistingFile);
  sweep->add_option("--test", s_test, "Held-out corpus")->check(CLI::ExistingFile);
  sweep->add_option("--spec", s_spec, "Synthetic spec used when --pool/--test are absent")
      ->check(CLI::ExistingFile);
  sweep->add_option("--pool-size", s_pool_size, "Synthetic pool sentences")->capture_default_str();
  sweep->add_option("--test-size", s_test_size, "Synthetic test sentences")->capture_default_str();
  sweep->add_option("--out,-o", s_out, "TSV output (default: stdout)");
  common(sweep);
  presets(sweep);
  f.enc.add(sweep);
  f.dec.add(sweep);
  f.decode.add(sweep);

  // analogy
  auto* analogy = app.add_subcommand("analogy", "Transformation consistency and 2-D projection");
  std::string a_encoder;
  std::optional<std::string> a_spec, a_out, a_pca, a_corpus;
  analogy->add_option("--encoder", a_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  analogy->add_option("--spec", a_spec, "Synthetic spec for the paradigm grid (default: standard)")
      ->check(CLI::ExistingFile);
  analogy->add_option("--out,-o", a_out, "Per-group TSV (default: stdout)");
  analogy->add_option("--pca", a_pca, "Write 2-D coordinates of the grid (or --corpus) words");
  analogy->add_option("--corpus", a_corpus, "Project this corpus's words instead of the grid")
      ->check(CLI::ExistingFile);
  common(analogy);

  // flops
  auto* flops = app.add_subcommand("flops", "Analytic inference cost per sentence");
  std::optional<std::string> fl_out;
  flops->add_option("--out,-o", fl_out, "TSV output (default: stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP glossing service");
  std::string sv_encoder, sv_decoder, sv_lexicon, sv_cors = "*";
  std::optional<std::string> sv_host;
  std::optional<int> sv_port;
  serve->add_option("--encoder", sv_encoder, "Encoder checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--decoder", sv_decoder, "Decoder checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--lexicon", sv_lexicon, "Lexicon file")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", sv_host, "Bind address (env MORPHOGLOT_HOST, default 127.0.0.1)");
  serve->add_option("--port", sv_port, "Port (env MORPHOGLOT_PORT, default 8080)");
  serve->add_option("--cors-origin", sv_cors, "Access-Control-Allow-Origin value")->capture_default_str();
  f.decode.add(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      mg::SynthSpec spec = synth_spec ? mg::read_synth_spec(*synth_spec) : mg::SynthSpec::standard();
      if (synth->count("--seed")) spec.seed = f.seed;
      if (synth_heldout > 0 && !synth_heldout_out)
        throw std::invalid_argument("synth: --heldout needs --heldout-out");
      mg::Corpus corpus = mg::generate_corpus(spec, synth_sentences + synth_heldout);
      mg::Corpus heldout;
      heldout.split = mg::Split::test;
      std::ostringstream cfg;
      cfg << "spec = " << (synth_spec ? *synth_spec : std::string("standard"))
          << "\nseed = " << spec.seed << "\nsentences = " << synth_sentences
          << "\nheldout = " << synth_heldout << '\n';
      if (synth_target_oov) {
        const double fraction = static_cast<double>(synth_sentences) / (synth_sentences + synth_heldout);
        mg::OovSplit split = mg::split_with_target_oov(corpus, fraction, *synth_target_oov, spec.seed);
        cfg << "target_oov = " << *synth_target_oov << "\nachieved_oov = " << split.achieved_oov << '\n';
        if (!split.feasible)
          std::cerr << "warning: achieved p_oov " << split.achieved_oov << " misses the target\n";
        corpus = std::move(split.train);
        heldout = std::move(split.eval);
      } else if (synth_heldout > 0) {
        heldout.sentences.assign(corpus.sentences.begin() + synth_sentences, corpus.sentences.end());
        corpus.sentences.resize(static_cast<std::size_t>(synth_sentences));
      }
      const std::string header = "morphoglot synth\n" + cfg.str();
      emit(synth_out, corpus_text(corpus, header));
      if (synth_heldout_out) write_file(*synth_heldout_out, corpus_text(heldout, header));
    } else if (*train_enc) {
      const mg::RunConfig cfg = f.run_config();
      const mg::Corpus train = read_corpus(te_train, f.language, mg::Split::train);
      std::optional<mg::Corpus> dev;
      if (te_dev) dev = read_corpus(*te_dev, f.language, mg::Split::dev);
      mg::EncoderTrainConfig tc = cfg.encoder_train;
      tc.seed = cfg.seed;
      auto result = mg::train_encoder(train, dev ? &*dev : nullptr, cfg.encoder, tc,
                                      [](const mg::EncoderEpochRecord& r, const mg::EncoderModel&) {
                                        log_encoder_epoch(r);
                                      });
      result.model.run_config = header_text("train-encoder", cfg.to_ini(), train_enc);
      mg::save_encoder(te_out, result.model);
      if (te_log) {
        std::ostringstream log;
        log << commented(result.model.run_config) << "epoch\tmean_loss\tp_at_1\ttau\n";
        for (const auto& r : result.log.epochs)
          log << r.epoch << '\t' << r.mean_loss << '\t' << r.validation_p_at_1 << '\t'
              << r.tau << '\n';
        write_file(*te_log, log.str());
      }
      std::cerr << "best epoch " << result.log.best_epoch << ", wrote " << te_out << '\n';
    } else if (*build_lex) {
      const mg::EncoderModel encoder = mg::load_encoder(bl_encoder);
      const mg::Corpus train = read_corpus(bl_train, f.language, mg::Split::train);
      const mg::Lexicon lexicon = mg::build_lexicon(encoder, train);
      mg::save_lexicon(bl_out, lexicon);
      if (bl_tsv)
        write_file(*bl_tsv, commented(header_text("build-lexicon", encoder.run_config, build_lex)) +
                                lexicon.to_tsv());
      std::cerr << "lexicon: " << lexicon.size() - 1 << " morphemes\n";
    } else if (*train_dec) {
      const mg::EncoderModel encoder = mg::load_encoder(td_encoder);
      const mg::Lexicon lexicon = mg::load_lexicon(td_lexicon);
      const mg::RunConfig cfg = f.run_config();
      const mg::Corpus train = read_corpus(td_train, f.language, mg::Split::train);
      std::optional<mg::Corpus> dev;
      if (td_dev) dev = read_corpus(*td_dev, f.language, mg::Split::dev);
      mg::DecoderTrainConfig tc = cfg.decoder_train;
      tc.seed = cfg.seed;
      tc.validation_decode = cfg.decode;
      auto result = mg::train_decoder(encoder, lexicon, train, dev ? &*dev : nullptr, cfg.decoder,
                                      tc, [](const mg::DecoderEpochRecord& r, const mg::DecoderModel&) {
                                        log_decoder_epoch(r);
                                      });
      result.model.run_config = header_text("train-decoder", cfg.to_ini(), train_dec);
      mg::save_decoder(td_out, result.model);
      if (td_log) {
        std::ostringstream log;
        log << commented(result.model.run_config)
            << "epoch\tmean_loss\tgloss_mer\tsegment_mer\tkappa\n";
        for (const auto& r : result.log.epochs)
          log << r.epoch << '\t' << r.mean_loss << '\t' << r.validation_gloss_mer << '\t'
              << r.validation_segment_mer << '\t' << r.kappa << '\n';
        write_file(*td_log, log.str());
      }
      std::cerr << "best epoch " << result.log.best_epoch << ", wrote " << td_out << '\n';
    } else if (*gloss) {
      if (!g_input && !g_text) throw std::invalid_argument("gloss: pass --input or --text");
      const mg::EncoderModel encoder = mg::load_encoder(g_encoder);
      const mg::DecoderModel decoder = mg::load_decoder(g_decoder);
      const mg::Lexicon lexicon = mg::load_lexicon(g_lexicon);
      mg::RunConfig cfg;
      f.decode.apply(cfg);
      const std::string header = header_text("gloss", decoder.run_config, gloss);
      if (g_text) {
        const auto result = mg::gloss_sentence(encoder, decoder, lexicon, *g_text, g_translation, cfg.decode);
        json words = json::array();
        for (const auto& w : result.words) {
          json morphemes = json::array();
          for (std::size_t i = 0; i < w.morphemes.size(); ++i) {
            json alts = json::array();
            for (const auto& a : w.alternatives[i])
              alts.push_back({{"segment", a.morpheme.segment}, {"gloss", a.morpheme.gloss},
                              {"probability", a.probability}});
            morphemes.push_back({{"segment", w.morphemes[i].segment},
                                 {"gloss", w.morphemes[i].gloss},
                                 {"probability", w.probabilities[i]},
                                 {"alternatives", alts}});
          }
          words.push_back({{"surface", w.surface}, {"punctuation", w.punctuation},
                           {"log_prob", w.log_prob}, {"morphemes", morphemes}});
        }
        if (g_json) {
          emit(g_out, json({{"words", words}, {"run_config", header}}).dump(2) + "\n");
        } else {
          std::string m, g;
          for (const auto& w : result.words) {
            std::string ms, gs;
            for (std::size_t i = 0; i < w.morphemes.size(); ++i) {
              ms += (i ? "-" : "") + w.morphemes[i].segment;
              gs += (i ? "-" : "") + w.morphemes[i].gloss;
            }
            if (w.punctuation) ms = gs = w.surface;
            m += (m.empty() ? "" : " ") + ms;
            g += (g.empty() ? "" : " ") + gs;
          }
          emit(g_out, "\\t " + *g_text + "\n\\m " + m + "\n\\g " + g + "\n" +
                          (g_translation ? "\\l " + *g_translation + "\n" : ""));
        }
      } else {
        const mg::Corpus input = read_corpus(*g_input, f.language, mg::Split::test);
        const mg::Corpus out = mg::gloss_corpus(encoder, decoder, lexicon, input, cfg.decode);
        emit(g_out, corpus_text(out, header));
      }
    } else if (*eval) {
      const mg::EncoderModel encoder = mg::load_encoder(e_encoder);
      const mg::DecoderModel decoder = mg::load_decoder(e_decoder);
      const mg::Lexicon lexicon = mg::load_lexicon(e_lexicon);
      const mg::Corpus gold = read_corpus(e_gold, f.language, mg::Split::test);
      mg::RunConfig cfg;
      f.decode.apply(cfg);
      const auto setting = e_extended ? mg::LexiconSetting::both : mg::LexiconSetting::train;
      const mg::Evaluation result = mg::evaluate_glosser(encoder, decoder, lexicon, gold, setting, cfg.decode);
      const std::string header = header_text("eval", decoder.run_config, eval);
      if (e_table) {
        emit(e_out, commented(header) + mg::report_to_table(result.report));
      } else {
        json j = report_json(result.report, header);
        j["oracle_entries_added"] = result.oracle_entries_added;
        emit(e_out, j.dump(2) + "\n");
      }
      if (e_predictions) write_file(*e_predictions, corpus_text(result.predictions, header));
    } else if (*extend) {
      if (!x_corpus && x_entries.empty())
        throw std::invalid_argument("extend-lexicon: pass --corpus and/or --entry");
      const mg::EncoderModel encoder = mg::load_encoder(x_encoder);
      mg::Lexicon lexicon = mg::load_lexicon(x_lexicon);
      std::vector<mg::Morpheme> additions;
      if (x_corpus)
        for (auto& m : mg::distinct_morphemes(read_corpus(*x_corpus, f.language, mg::Split::test)))
          additions.push_back(std::move(m));
      for (const auto& e : x_entries) {
        const auto eq = e.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("--entry expects segment=gloss, got '" + e + "'");
        additions.emplace_back(e.substr(0, eq), e.substr(eq + 1));
      }
      const std::size_t added = lexicon.add_entries(encoder, additions, provenance_flag(x_provenance));
      mg::save_lexicon(x_out, lexicon);
      if (x_tsv)
        write_file(*x_tsv, commented(header_text("extend-lexicon", encoder.run_config, extend)) +
                               lexicon.to_tsv());
      std::cerr << "added " << added << " of " << additions.size() << " morphemes; lexicon size "
                << lexicon.size() - 1 << '\n';
    } else if (*sweep) {
      const mg::RunConfig cfg = f.run_config();
      mg::Corpus pool, test;
      if (s_pool && s_test) {
        pool = read_corpus(*s_pool, f.language, mg::Split::train);
        test = read_corpus(*s_test, f.language, mg::Split::test);
      } else if (!s_pool && !s_test) {
        mg::SynthSpec spec = s_spec ? mg::read_synth_spec(*s_spec) : mg::SynthSpec::standard();
        spec.seed = f.seed + 1;
        mg::Corpus all = mg::generate_corpus(spec, s_pool_size + s_test_size);
        test.split = mg::Split::test;
        pool.split = mg::Split::train;
        for (std::size_t i = 0; i < all.sentences.size(); ++i)
          (i < static_cast<std::size_t>(s_pool_size) ? pool : test).sentences.push_back(all.sentences[i]);
      } else {
        throw std::invalid_argument("sweep: pass both --pool and --test, or neither");
      }
      const auto result = mg::run_sweep(pool, test, s_sizes, s_seeds, cfg, [](const mg::SweepRow& r) {
        std::cerr << "size " << r.size << " seed " << r.seed << " gloss MER " << r.gloss_mer << '\n';
      });
      emit(s_out, result.to_tsv(header_text("sweep", cfg.to_ini(), sweep)));
    } else if (*analogy) {
      const mg::EncoderModel encoder = mg::load_encoder(a_encoder);
      const mg::SynthSpec spec = a_spec ? mg::read_synth_spec(*a_spec) : mg::SynthSpec::standard();
      const mg::ParadigmGrid grid = mg::generate_paradigm_grid(spec, encoder.config.prompt_options);
      const std::string header = header_text("analogy", encoder.run_config, analogy);
      std::ostringstream out;
      out << std::setprecision(6) << commented(header)
          << "group\tpairs_used\tpairs_excluded\tmean_cosine\n";
      for (const auto& group : grid.groups) {
        const auto score = mg::analogy_consistency(encoder, group);
        out << group.name << '\t' << score.pairs_used << '\t' << score.pairs_excluded << '\t'
            << score.mean_cosine << '\n';
      }
      emit(a_out, out.str());
      if (a_pca) {
        const mg::Corpus source = a_corpus ? read_corpus(*a_corpus, f.language, mg::Split::test) : grid.corpus;
        std::vector<mg::WordInContext> words;
        std::vector<std::string> labels;
        std::set<std::string> seen;
        for (const auto& sentence : source.sentences)
          for (std::size_t w = 0; w < sentence.words.size(); ++w) {
            if (mg::is_punctuation_only(sentence.words[w])) continue;
            mg::WordInContext word = mg::word_in_context(sentence, w, encoder.config.prompt_options);
            if (!seen.insert(mg::render_word_prompt(word)).second) continue;
            std::string segs, glosses;
            if (sentence.annotated())
              for (const auto& m : sentence.word_analyses[w]) {
                segs += (segs.empty() ? "" : "-") + m.segment;
                glosses += (glosses.empty() ? "" : "-") + m.gloss;
              }
            labels.push_back(segs + '\t' + glosses);
            words.push_back(std::move(word));
          }
        if (words.size() < 2) throw std::invalid_argument("analogy: need at least two words to project");
        const Eigen::MatrixXd vectors = mg::embed_words(encoder, words).cast<double>();
        const mg::Pca2d pca = mg::pca_2d(vectors);
        std::ostringstream p;
        p << std::setprecision(8) << commented(header)
          << "# explained_variance_ratio " << pca.explained_variance_ratio[0] << ' '
          << pca.explained_variance_ratio[1] << (pca.rank_deficient ? " rank_deficient" : "") << '\n'
          << "word\tsegments\tglosses\tx\ty\n";
        for (std::size_t i = 0; i < words.size(); ++i) {
          const auto r = static_cast<Eigen::Index>(i);
          p << words[i].word << '\t' << labels[i] << '\t' << pca.coordinates(r, 0) << '\t'
            << pca.coordinates(r, 1) << '\n';
        }
        write_file(*a_pca, p.str());
      }
    } else if (*flops) {
      std::ostringstream out;
      out << "# morphoglot flops\n# per-sentence inference FLOPs; 8 words, 3 morphemes per word\n"
          << "system\tencoder_flops\tdecoder_flops\ttotal_flops\tpublished_total\n";
      const auto r = mg::flops_estimate(mg::retrieval_glosser_workload());
      const auto b = mg::flops_estimate(mg::byte_seq2seq_workload());
      out << "retrieval_glosser\t" << r.encoder << '\t' << r.decoder << '\t' << r.total() << "\t24.8e9\n"
          << "byte_seq2seq\t" << b.encoder << '\t' << b.decoder << '\t' << b.total() << "\t211.7e9\n";
      emit(fl_out, out.str());
    } else if (*serve) {
      mg::ServiceOptions options;
      mg::RunConfig cfg;
      f.decode.apply(cfg);
      options.decode = cfg.decode;
      options.cors_origin = sv_cors;
      mg::DecoderModel decoder = mg::load_decoder(sv_decoder);
      options.run_config = decoder.run_config;
      mg::GlossService service(mg::load_encoder(sv_encoder), std::move(decoder),
                               mg::load_lexicon(sv_lexicon), options);
      const auto [host, port] = mg::resolve_bind_address(sv_host, sv_port);
      if (!service.bind(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
      std::cerr << "listening on " << host << ':' << service.bound_port() << '\n';
      service.serve();
    }
  } catch (const mg::ParseError& e) {
    std::cerr << "error: line " << e.line() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
