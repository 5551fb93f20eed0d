#include "morphoglot/evaluation.hpp"

#include "morphoglot/unicode.hpp"

namespace morphoglot {

std::string to_string(LexiconSetting setting) {
  switch (setting) {
    case LexiconSetting::train: return "train";
    case LexiconSetting::extended: return "extended";
    case LexiconSetting::both: return "both";
  }
  throw std::invalid_argument("bad lexicon setting");
}

LexiconSetting parse_lexicon_setting(const std::string& text) {
  if (text == "train") return LexiconSetting::train;
  if (text == "extended") return LexiconSetting::extended;
  if (text == "both") return LexiconSetting::both;
  throw std::invalid_argument("lexicon setting must be train, extended or both, not '" + text + "'");
}

std::set<Morpheme> lexicon_keys(const Lexicon& lexicon) {
  std::set<Morpheme> keys;
  for (std::size_t i = 1; i < lexicon.size(); ++i) keys.insert(lexicon.entry(i).morpheme);
  return keys;
}

std::size_t check_closed_world(const Corpus& predictions, const Lexicon& lexicon) {
  std::size_t checked = 0;
  for (const auto& sentence : predictions.sentences)
    for (std::size_t w = 0; w < sentence.word_analyses.size(); ++w) {
      if (w < sentence.words.size() && is_punctuation_only(sentence.words[w])) continue;
      for (const auto& m : sentence.word_analyses[w]) {
        if (!lexicon.find(m))
          throw ClosedWorldViolation("predicted pair " + m.segment + " (" + m.gloss +
                                     ") is not in the lexicon");
        ++checked;
      }
    }
  return checked;
}

Evaluation evaluate_glosser(const EncoderModel& encoder, const DecoderModel& decoder,
                            const Lexicon& lexicon, const Corpus& gold, LexiconSetting setting,
                            const DecodeOptions& options) {
  Evaluation out;
  const double p_oov = oov_rate(lexicon_keys(lexicon), gold);

  std::optional<EvalReport> train_report;
  if (setting != LexiconSetting::extended) {
    if (lexicon.count(Provenance::eval_oracle) > 0)
      throw std::invalid_argument(
          "train-lexicon evaluation needs a lexicon without eval_oracle entries");
    out.predictions = gloss_corpus(encoder, decoder, lexicon, gold, options);
    check_closed_world(out.predictions, lexicon);
    train_report = evaluate_predictions(gold, out.predictions);
  }
  if (setting != LexiconSetting::train) {
    Lexicon extended = lexicon;
    out.oracle_entries_added = extend_with_oracle(extended, encoder, gold);
    Corpus predicted = gloss_corpus(encoder, decoder, extended, gold, options);
    check_closed_world(predicted, extended);
    if (setting == LexiconSetting::extended) {
      out.report = evaluate_predictions(gold, predicted);
      out.predictions = predicted;
    } else {
      const EvalReport ext = evaluate_predictions(gold, predicted);
      out.report = *train_report;
      out.report.extended_gloss_mer = ext.gloss_mer;
      out.report.delta_mer = train_report->gloss_mer - ext.gloss_mer;
    }
    out.extended_predictions = std::move(predicted);
  } else {
    out.report = *train_report;
  }
  out.report.lexicon_setting = to_string(setting);
  out.report.p_oov = p_oov;
  return out;
}

}  // namespace morphoglot
