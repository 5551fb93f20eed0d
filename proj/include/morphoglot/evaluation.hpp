#pragma once

#include <optional>
#include <set>
#include <string>

#include "morphoglot/decoder.hpp"
#include "morphoglot/lexicon.hpp"
#include "morphoglot/metrics.hpp"

namespace morphoglot {

enum class LexiconSetting { train, extended, both };

std::string to_string(LexiconSetting setting);
LexiconSetting parse_lexicon_setting(const std::string& text);

/// Raised when predictions contain a pair outside the lexicon or a word
/// whose segment and gloss counts differ.
class ClosedWorldViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Evaluation {
  EvalReport report;
  // Predictions of the primary setting (train unless only extended ran).
  Corpus predictions;
  std::optional<Corpus> extended_predictions;
  std::size_t oracle_entries_added = 0;
};

/// Lexicon keys without the end-of-word row.
std::set<Morpheme> lexicon_keys(const Lexicon& lexicon);

/// Throws ClosedWorldViolation unless every predicted pair is a lexicon
/// member; returns the number of morphemes checked.
std::size_t check_closed_world(const Corpus& predictions, const Lexicon& lexicon);

/// Glosses `gold` under the requested lexicon setting(s). The extended
/// setting works on a copy of `lexicon`; the train setting refuses a
/// lexicon holding eval_oracle entries. p_oov is measured against the
/// lexicon as given.
Evaluation evaluate_glosser(const EncoderModel& encoder, const DecoderModel& decoder,
                            const Lexicon& lexicon, const Corpus& gold, LexiconSetting setting,
                            const DecodeOptions& options = {});

}  // namespace morphoglot
