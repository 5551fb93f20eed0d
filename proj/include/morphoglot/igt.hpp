#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace morphoglot {

/// A form-meaning pair: the target-language segment and its Leipzig-style
/// gloss. Identity is the exact (segment, gloss) pair.
struct Morpheme {
  std::string segment;
  std::string gloss;

  Morpheme() = default;
  /// Throws std::invalid_argument on empty fields or a `-` in the segment.
  Morpheme(std::string segment, std::string gloss);

  auto operator<=>(const Morpheme&) const = default;
  bool operator==(const Morpheme&) const = default;
};

using WordAnalysis = std::vector<Morpheme>;

struct IGTSentence {
  std::vector<std::string> words;
  // Empty when the sentence carries no \m/\g tiers.
  std::vector<WordAnalysis> word_analyses;
  std::optional<std::string> translation;
  std::string language;

  bool annotated() const { return !word_analyses.empty(); }
  std::string transcript() const;

  bool operator==(const IGTSentence&) const = default;
};

enum class Split { train, dev, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct Corpus {
  std::vector<IGTSentence> sentences;
  Split split = Split::train;

  bool empty() const { return sentences.empty(); }
  std::size_t size() const { return sentences.size(); }
  bool operator==(const Corpus&) const = default;
};

// Ablation axes for the encoder prompt: W is always present; Tr, Ts and Sp
// are these three flags.
struct PromptOptions {
  bool include_transcript = true;
  bool include_translation = true;
  bool char_spacing = true;

  bool operator==(const PromptOptions&) const = default;
};

struct WordInContext {
  std::string word;
  std::string transcript;
  std::optional<std::string> translation;
  PromptOptions prompt_options;
};

using BagOfMorphemes = std::set<Morpheme>;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ParseDiagnostic {
  std::size_t line = 0;
  std::string message;
};

/// Reads blank-line-separated blocks of `\t`, `\m`, `\g`, `\l` lines.
/// Misaligned blocks throw ParseError, unless `rejected` is given, in which
/// case they are skipped and recorded there.
Corpus parse_corpus(std::istream& input, std::string_view language, Split split,
                    std::vector<ParseDiagnostic>* rejected = nullptr);
Corpus parse_corpus_file(const std::string& path, std::string_view language,
                         Split split);

void write_corpus(std::ostream& output, const Corpus& corpus);
void write_corpus_file(const std::string& path, const Corpus& corpus);

const WordAnalysis& extract_word_morphemes(const IGTSentence& sentence,
                                           std::size_t word_index);
BagOfMorphemes bag_of_morphemes(const IGTSentence& sentence,
                                std::size_t word_index);

WordInContext word_in_context(const IGTSentence& sentence,
                              std::size_t word_index,
                              const PromptOptions& options);

std::string render_word_prompt(const WordInContext& word);
std::string render_morpheme_prompt(const Morpheme& morpheme, bool char_spacing);

// Reserved prompt whose encoding is the lexicon's end-of-sequence row.
inline constexpr std::string_view kEosPrompt = "<EOS>";

// Distinct morpheme types of a corpus in first-occurrence order, skipping
// punctuation-only morphemes.
std::vector<Morpheme> distinct_morphemes(const Corpus& corpus);

}  // namespace morphoglot
