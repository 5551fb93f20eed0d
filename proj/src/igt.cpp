#include "morphoglot/igt.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "morphoglot/unicode.hpp"

namespace morphoglot {

Morpheme::Morpheme(std::string seg, std::string gl)
    : segment(std::move(seg)), gloss(std::move(gl)) {
  if (trim(segment).empty() || trim(gloss).empty())
    throw std::invalid_argument("morpheme segment and gloss must be non-empty");
  if (segment.find('-') != std::string::npos)
    throw std::invalid_argument("morpheme segment contains '-': " + segment);
}

std::string IGTSentence::transcript() const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + std::string(name));
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message),
      line_(line) {}

namespace {

struct RawBlock {
  std::size_t first_line = 0;
  std::optional<std::string> t, m, g, l;
  std::size_t t_line = 0, m_line = 0, g_line = 0;
};

IGTSentence build_sentence(const RawBlock& block, std::string_view language) {
  if (!block.t) throw ParseError(block.first_line, "block has no \\t line");
  IGTSentence sentence;
  sentence.language = std::string(language);
  sentence.words = split_whitespace(*block.t);
  if (block.l) sentence.translation = std::string(trim(*block.l));
  if (!block.m && !block.g) return sentence;
  if (!block.m || !block.g)
    throw ParseError(block.first_line, "block has only one of \\m and \\g");

  const auto m_words = split_whitespace(*block.m);
  const auto g_words = split_whitespace(*block.g);
  if (m_words.size() != sentence.words.size())
    throw ParseError(block.m_line,
                     "\\m has " + std::to_string(m_words.size()) +
                         " words but \\t has " +
                         std::to_string(sentence.words.size()));
  if (g_words.size() != m_words.size())
    throw ParseError(block.g_line,
                     "\\g has " + std::to_string(g_words.size()) +
                         " words but \\m has " + std::to_string(m_words.size()));

  for (std::size_t w = 0; w < m_words.size(); ++w) {
    const auto segments = split_on(m_words[w], '-');
    const auto glosses = split_on(g_words[w], '-');
    if (segments.size() != glosses.size())
      throw ParseError(block.g_line,
                       "word " + std::to_string(w + 1) + " has " +
                           std::to_string(segments.size()) + " segments but " +
                           std::to_string(glosses.size()) + " glosses");
    WordAnalysis analysis;
    for (std::size_t k = 0; k < segments.size(); ++k) {
      try {
        analysis.emplace_back(segments[k], glosses[k]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(block.m_line, "word " + std::to_string(w + 1) + ": " +
                                           e.what());
      }
    }
    sentence.word_analyses.push_back(std::move(analysis));
  }
  return sentence;
}

}  // namespace

Corpus parse_corpus(std::istream& input, std::string_view language, Split split,
                    std::vector<ParseDiagnostic>* rejected) {
  Corpus corpus;
  corpus.split = split;

  std::optional<RawBlock> block;
  auto flush = [&] {
    if (!block) return;
    try {
      corpus.sentences.push_back(build_sentence(*block, language));
    } catch (const ParseError& e) {
      if (!rejected) throw;
      rejected->push_back({e.line(), e.what()});
    }
    block.reset();
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;  // provenance header
    if (!block) block = RawBlock{line_no, {}, {}, {}, {}, 0, 0, 0};
    if (line.size() < 2 || line[0] != '\\' ||
        (line.size() > 2 && line[2] != ' ')) {
      const ParseError error(line_no, "unrecognized line prefix");
      if (!rejected) throw error;
      rejected->push_back({line_no, error.what()});
      continue;
    }
    const std::string body = line.size() > 3 ? line.substr(3) : std::string();
    switch (line[1]) {
      case 't': block->t = body; block->t_line = line_no; break;
      case 'm': block->m = body; block->m_line = line_no; break;
      case 'g': block->g = body; block->g_line = line_no; break;
      case 'l': block->l = body; break;
      default: {
        const ParseError error(line_no, "unrecognized line prefix");
        if (!rejected) throw error;
        rejected->push_back({line_no, error.what()});
      }
    }
  }
  flush();
  return corpus;
}

Corpus parse_corpus_file(const std::string& path, std::string_view language,
                         Split split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_corpus(in, language, split);
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
  bool first = true;
  for (const auto& sentence : corpus.sentences) {
    if (!first) out << '\n';
    first = false;
    out << "\\t " << sentence.transcript() << '\n';
    if (sentence.annotated()) {
      std::string m, g;
      for (std::size_t w = 0; w < sentence.word_analyses.size(); ++w) {
        if (w > 0) {
          m.push_back(' ');
          g.push_back(' ');
        }
        const auto& analysis = sentence.word_analyses[w];
        for (std::size_t k = 0; k < analysis.size(); ++k) {
          if (k > 0) {
            m.push_back('-');
            g.push_back('-');
          }
          m += analysis[k].segment;
          g += analysis[k].gloss;
        }
      }
      out << "\\m " << m << '\n' << "\\g " << g << '\n';
    }
    if (sentence.translation) out << "\\l " << *sentence.translation << '\n';
  }
}

void write_corpus_file(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  write_corpus(out, corpus);
}

const WordAnalysis& extract_word_morphemes(const IGTSentence& sentence,
                                           std::size_t word_index) {
  if (word_index >= sentence.word_analyses.size())
    throw std::out_of_range("word index " + std::to_string(word_index) +
                            " out of range");
  return sentence.word_analyses[word_index];
}

BagOfMorphemes bag_of_morphemes(const IGTSentence& sentence,
                                std::size_t word_index) {
  const auto& analysis = extract_word_morphemes(sentence, word_index);
  return BagOfMorphemes(analysis.begin(), analysis.end());
}

WordInContext word_in_context(const IGTSentence& sentence,
                              std::size_t word_index,
                              const PromptOptions& options) {
  if (word_index >= sentence.words.size())
    throw std::out_of_range("word index " + std::to_string(word_index) +
                            " out of range");
  return {sentence.words[word_index], sentence.transcript(),
          sentence.translation, options};
}

std::string render_word_prompt(const WordInContext& w) {
  const auto& opt = w.prompt_options;
  std::string out = opt.char_spacing ? char_spaced(w.word) : w.word;
  if (opt.include_transcript) {
    out += " | Context: ";
    out += opt.char_spacing ? char_spaced(w.transcript) : w.transcript;
  }
  if (opt.include_translation && w.translation) {
    out += " | Translation: ";
    out += *w.translation;
  }
  return out;
}

std::string render_morpheme_prompt(const Morpheme& m, bool char_spacing) {
  return (char_spacing ? char_spaced(m.segment) : m.segment) + " | Gloss: " +
         m.gloss;
}

std::vector<Morpheme> distinct_morphemes(const Corpus& corpus) {
  std::vector<Morpheme> out;
  std::set<Morpheme> seen;
  for (const auto& sentence : corpus.sentences)
    for (const auto& analysis : sentence.word_analyses)
      for (const auto& m : analysis) {
        if (is_punctuation_only(m.segment)) continue;
        if (seen.insert(m).second) out.push_back(m);
      }
  return out;
}

}  // namespace morphoglot
