#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "morphoglot/igt.hpp"

namespace morphoglot {

struct AffixSlot {
  std::string name;
  // Glosses are required; segments may be left empty and are then drawn
  // from the phonotactic generator.
  std::vector<Morpheme> affixes;
  double occupancy = 0.7;
};

// Rewrite applied at a morpheme boundary: when the left part ends in `left`
// and the right part starts with `right`, the joined `left+right` surfaces
// as `replacement`.
struct AllomorphyRule {
  std::string left;
  std::string right;
  std::string replacement;
};

struct SynthSpec {
  int stem_count = 50;
  std::vector<AffixSlot> slots;
  std::vector<AllomorphyRule> allomorphy_rules;
  int sentence_min = 3;
  int sentence_max = 8;
  // Probability that a sentence ends in a standalone "." token.
  double punctuation_rate = 0.0;
  std::uint64_t seed = 1;

  /// 50 stems, number and case slots with 4 affixes each, no allomorphy.
  static SynthSpec standard(std::uint64_t seed = 1);
};

// Stem and affix inventories fully resolved from a SynthSpec.
struct SynthLanguage {
  std::vector<Morpheme> stems;
  std::vector<AffixSlot> slots;
  std::vector<AllomorphyRule> allomorphy_rules;

  std::string surface(const WordAnalysis& analysis) const;
};

/// Throws std::invalid_argument on an empty stem inventory, occupancies
/// outside [0,1] or colliding (segment, gloss) pairs.
SynthLanguage build_language(const SynthSpec& spec);

Corpus generate_corpus(const SynthSpec& spec, int n_sentences);

struct TransformationGroup {
  std::string name;
  std::vector<std::pair<WordInContext, WordInContext>> pairs;
};

struct ParadigmGrid {
  Corpus corpus;
  std::vector<TransformationGroup> groups;
};

/// One single-word sentence per cell of stem x (absent | affix) per slot.
/// Groups collect, per slot and per ordered affix pair (a, b), the word
/// pairs that differ only by a -> b.
ParadigmGrid generate_paradigm_grid(const SynthSpec& spec,
                                    const PromptOptions& options);

struct OovSplit {
  Corpus train;
  Corpus eval;
  double achieved_oov = 0.0;
  // False when the achieved rate misses the target by more than the
  // tolerance passed to split_with_target_oov.
  bool feasible = true;
};

OovSplit split_with_target_oov(const Corpus& corpus, double train_fraction,
                               double target_oov, std::uint64_t seed = 0,
                               double tolerance = 0.01);

/// Reads a sectioned key = value file (see README for the keys).
SynthSpec read_synth_spec(const std::string& path);
SynthSpec parse_synth_spec(std::istream& input);

}  // namespace morphoglot
