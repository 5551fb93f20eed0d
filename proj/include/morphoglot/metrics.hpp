#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "morphoglot/igt.hpp"

namespace morphoglot {

// Units of one utterance tier (gloss symbols or segments).
using TierSequence = std::vector<std::string>;

enum class Tier { gloss, segment };

TierSequence without_punctuation(const TierSequence& units);

// Units of the sentence's tier in order, punctuation-only units removed.
TierSequence tier_units(const IGTSentence& sentence, Tier tier);

// Unit-level edit distance, unit costs, exact string match.
std::size_t levenshtein(const TierSequence& a, const TierSequence& b);

/// levenshtein(gold, pred) / max(|gold|, 1), clipped at 1. Inputs are
/// expected to be punctuation-filtered already.
double sequence_mer(const TierSequence& gold, const TierSequence& pred);

struct CorpusMer {
  double aggregate = 0.0;
  std::vector<double> per_sentence;
};

/// Sample-level mean of per-sentence MER. Throws std::invalid_argument on a
/// sentence count mismatch.
CorpusMer corpus_mer(const Corpus& gold, const Corpus& pred, Tier tier);

struct GlossingAccuracy {
  double morpheme_accuracy = 0.0;
  double word_accuracy = 0.0;
};

// Corpus-level pooled, left-aligned per word.
GlossingAccuracy glossing_accuracy(const Corpus& gold, const Corpus& pred);

struct SegmentationScores {
  double f1 = 0.0;
  double whole_word_accuracy = 0.0;
};

// Multiset F1 and exact-sequence accuracy per word, averaged per sentence
// and then over sentences.
SegmentationScores segmentation_scores(const Corpus& gold, const Corpus& pred);

struct RetrievalScores {
  double precision_at_1 = 0.0;
  double recall_at_10 = 0.0;
  double ndcg_at_10 = 0.0;
  double map_at_100 = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;
};

/// `rankings[q]` lists item ids best-first; `relevant[q]` holds the relevant
/// ids. Queries with an empty relevance set are skipped and counted.
RetrievalScores retrieval_scores(
    const std::vector<std::vector<std::size_t>>& rankings,
    const std::vector<std::set<std::size_t>>& relevant);

/// Mean over sentences of the fraction of (non-punctuation) morpheme tokens
/// absent from `train_keys`. Sentences without morpheme tokens are skipped.
double oov_rate(const std::set<Morpheme>& train_keys, const Corpus& eval);

struct EvalReport {
  std::vector<double> per_sentence_mer;
  double gloss_mer = 0.0;
  std::vector<double> per_sentence_segment_mer;
  double segment_mer = 0.0;
  GlossingAccuracy accuracy;
  SegmentationScores segmentation;
  std::optional<RetrievalScores> retrieval;
  double p_oov = 0.0;
  std::string lexicon_setting;
  // Present when both lexicon settings were evaluated: train MER minus
  // extended MER on the gloss tier.
  std::optional<double> delta_mer;
  std::optional<double> extended_gloss_mer;
};

EvalReport evaluate_predictions(const Corpus& gold, const Corpus& pred);

std::string report_to_json(const EvalReport& report, int indent = 2);
std::string report_to_table(const EvalReport& report);

}  // namespace morphoglot
