#include "morphoglot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "morphoglot/unicode.hpp"

namespace morphoglot {

TierSequence without_punctuation(const TierSequence& units) {
  TierSequence out;
  out.reserve(units.size());
  for (const auto& u : units)
    if (!is_punctuation_only(u)) out.push_back(u);
  return out;
}

TierSequence tier_units(const IGTSentence& sentence, Tier tier) {
  TierSequence units;
  for (const auto& analysis : sentence.word_analyses)
    for (const auto& m : analysis) {
      const std::string& unit = tier == Tier::gloss ? m.gloss : m.segment;
      if (!is_punctuation_only(unit)) units.push_back(unit);
    }
  return units;
}

std::size_t levenshtein(const TierSequence& a, const TierSequence& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({up + 1, row[j - 1] + 1, sub});
      diag = up;
    }
  }
  return row[b.size()];
}

double sequence_mer(const TierSequence& gold, const TierSequence& pred) {
  const double d = static_cast<double>(levenshtein(gold, pred));
  const double denom = static_cast<double>(std::max<std::size_t>(gold.size(), 1));
  return std::min(d / denom, 1.0);
}

CorpusMer corpus_mer(const Corpus& gold, const Corpus& pred, Tier tier) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("corpus_mer: gold has " +
                                std::to_string(gold.size()) +
                                " sentences, prediction has " +
                                std::to_string(pred.size()));
  CorpusMer result;
  result.per_sentence.reserve(gold.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double mer = sequence_mer(tier_units(gold.sentences[i], tier),
                                    tier_units(pred.sentences[i], tier));
    result.per_sentence.push_back(mer);
    sum += mer;
  }
  result.aggregate = gold.empty() ? 0.0 : sum / static_cast<double>(gold.size());
  return result;
}

namespace {

void check_word_aligned(const IGTSentence& gold, const IGTSentence& pred,
                        std::size_t index) {
  if (gold.word_analyses.size() != pred.word_analyses.size())
    throw std::invalid_argument("sentence " + std::to_string(index) +
                                ": word count mismatch between gold and prediction");
}

bool is_punctuation_word(const IGTSentence& sentence, std::size_t w) {
  if (w < sentence.words.size()) return is_punctuation_only(sentence.words[w]);
  const auto& analysis = sentence.word_analyses[w];
  return std::all_of(analysis.begin(), analysis.end(), [](const Morpheme& m) {
    return is_punctuation_only(m.segment);
  });
}

}  // namespace

GlossingAccuracy glossing_accuracy(const Corpus& gold, const Corpus& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("glossing_accuracy: sentence count mismatch");
  std::size_t words = 0, words_correct = 0, morphemes = 0, morphemes_correct = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold.sentences[s];
    const auto& p = pred.sentences[s];
    check_word_aligned(g, p, s);
    for (std::size_t w = 0; w < g.word_analyses.size(); ++w) {
      if (is_punctuation_word(g, w)) continue;
      const auto& ga = g.word_analyses[w];
      const auto& pa = p.word_analyses[w];
      ++words;
      bool exact = ga.size() == pa.size();
      for (std::size_t k = 0; k < ga.size(); ++k) {
        ++morphemes;
        if (k < pa.size() && pa[k].gloss == ga[k].gloss)
          ++morphemes_correct;
        else
          exact = false;
      }
      if (exact) ++words_correct;
    }
  }
  GlossingAccuracy acc;
  acc.word_accuracy = words ? static_cast<double>(words_correct) / words : 0.0;
  acc.morpheme_accuracy =
      morphemes ? static_cast<double>(morphemes_correct) / morphemes : 0.0;
  return acc;
}

SegmentationScores segmentation_scores(const Corpus& gold, const Corpus& pred) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("segmentation_scores: sentence count mismatch");
  double f1_sum = 0.0, acc_sum = 0.0;
  std::size_t samples = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold.sentences[s];
    const auto& p = pred.sentences[s];
    check_word_aligned(g, p, s);
    double sample_f1 = 0.0, sample_acc = 0.0;
    std::size_t words = 0;
    for (std::size_t w = 0; w < g.word_analyses.size(); ++w) {
      if (is_punctuation_word(g, w)) continue;
      std::map<std::string, int> gold_counts, pred_counts;
      std::vector<std::string> gold_seq, pred_seq;
      for (const auto& m : g.word_analyses[w]) {
        ++gold_counts[m.segment];
        gold_seq.push_back(m.segment);
      }
      for (const auto& m : p.word_analyses[w]) {
        ++pred_counts[m.segment];
        pred_seq.push_back(m.segment);
      }
      std::size_t overlap = 0;
      for (const auto& [seg, count] : pred_counts) {
        auto it = gold_counts.find(seg);
        if (it != gold_counts.end()) overlap += std::min(count, it->second);
      }
      const double precision =
          pred_seq.empty() ? 0.0 : static_cast<double>(overlap) / pred_seq.size();
      const double recall =
          gold_seq.empty() ? 0.0 : static_cast<double>(overlap) / gold_seq.size();
      sample_f1 += precision + recall > 0.0
                       ? 2.0 * precision * recall / (precision + recall)
                       : 0.0;
      sample_acc += gold_seq == pred_seq ? 1.0 : 0.0;
      ++words;
    }
    if (words == 0) continue;
    f1_sum += sample_f1 / words;
    acc_sum += sample_acc / words;
    ++samples;
  }
  SegmentationScores scores;
  if (samples > 0) {
    scores.f1 = f1_sum / samples;
    scores.whole_word_accuracy = acc_sum / samples;
  }
  return scores;
}

RetrievalScores retrieval_scores(
    const std::vector<std::vector<std::size_t>>& rankings,
    const std::vector<std::set<std::size_t>>& relevant) {
  if (rankings.size() != relevant.size())
    throw std::invalid_argument("retrieval_scores: query count mismatch");
  RetrievalScores out;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& rel = relevant[q];
    if (rel.empty()) {
      ++out.skipped;
      continue;
    }
    const auto& ranked = rankings[q];
    ++out.queries;

    if (!ranked.empty() && rel.count(ranked[0])) out.precision_at_1 += 1.0;

    std::size_t hits10 = 0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min<std::size_t>(10, ranked.size()); ++r) {
      if (rel.count(ranked[r])) {
        ++hits10;
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
      }
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min<std::size_t>(10, rel.size()); ++r)
      idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    out.recall_at_10 += static_cast<double>(hits10) / rel.size();
    out.ndcg_at_10 += dcg / idcg;

    std::size_t hits = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < std::min<std::size_t>(100, ranked.size()); ++r) {
      if (rel.count(ranked[r])) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    out.map_at_100 += ap / static_cast<double>(std::min<std::size_t>(rel.size(), 100));
  }
  if (out.queries > 0) {
    const double n = static_cast<double>(out.queries);
    out.precision_at_1 /= n;
    out.recall_at_10 /= n;
    out.ndcg_at_10 /= n;
    out.map_at_100 /= n;
  }
  return out;
}

double oov_rate(const std::set<Morpheme>& train_keys, const Corpus& eval) {
  double sum = 0.0;
  std::size_t sentences = 0;
  for (const auto& sentence : eval.sentences) {
    std::size_t tokens = 0, oov = 0;
    for (const auto& analysis : sentence.word_analyses)
      for (const auto& m : analysis) {
        if (is_punctuation_only(m.segment)) continue;
        ++tokens;
        if (!train_keys.count(m)) ++oov;
      }
    if (tokens == 0) continue;
    sum += static_cast<double>(oov) / static_cast<double>(tokens);
    ++sentences;
  }
  return sentences ? sum / static_cast<double>(sentences) : 0.0;
}

EvalReport evaluate_predictions(const Corpus& gold, const Corpus& pred) {
  EvalReport report;
  auto gloss = corpus_mer(gold, pred, Tier::gloss);
  auto seg = corpus_mer(gold, pred, Tier::segment);
  report.per_sentence_mer = std::move(gloss.per_sentence);
  report.gloss_mer = gloss.aggregate;
  report.per_sentence_segment_mer = std::move(seg.per_sentence);
  report.segment_mer = seg.aggregate;
  report.accuracy = glossing_accuracy(gold, pred);
  report.segmentation = segmentation_scores(gold, pred);
  return report;
}

std::string report_to_json(const EvalReport& r, int indent) {
  nlohmann::json j;
  j["lexicon_setting"] = r.lexicon_setting;
  j["gloss_mer"] = r.gloss_mer;
  j["segment_mer"] = r.segment_mer;
  j["per_sentence_mer"] = r.per_sentence_mer;
  j["per_sentence_segment_mer"] = r.per_sentence_segment_mer;
  j["morpheme_accuracy"] = r.accuracy.morpheme_accuracy;
  j["word_accuracy"] = r.accuracy.word_accuracy;
  j["seg_f1"] = r.segmentation.f1;
  j["seg_word_accuracy"] = r.segmentation.whole_word_accuracy;
  j["p_oov"] = r.p_oov;
  if (r.retrieval) {
    j["retrieval"] = {{"p_at_1", r.retrieval->precision_at_1},
                      {"r_at_10", r.retrieval->recall_at_10},
                      {"ndcg_at_10", r.retrieval->ndcg_at_10},
                      {"map_at_100", r.retrieval->map_at_100},
                      {"queries", r.retrieval->queries}};
  }
  if (r.extended_gloss_mer) j["extended_gloss_mer"] = *r.extended_gloss_mer;
  if (r.delta_mer) j["delta_mer"] = *r.delta_mer;
  return j.dump(indent);
}

std::string report_to_table(const EvalReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  auto row = [&](const std::string& name, double value) {
    out << std::left << std::setw(22) << name << std::right << std::setw(10)
        << value << '\n';
  };
  out << std::left << std::setw(22) << "lexicon_setting" << std::right
      << std::setw(10) << r.lexicon_setting << '\n';
  row("gloss_mer", r.gloss_mer);
  row("segment_mer", r.segment_mer);
  row("morpheme_accuracy", r.accuracy.morpheme_accuracy);
  row("word_accuracy", r.accuracy.word_accuracy);
  row("seg_f1", r.segmentation.f1);
  row("seg_word_accuracy", r.segmentation.whole_word_accuracy);
  row("p_oov", r.p_oov);
  if (r.retrieval) {
    row("p_at_1", r.retrieval->precision_at_1);
    row("r_at_10", r.retrieval->recall_at_10);
    row("ndcg_at_10", r.retrieval->ndcg_at_10);
    row("map_at_100", r.retrieval->map_at_100);
  }
  if (r.extended_gloss_mer) row("extended_gloss_mer", *r.extended_gloss_mer);
  if (r.delta_mer) row("delta_mer", *r.delta_mer);
  return out.str();
}

}  // namespace morphoglot
