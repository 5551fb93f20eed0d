#include "morphoglot/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "morphoglot/metrics.hpp"
#include "morphoglot/random.hpp"
#include "morphoglot/unicode.hpp"

namespace morphoglot {

namespace {

constexpr const char* kConsonants[] = {"p", "t", "k", "b", "d", "g", "m", "n",
                                       "s", "z", "l", "r", "h", "v", "ts", "q"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ä"};

constexpr const char* kLexicalGlosses[] = {
    "dog",   "house", "water", "stone",  "tree",   "fire",  "bread", "milk",
    "horse", "river", "hand",  "eye",    "bird",   "fish",  "child", "woman",
    "man",   "road",  "sun",   "moon",   "star",   "cow",   "goat",  "knife",
    "rope",  "wall",  "door",  "field",  "grass",  "cloud", "rain",  "snow",
    "salt",  "meat",  "egg",   "apple",  "mouth",  "head",  "heart", "foot",
    "bone",  "blood", "skin",  "tooth",  "tongue", "name",  "word",  "song",
    "night", "day",   "year",  "village", "mountain", "sheep", "wolf", "bear",
    "leaf",  "root",  "seed",  "flower", "ash",    "smoke", "wind",  "sand",
    "gold",  "iron",  "pot",   "cup",    "bowl",   "bed",   "roof",  "path",
    "lake",  "sea",   "island", "boat",  "net",    "hook",  "arrow", "bow",
    "spear", "drum",  "cloth", "thread", "needle", "shoe",  "hat",   "ring",
    "king",  "friend", "enemy", "guest", "elder",  "priest", "smith", "hunter"};

std::string syllable(Rng& rng) {
  return std::string(kConsonants[rng.below(std::size(kConsonants))]) +
         kVowels[rng.below(std::size(kVowels))];
}

std::string draw_form(Rng& rng, int min_syll, int max_syll,
                      const std::set<std::string>& taken) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const int n = min_syll + static_cast<int>(rng.below(max_syll - min_syll + 1));
    std::string form;
    for (int i = 0; i < n; ++i) form += syllable(rng);
    if (!taken.count(form)) return form;
  }
  throw std::runtime_error("synthlang: phonotactic space exhausted");
}

std::string lexical_gloss(std::size_t i) {
  const std::size_t n = std::size(kLexicalGlosses);
  std::string g = kLexicalGlosses[i % n];
  if (i >= n) g += std::to_string(i / n + 1);
  return g;
}

WordAnalysis sample_word(const SynthLanguage& lang, Rng& rng) {
  WordAnalysis analysis{lang.stems[rng.below(lang.stems.size())]};
  for (const auto& slot : lang.slots) {
    if (slot.affixes.empty() || !rng.bernoulli(slot.occupancy)) continue;
    analysis.push_back(slot.affixes[rng.below(slot.affixes.size())]);
  }
  return analysis;
}

std::string pseudo_translation(const std::vector<WordAnalysis>& words) {
  std::string out;
  for (const auto& analysis : words) {
    if (is_punctuation_only(analysis.front().segment)) continue;
    if (!out.empty()) out.push_back(' ');
    out += analysis.front().gloss;
  }
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(out[0]));
  return out + ".";
}

IGTSentence make_sentence(const SynthLanguage& lang,
                          std::vector<WordAnalysis> analyses) {
  IGTSentence sentence;
  sentence.language = "synth";
  for (const auto& a : analyses) sentence.words.push_back(lang.surface(a));
  sentence.translation = pseudo_translation(analyses);
  sentence.word_analyses = std::move(analyses);
  return sentence;
}

}  // namespace

SynthSpec SynthSpec::standard(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.stem_count = 50;
  AffixSlot number{"number", {}, 0.7};
  for (const char* g : {"PL", "DU", "PAUC", "COLL"}) number.affixes.push_back({"x", g});
  AffixSlot kase{"case", {}, 0.7};
  for (const char* g : {"ERG", "DAT", "LOC", "ABL"}) kase.affixes.push_back({"x", g});
  // Segments are drawn by build_language.
  for (auto* slot : {&number, &kase})
    for (auto& m : slot->affixes) m.segment.clear();
  spec.slots = {number, kase};
  return spec;
}

std::string SynthLanguage::surface(const WordAnalysis& analysis) const {
  std::string out;
  for (const auto& m : analysis) {
    std::string right = m.segment;
    for (const auto& rule : allomorphy_rules) {
      if (out.size() >= rule.left.size() &&
          out.compare(out.size() - rule.left.size(), rule.left.size(), rule.left) == 0 &&
          right.compare(0, rule.right.size(), rule.right) == 0 && !out.empty()) {
        out.erase(out.size() - rule.left.size());
        right = rule.replacement + right.substr(rule.right.size());
        break;
      }
    }
    out += right;
  }
  return out;
}

SynthLanguage build_language(const SynthSpec& spec) {
  if (spec.stem_count <= 0)
    throw std::invalid_argument("synthlang: empty stem inventory");
  if (spec.sentence_min < 1 || spec.sentence_max < spec.sentence_min)
    throw std::invalid_argument("synthlang: invalid sentence length range");
  Rng rng = Rng::stream(spec.seed, "lexicon");
  SynthLanguage lang;
  lang.allomorphy_rules = spec.allomorphy_rules;

  std::set<std::string> taken;
  for (const auto& slot : spec.slots)
    for (const auto& m : slot.affixes)
      if (!m.segment.empty()) taken.insert(m.segment);

  lang.slots = spec.slots;
  for (auto& slot : lang.slots) {
    if (slot.occupancy < 0.0 || slot.occupancy > 1.0)
      throw std::invalid_argument("synthlang: occupancy outside [0,1] in slot " +
                                  slot.name);
    for (auto& m : slot.affixes) {
      if (m.gloss.empty())
        throw std::invalid_argument("synthlang: affix without gloss in slot " +
                                    slot.name);
      if (m.segment.empty()) {
        m.segment = draw_form(rng, 1, 1, taken);
        taken.insert(m.segment);
      }
    }
  }
  for (int i = 0; i < spec.stem_count; ++i) {
    const std::string form = draw_form(rng, 2, 3, taken);
    taken.insert(form);
    lang.stems.emplace_back(form, lexical_gloss(static_cast<std::size_t>(i)));
  }

  std::set<Morpheme> seen;
  for (const auto& m : lang.stems) seen.insert(m);
  for (const auto& slot : lang.slots)
    for (const auto& m : slot.affixes)
      if (!seen.insert(m).second)
        throw std::invalid_argument("synthlang: duplicate morpheme (" +
                                    m.segment + ", " + m.gloss + ")");
  return lang;
}

Corpus generate_corpus(const SynthSpec& spec, int n_sentences) {
  if (n_sentences < 0) throw std::invalid_argument("synthlang: negative sentence count");
  const SynthLanguage lang = build_language(spec);
  Rng rng = Rng::stream(spec.seed, "sentences");
  Corpus corpus;
  corpus.sentences.reserve(static_cast<std::size_t>(n_sentences));
  const Morpheme period(".", ".");
  for (int s = 0; s < n_sentences; ++s) {
    const int len = spec.sentence_min +
                    static_cast<int>(rng.below(spec.sentence_max - spec.sentence_min + 1));
    std::vector<WordAnalysis> analyses;
    for (int w = 0; w < len; ++w) analyses.push_back(sample_word(lang, rng));
    if (spec.punctuation_rate > 0.0 && rng.bernoulli(spec.punctuation_rate))
      analyses.push_back({period});
    corpus.sentences.push_back(make_sentence(lang, std::move(analyses)));
  }
  return corpus;
}

ParadigmGrid generate_paradigm_grid(const SynthSpec& spec,
                                    const PromptOptions& options) {
  const SynthLanguage lang = build_language(spec);
  ParadigmGrid grid;

  // Each slot takes "absent" (-1) or an affix index.
  std::vector<std::vector<int>> cells{{}};
  for (const auto& slot : lang.slots) {
    std::vector<std::vector<int>> next;
    for (const auto& c : cells)
      for (int a = -1; a < static_cast<int>(slot.affixes.size()); ++a) {
        auto extended = c;
        extended.push_back(a);
        next.push_back(std::move(extended));
      }
    cells = std::move(next);
  }

  auto analysis_of = [&](const Morpheme& stem, const std::vector<int>& cell) {
    WordAnalysis analysis{stem};
    for (std::size_t s = 0; s < cell.size(); ++s)
      if (cell[s] >= 0) analysis.push_back(lang.slots[s].affixes[cell[s]]);
    return analysis;
  };
  auto context_of = [&](const WordAnalysis& analysis) {
    IGTSentence sentence = make_sentence(lang, {analysis});
    return word_in_context(sentence, 0, options);
  };

  for (const auto& stem : lang.stems)
    for (const auto& cell : cells)
      grid.corpus.sentences.push_back(make_sentence(lang, {analysis_of(stem, cell)}));

  for (std::size_t s = 0; s < lang.slots.size(); ++s) {
    const auto& slot = lang.slots[s];
    for (std::size_t a = 0; a < slot.affixes.size(); ++a)
      for (std::size_t b = 0; b < slot.affixes.size(); ++b) {
        if (a == b) continue;
        TransformationGroup group;
        group.name = slot.affixes[a].gloss + ">" + slot.affixes[b].gloss;
        for (const auto& stem : lang.stems)
          for (const auto& cell : cells) {
            if (cell[s] != static_cast<int>(a)) continue;
            auto target = cell;
            target[s] = static_cast<int>(b);
            group.pairs.emplace_back(context_of(analysis_of(stem, cell)),
                                     context_of(analysis_of(stem, target)));
          }
        grid.groups.push_back(std::move(group));
      }
  }
  return grid;
}

OovSplit split_with_target_oov(const Corpus& corpus, double train_fraction,
                               double target_oov, std::uint64_t seed,
                               double tolerance) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must lie in (0,1)");
  if (!(target_oov >= 0.0 && target_oov < 1.0))
    throw std::invalid_argument("split: target_oov must lie in [0,1)");

  const std::size_t n = corpus.size();
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const std::size_t n_eval = n - n_train;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "split");
  rng.shuffle(order);

  // Morpheme types per sentence, as dense ids.
  std::map<Morpheme, std::size_t> type_id;
  std::vector<Morpheme> types;
  std::vector<std::vector<std::size_t>> sentence_types(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<std::size_t> ids;
    for (const auto& analysis : corpus.sentences[i].word_analyses)
      for (const auto& m : analysis) {
        if (is_punctuation_only(m.segment)) continue;
        auto [it, inserted] = type_id.emplace(m, types.size());
        if (inserted) types.push_back(m);
        ids.insert(it->second);
      }
    sentence_types[i].assign(ids.begin(), ids.end());
  }
  std::vector<std::size_t> sentence_freq(types.size(), 0);
  for (const auto& ids : sentence_types)
    for (auto t : ids) ++sentence_freq[t];

  struct Assignment {
    std::vector<bool> in_eval;
    double achieved = 0.0;
  };

  auto materialize = [&](const std::vector<bool>& in_eval) {
    OovSplit split;
    split.train.split = Split::train;
    split.eval.split = Split::test;
    for (std::size_t i = 0; i < n; ++i)
      (in_eval[i] ? split.eval : split.train).sentences.push_back(corpus.sentences[i]);
    return split;
  };
  auto measure = [&](const std::vector<bool>& in_eval) {
    std::set<Morpheme> keys;
    for (std::size_t i = 0; i < n; ++i)
      if (!in_eval[i])
        for (auto t : sentence_types[i]) keys.insert(types[t]);
    Corpus eval;
    for (std::size_t i = 0; i < n; ++i)
      if (in_eval[i]) eval.sentences.push_back(corpus.sentences[i]);
    return oov_rate(keys, eval);
  };

  auto assign = [&](const std::set<std::size_t>& held_out) -> std::optional<Assignment> {
    std::vector<bool> in_eval(n, false);
    std::vector<std::size_t> remaining = sentence_freq;
    std::size_t eval_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool forced = std::any_of(sentence_types[i].begin(), sentence_types[i].end(),
                                      [&](std::size_t t) { return held_out.count(t) > 0; });
      if (!forced) continue;
      in_eval[i] = true;
      ++eval_count;
      for (auto t : sentence_types[i]) --remaining[t];
    }
    if (eval_count > n_eval) return std::nullopt;
    // Fill with sentences whose types all stay attested in train.
    for (std::size_t i : order) {
      if (eval_count == n_eval) break;
      if (in_eval[i]) continue;
      const bool safe = std::all_of(sentence_types[i].begin(), sentence_types[i].end(),
                                    [&](std::size_t t) { return remaining[t] >= 2; });
      if (!safe) continue;
      in_eval[i] = true;
      ++eval_count;
      for (auto t : sentence_types[i]) --remaining[t];
    }
    for (std::size_t i : order) {
      if (eval_count == n_eval) break;
      if (in_eval[i]) continue;
      in_eval[i] = true;
      ++eval_count;
    }
    Assignment a{std::move(in_eval), 0.0};
    a.achieved = measure(a.in_eval);
    return a;
  };

  std::set<std::size_t> held_out;
  Assignment best = *assign(held_out);
  if (target_oov > 0.0) {
    std::vector<std::size_t> candidates(types.size());
    for (std::size_t t = 0; t < types.size(); ++t) candidates[t] = t;
    std::vector<std::size_t> tiebreak(types.size());
    for (auto& x : tiebreak) x = rng.next();
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      if (sentence_freq[a] != sentence_freq[b]) return sentence_freq[a] < sentence_freq[b];
      return tiebreak[a] < tiebreak[b];
    });
    for (std::size_t t : candidates) {
      if (best.achieved >= target_oov) break;
      auto trial_set = held_out;
      trial_set.insert(t);
      auto trial = assign(trial_set);
      if (!trial) continue;
      if (std::abs(trial->achieved - target_oov) < std::abs(best.achieved - target_oov)) {
        held_out = std::move(trial_set);
        best = std::move(*trial);
      }
    }
  }

  OovSplit split = materialize(best.in_eval);
  split.achieved_oov = best.achieved;
  split.feasible = std::abs(best.achieved - target_oov) <= tolerance;
  return split;
}

SynthSpec parse_synth_spec(std::istream& input) {
  CLI::ConfigINI format;
  const auto items = format.from_config(input);
  SynthSpec spec;
  spec.slots.clear();
  std::map<std::string, std::size_t> slot_index;

  auto joined = [](const CLI::ConfigItem& item) {
    std::string v;
    for (const auto& s : item.inputs) {
      if (!v.empty()) v.push_back(' ');
      v += s;
    }
    return v;
  };

  for (const auto& item : items) {
    if (item.name == "--" || item.name == "++") continue;
    const std::string value = joined(item);
    const std::vector<std::string>& parents = item.parents;
    if (parents.empty() || (parents.size() == 1 && parents[0] == "default")) {
      if (item.name == "stem_count") spec.stem_count = std::stoi(value);
      else if (item.name == "sentence_min") spec.sentence_min = std::stoi(value);
      else if (item.name == "sentence_max") spec.sentence_max = std::stoi(value);
      else if (item.name == "punctuation_rate") spec.punctuation_rate = std::stod(value);
      else if (item.name == "seed") spec.seed = std::stoull(value);
      else throw std::invalid_argument("synth spec: unknown key " + item.name);
    } else if (parents[0] == "slot" && parents.size() == 2) {
      auto [it, inserted] = slot_index.emplace(parents[1], spec.slots.size());
      if (inserted) spec.slots.push_back({parents[1], {}, 0.7});
      AffixSlot& slot = spec.slots[it->second];
      if (item.name == "occupancy") {
        slot.occupancy = std::stod(value);
      } else if (item.name == "affixes") {
        // Each affix is GLOSS or segment:GLOSS.
        for (const auto& token : split_whitespace(value)) {
          const auto colon = token.find(':');
          Morpheme m;
          if (colon == std::string::npos) {
            m.gloss = token;
          } else {
            m = Morpheme(token.substr(0, colon), token.substr(colon + 1));
          }
          slot.affixes.push_back(m);
        }
      } else {
        throw std::invalid_argument("synth spec: unknown slot key " + item.name);
      }
    } else if (parents[0] == "allomorphy") {
      if (item.name != "rule")
        throw std::invalid_argument("synth spec: unknown allomorphy key " + item.name);
      // left+right>replacement
      const auto plus = value.find('+');
      const auto arrow = value.find('>');
      if (plus == std::string::npos || arrow == std::string::npos || arrow < plus)
        throw std::invalid_argument("synth spec: malformed rule " + value);
      spec.allomorphy_rules.push_back({std::string(trim(value.substr(0, plus))),
                                       std::string(trim(value.substr(plus + 1, arrow - plus - 1))),
                                       std::string(trim(value.substr(arrow + 1)))});
    } else {
      throw std::invalid_argument("synth spec: unknown section " + parents[0]);
    }
  }
  if (spec.slots.empty()) spec.slots = SynthSpec::standard(spec.seed).slots;
  return spec;
}

SynthSpec read_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synth spec: " + path);
  return parse_synth_spec(in);
}

}  // namespace morphoglot
