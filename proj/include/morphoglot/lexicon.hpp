#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "morphoglot/encoder.hpp"
#include "morphoglot/igt.hpp"
#include "morphoglot/nn/checkpoint.hpp"

namespace morphoglot {

enum class Provenance : std::uint8_t { train = 0, user = 1, eval_oracle = 2 };

std::string to_string(Provenance provenance);
Provenance parse_provenance(const std::string& text);

struct LexiconEntry {
  Morpheme morpheme;
  Provenance provenance = Provenance::train;
};

struct Neighbor {
  std::size_t index = 0;
  float similarity = 0.0f;
};

/// Fingerprint mismatch between a lexicon and the encoder used with it.
class StaleLexicon : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Append-only morpheme codebook. Row 0 is the end-of-word entry; every
/// other row is one (segment, gloss) type with its unit-norm embedding.
class Lexicon {
 public:
  static constexpr std::size_t kEos = 0;

  /// A lexicon holding only the end-of-word row, embedded from kEosPrompt.
  explicit Lexicon(const EncoderModel& encoder);

  std::size_t size() const { return entries_.size(); }
  int dim() const { return static_cast<int>(embeddings_.cols()); }
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  const LexiconEntry& entry(std::size_t index) const { return entries_.at(index); }
  const Matrix<float>& embeddings() const { return embeddings_; }
  const nn::Fingerprint& encoder_fingerprint() const { return fingerprint_; }

  std::optional<std::size_t> find(const Morpheme& morpheme) const;
  bool contains(const Morpheme& morpheme) const { return find(morpheme).has_value(); }
  std::size_t count(Provenance provenance) const;

  /// Idempotent: an existing key returns its index untouched.
  std::size_t add_entry(const EncoderModel& encoder, const Morpheme& morpheme,
                        Provenance provenance, bool* added = nullptr);
  /// Appends the absent keys of `morphemes` (first occurrence order);
  /// returns how many were added.
  std::size_t add_entries(const EncoderModel& encoder, const std::vector<Morpheme>& morphemes,
                          Provenance provenance);

  /// Exact top-k by dot product, ties toward the lower index.
  std::vector<Neighbor> nearest_k(const Eigen::VectorXf& query, int k) const;

  void check_encoder(const EncoderModel& encoder) const;

  std::string serialize() const;
  static Lexicon deserialize(const std::string& bytes);
  /// Header row, then segment<TAB>gloss<TAB>provenance per entry; end-of-word row omitted.
  std::string to_tsv() const;

  bool operator==(const Lexicon& other) const;

 private:
  Lexicon() = default;
  void append(const std::vector<LexiconEntry>& entries, const Matrix<float>& rows);

  std::vector<LexiconEntry> entries_;
  Matrix<float> embeddings_;
  nn::Fingerprint fingerprint_{};
  std::map<Morpheme, std::size_t> index_;
};

/// One train-provenance entry per distinct non-punctuation morpheme of the
/// corpus, in first-occurrence order.
Lexicon build_lexicon(const EncoderModel& encoder, const Corpus& train);

/// Adds every evaluation morpheme missing from the lexicon with provenance
/// eval_oracle; returns the count added.
std::size_t extend_with_oracle(Lexicon& lexicon, const EncoderModel& encoder,
                               const Corpus& eval);

void save_lexicon(const std::string& path, const Lexicon& lexicon);
Lexicon load_lexicon(const std::string& path);

}  // namespace morphoglot
