#include "morphoglot/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <numeric>
#include <set>
#include <sstream>

namespace morphoglot {

namespace {
constexpr char kMagic[4] = {'M', 'G', 'L', 'X'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::string to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::train: return "train";
    case Provenance::user: return "user";
    case Provenance::eval_oracle: return "eval_oracle";
  }
  throw std::invalid_argument("bad provenance");
}

Provenance parse_provenance(const std::string& text) {
  if (text == "train") return Provenance::train;
  if (text == "user") return Provenance::user;
  if (text == "eval_oracle") return Provenance::eval_oracle;
  throw std::invalid_argument("unknown provenance '" + text + "'");
}

Lexicon::Lexicon(const EncoderModel& encoder) : fingerprint_(encoder.fingerprint()) {
  entries_.push_back({Morpheme(std::string(kEosPrompt), std::string(kEosPrompt)), Provenance::train});
  embeddings_ = embed_texts(encoder, {std::string(kEosPrompt)});
}

std::optional<std::size_t> Lexicon::find(const Morpheme& morpheme) const {
  auto it = index_.find(morpheme);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Lexicon::count(Provenance provenance) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin() + 1, entries_.end(),
                    [&](const LexiconEntry& e) { return e.provenance == provenance; }));
}

void Lexicon::check_encoder(const EncoderModel& encoder) const {
  if (encoder.fingerprint() != fingerprint_)
    throw StaleLexicon("lexicon was built with encoder " + nn::to_hex(fingerprint_) +
                       ", not " + nn::to_hex(encoder.fingerprint()));
}

void Lexicon::append(const std::vector<LexiconEntry>& entries, const Matrix<float>& rows) {
  const auto old = static_cast<nn::Index>(entries_.size());
  embeddings_.conservativeResize(old + rows.rows(), embeddings_.cols());
  embeddings_.bottomRows(rows.rows()) = rows;
  for (const auto& e : entries) {
    index_[e.morpheme] = entries_.size();
    entries_.push_back(e);
  }
}

std::size_t Lexicon::add_entry(const EncoderModel& encoder, const Morpheme& morpheme,
                               Provenance provenance, bool* added) {
  if (auto existing = find(morpheme)) {
    if (added) *added = false;
    return *existing;
  }
  check_encoder(encoder);
  const Matrix<float> row = embed_morphemes(encoder, std::span<const Morpheme>(&morpheme, 1));
  append({{morpheme, provenance}}, row);
  if (added) *added = true;
  return entries_.size() - 1;
}

std::size_t Lexicon::add_entries(const EncoderModel& encoder,
                                 const std::vector<Morpheme>& morphemes,
                                 Provenance provenance) {
  std::vector<Morpheme> fresh;
  std::set<Morpheme> seen;
  for (const auto& m : morphemes)
    if (!contains(m) && seen.insert(m).second) fresh.push_back(m);
  if (fresh.empty()) return 0;
  check_encoder(encoder);
  std::vector<LexiconEntry> entries;
  for (const auto& m : fresh) entries.push_back({m, provenance});
  append(entries, embed_morphemes(encoder, fresh));
  return fresh.size();
}

std::vector<Neighbor> Lexicon::nearest_k(const Eigen::VectorXf& query, int k) const {
  if (k <= 0) throw std::invalid_argument("nearest_k: k must be positive");
  if (query.size() != embeddings_.cols())
    throw std::invalid_argument("nearest_k: query dimension mismatch");
  if (std::abs(query.norm() - 1.0f) > 1e-3f)
    throw std::invalid_argument("nearest_k: query is not unit norm");
  const Eigen::VectorXf sims = embeddings_ * query;
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min(order.size(), static_cast<std::size_t>(k));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const float sa = sims(static_cast<nn::Index>(a));
                      const float sb = sims(static_cast<nn::Index>(b));
                      return sa != sb ? sa > sb : a < b;
                    });
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({order[i], sims(static_cast<nn::Index>(order[i]))});
  return out;
}

std::string Lexicon::serialize() const {
  std::string out(kMagic, 4);
  nn::wire::put_u32(out, kVersion);
  nn::wire::put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  nn::wire::put_u32(out, static_cast<std::uint32_t>(embeddings_.cols()));
  out.append(reinterpret_cast<const char*>(fingerprint_.data()), fingerprint_.size());
  for (const auto& e : entries_) {
    nn::wire::put_string(out, e.morpheme.segment);
    nn::wire::put_string(out, e.morpheme.gloss);
    nn::wire::put_u8(out, static_cast<std::uint8_t>(e.provenance));
  }
  for (nn::Index i = 0; i < embeddings_.size(); ++i) nn::wire::put_f32(out, embeddings_.data()[i]);
  return out;
}

Lexicon Lexicon::deserialize(const std::string& bytes) {
  nn::wire::Reader in(bytes);
  if (in.raw(4) != std::string(kMagic, 4)) throw nn::FormatError("not a lexicon file (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kVersion)
    throw nn::FormatError("unsupported lexicon version " + std::to_string(version));
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  if (count == 0) throw nn::FormatError("lexicon without end-of-word entry");
  Lexicon lex;
  const std::string fp = in.raw(lex.fingerprint_.size());
  std::copy(fp.begin(), fp.end(), lex.fingerprint_.begin());
  if (std::all_of(lex.fingerprint_.begin(), lex.fingerprint_.end(),
                  [](std::uint8_t b) { return b == 0; }))
    throw nn::FormatError("lexicon has no encoder fingerprint");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string segment = in.string();
    std::string gloss = in.string();
    const std::uint8_t prov = in.u8();
    if (prov > 2) throw nn::FormatError("bad provenance byte");
    try {
      lex.entries_.push_back({Morpheme(segment, gloss), static_cast<Provenance>(prov)});
    } catch (const std::invalid_argument& e) {
      throw nn::FormatError(std::string("bad lexicon entry: ") + e.what());
    }
    if (i > 0 && !lex.index_.emplace(lex.entries_.back().morpheme, i).second)
      throw nn::FormatError("duplicate lexicon entry");
  }
  if (in.remaining() != static_cast<std::size_t>(count) * dim * 4)
    throw nn::FormatError("lexicon embedding block has the wrong size");
  lex.embeddings_.resize(count, dim);
  for (nn::Index i = 0; i < lex.embeddings_.size(); ++i) lex.embeddings_.data()[i] = in.f32();
  return lex;
}

std::string Lexicon::to_tsv() const {
  std::ostringstream out;
  out << "segment\tgloss\tprovenance\n";
  for (std::size_t i = 1; i < entries_.size(); ++i)
    out << entries_[i].morpheme.segment << '\t' << entries_[i].morpheme.gloss << '\t'
        << to_string(entries_[i].provenance) << '\n';
  return out.str();
}

bool Lexicon::operator==(const Lexicon& other) const {
  if (entries_.size() != other.entries_.size() || fingerprint_ != other.fingerprint_ ||
      embeddings_.rows() != other.embeddings_.rows() ||
      embeddings_.cols() != other.embeddings_.cols())
    return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].morpheme != other.entries_[i].morpheme ||
        entries_[i].provenance != other.entries_[i].provenance)
      return false;
  return std::equal(embeddings_.data(), embeddings_.data() + embeddings_.size(),
                    other.embeddings_.data(), [](float a, float b) {
                      return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
                    });
}

Lexicon build_lexicon(const EncoderModel& encoder, const Corpus& train) {
  Lexicon lex(encoder);
  lex.add_entries(encoder, distinct_morphemes(train), Provenance::train);
  return lex;
}

std::size_t extend_with_oracle(Lexicon& lexicon, const EncoderModel& encoder,
                               const Corpus& eval) {
  return lexicon.add_entries(encoder, distinct_morphemes(eval), Provenance::eval_oracle);
}

void save_lexicon(const std::string& path, const Lexicon& lexicon) {
  nn::write_file(path, lexicon.serialize());
}

Lexicon load_lexicon(const std::string& path) {
  return Lexicon::deserialize(nn::read_file(path));
}

}  // namespace morphoglot
