#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphoglot/decoder.hpp"
#include "morphoglot/encoder.hpp"
#include "morphoglot/lexicon.hpp"
#include "morphoglot/synth.hpp"

namespace morphoglot {

/// Every hyperparameter of a training run. Defaults follow the published
/// recipe with the desk-scale model sizes.
struct RunConfig {
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  EncoderTrainConfig encoder_train;
  DecoderConfig decoder;
  DecoderTrainConfig decoder_train;
  DecodeOptions decode;

  /// Sectioned key = value rendering ([encoder], [decoder], [decode]).
  std::string to_ini() const;
};

/// Small word-only configuration that trains the standard synthetic
/// language within a minute on one CPU core.
RunConfig quick_config(std::uint64_t seed = 0);

/// Full model sizes: 12x768 encoder, 4x512 decoder.
RunConfig full_config(std::uint64_t seed = 0);

/// "desk" (defaults), "quick" or "full"; throws std::invalid_argument.
RunConfig preset_config(const std::string& name, std::uint64_t seed = 0);

struct PipelineResult {
  EncoderModel encoder;
  Lexicon lexicon;
  DecoderModel decoder;
  EncoderTrainLog encoder_log;
  DecoderTrainLog decoder_log;
};

/// Trains the encoder, builds the train lexicon and trains the decoder.
PipelineResult run_pipeline(const Corpus& train, const Corpus* dev, const RunConfig& config);

struct SweepRow {
  int size = 0;
  int seed = 0;
  double gloss_mer = 0.0;
  double segment_mer = 0.0;
};

struct SweepSummary {
  int size = 0;
  double mean_gloss_mer = 0.0;
  double mean_segment_mer = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;

  std::string to_tsv(const std::string& header_comment = "") const;
};

using SweepProgress = std::function<void(const SweepRow&)>;

/// For each seed, shuffles `pool` and trains on nested prefixes of the
/// requested sizes; every run is scored on `test` (train lexicon).
SweepResult run_sweep(const Corpus& pool, const Corpus& test, const std::vector<int>& sizes,
                      int seeds, const RunConfig& config, const SweepProgress& progress = nullptr);

}  // namespace morphoglot
