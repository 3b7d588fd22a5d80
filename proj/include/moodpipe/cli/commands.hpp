// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "moodpipe/cli/config.hpp"
#include "moodpipe/eval/eval.hpp"
#include "moodpipe/synth/synth.hpp"

namespace moodpipe::cli {

/// Features are missing or do not match the configuration; the message
/// names the featurize command to run.
class MissingFeaturesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Streams {
  std::ostream& out;  // results
  std::ostream& log;  // progress and warnings
};

std::filesystem::path features_dir(const PipelineConfig& cfg);
std::filesystem::path crossval_dir(const PipelineConfig& cfg);

struct FeaturizeSummary {
  std::size_t participants = 0;
  std::size_t files_written = 0;
  std::size_t participants_skipped = 0;  // already up to date
  std::vector<std::string> rejected;
};

/// Writes `<out>/features/<id>/mel_k.mmx` per response and `text.mmx` per
/// participant, plus `index.json` and `rejections.json`. A participant is
/// skipped when the hash of its inputs and the feature settings matches the
/// one recorded last time and its outputs still verify. `<corpus>/<id>/text.mmx`
/// from the exporter is used in place of the hash embedding when present.
FeaturizeSummary featurize(const PipelineConfig& cfg, const Streams& io);

/// Features written by featurize, in index order.
eval::CrossvalData load_features(const PipelineConfig& cfg);

int cmd_validate(const PipelineConfig& cfg, const Streams& io);
int cmd_featurize(const PipelineConfig& cfg, const Streams& io);
int cmd_train(const PipelineConfig& cfg, const Streams& io);
int cmd_crossval(const PipelineConfig& cfg, bool csv, const Streams& io);
int cmd_report(const std::filesystem::path& report, bool csv, const Streams& io);
int cmd_resample_report(const PipelineConfig& cfg, const Streams& io);
int cmd_synth(const synth::SynthSpec& spec, const std::filesystem::path& out, const Streams& io);

}  // namespace moodpipe::cli
