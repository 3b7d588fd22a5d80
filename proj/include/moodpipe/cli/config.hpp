// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "moodpipe/corpus/corpus.hpp"
#include "moodpipe/features/audio_features.hpp"
#include "moodpipe/models/train.hpp"

namespace moodpipe::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PipelineConfig {
  std::filesystem::path corpus;
  corpus::CorpusKind kind = corpus::CorpusKind::kThreeResponse;
  std::filesystem::path out = "moodpipe-out";
  features::MelConfig mel;
  models::ModelConfig model;  // model.audio.netvlad.feature_dim follows mel.n_mels
  models::TrainConfig train;
  std::uint64_t seed = 0;
  std::size_t k = 3;
  /// crossval: "all" or one of audio/text/fusion. train: "all" means fusion.
  std::string modality = "all";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  std::vector<models::Modality> modalities() const;
};

/// Built-in defaults with the seed taken from MOODPIPE_SEED when set.
PipelineConfig default_config();
std::optional<std::uint64_t> env_seed();
std::uint64_t parse_seed(std::string_view text, std::string_view what);

std::string to_toml(const PipelineConfig& cfg);
/// Applies the keys in `text` on top of `base`. Unknown tables or keys and
/// wrongly typed values throw ConfigError. The result is not validated.
PipelineConfig apply_toml(std::string_view text, PipelineConfig base, const std::string& source = "<config>");
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base);

}  // namespace moodpipe::cli
