// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "moodpipe/nn/layers.hpp"

namespace moodpipe::nn {

/// Checkpoint directory: one MMX1 file per parameter (`<name>.mmx`, rank-1
/// tensors stored as a single row) plus `manifest.json` with names, shapes,
/// the seed, and caller-supplied metadata. Values are stored as float32.
void save_checkpoint(const std::filesystem::path& dir, const ParamList& params,
                     std::uint64_t seed, const nlohmann::json& metadata = {});

/// Loads values into `params` by name; shapes must match the manifest.
/// Returns the manifest.
nlohmann::json load_checkpoint(const std::filesystem::path& dir,
                               const ParamList& params);

}  // namespace moodpipe::nn
