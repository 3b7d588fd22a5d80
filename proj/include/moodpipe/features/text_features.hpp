// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moodpipe/features/embedding_io.hpp"

namespace moodpipe::features {

inline constexpr std::size_t kTextEmbeddingWidth = 1024;

/// Deterministic bag-of-words sentence embedding used when no exported
/// embeddings exist. Each whitespace token maps to a +/-1 vector derived
/// from its FNV-1a hash; the token vectors are averaged and the result is
/// L2-normalized (norm guarded by 1e-12). Empty text gives the zero vector.
std::vector<float> hash_embed(std::string_view text,
                              std::size_t width = kTextEmbeddingWidth);

/// One hash_embed row per transcript.
EmbeddingMatrix hash_embed_rows(std::span<const std::string> transcripts,
                                std::size_t width = kTextEmbeddingWidth);

}  // namespace moodpipe::features
