// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/features/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "moodpipe/nn/rng.hpp"

namespace moodpipe::features {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

void accumulate_token(std::string_view token, std::vector<double>& acc) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(token.data());
  std::uint64_t state = fnv1a64({p, token.size()});
  std::uint64_t bits = 0;
  for (std::size_t j = 0; j < acc.size(); ++j) {
    if (j % 64 == 0) bits = nn::splitmix64(state);
    acc[j] += (bits >> (j % 64)) & 1 ? 1.0 : -1.0;
  }
}

}  // namespace

std::vector<float> hash_embed(std::string_view text, std::size_t width) {
  std::vector<double> acc(width, 0.0);
  std::size_t tokens = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) {
      accumulate_token(text.substr(start, i - start), acc);
      ++tokens;
    }
  }
  std::vector<float> out(width, 0.0f);
  if (tokens == 0) return out;
  double norm = 0.0;
  for (double& v : acc) {
    v /= static_cast<double>(tokens);
    norm += v * v;
  }
  norm = std::max(std::sqrt(norm), 1e-12);
  std::transform(acc.begin(), acc.end(), out.begin(),
                 [norm](double v) { return static_cast<float>(v / norm); });
  return out;
}

EmbeddingMatrix hash_embed_rows(std::span<const std::string> transcripts,
                                std::size_t width) {
  EmbeddingMatrix m(transcripts.size(), width);
  for (std::size_t r = 0; r < transcripts.size(); ++r) {
    const auto row = hash_embed(transcripts[r], width);
    std::copy(row.begin(), row.end(), m.values.begin() + r * width);
  }
  return m;
}

}  // namespace moodpipe::features
