// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "moodpipe/corpus/corpus.hpp"

namespace moodpipe::synth {

struct SynthSpec {
  std::size_t n_depressed = 30;
  std::size_t n_control = 132;
  /// 0 is the separable corpus; sigma > 0 blurs both modalities (see noisy()).
  double sigma = 0.0;
  corpus::CorpusKind kind = corpus::CorpusKind::kThreeResponse;
  std::size_t interview_responses = 30;  // responses per participant in interview corpora
  std::uint64_t seed = 1;

  std::size_t responses() const;
  /// Throws std::invalid_argument on zero counts, negative sigma or an
  /// interview with no responses.
  void validate() const;
};

inline constexpr double kDepressedPitchHz = 120.0;
inline constexpr double kControlPitchHz = 250.0;
inline constexpr int kDepressedScore = 60;  // SDS raw scores
inline constexpr int kControlScore = 30;

/// Probability that a transcript word comes from the other class vocabulary:
/// Phi(-1/sigma), the chance a participant pitch drawn with standard
/// deviation sigma * (half the class gap) crosses the midpoint.
double word_swap_probability(double sigma);

struct GenerateSummary {
  std::size_t depressed = 0;
  std::size_t control = 0;
  std::size_t files = 0;
};

/// Writes `<root>/<id>/{meta.json, response_k.wav, response_k.txt}` plus
/// `<root>/synth.json` describing the spec. Participant k is generated from
/// its own child stream, so output does not depend on generation order.
/// Fails if root exists and is not empty.
GenerateSummary generate(const SynthSpec& spec, const std::filesystem::path& root);

std::string to_toml(const SynthSpec& spec);
/// Applies the keys written by to_toml on top of `base`; unknown keys are
/// rejected.
SynthSpec spec_from_toml(std::string_view text, SynthSpec base = {});

}  // namespace moodpipe::synth
