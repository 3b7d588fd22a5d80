// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "moodpipe/models/models.hpp"
#include "moodpipe/nn/rng.hpp"
#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::sampling {

inline constexpr std::size_t kGroupSize = 10;
inline constexpr std::size_t kThreeResponses = 3;

enum class SampleKind { kGroup, kPermutation, kOriginal };
const char* to_string(SampleKind k);

/// A training or evaluation sample as indices: which participant, and which
/// of its responses in which order. Audio and text are looked up with the
/// same indices, so the two modalities stay paired.
struct Sample {
  std::size_t participant = 0;     // position in the caller's participant list
  std::vector<std::size_t> responses;
  int label = 0;
  SampleKind kind = SampleKind::kOriginal;
  std::size_t variant = 0;         // group index or permutation index

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// What sampling needs to know about a participant.
struct ParticipantInfo {
  std::string id;
  int label = 0;
  std::size_t responses = 0;
};

class NoFullGroupError : public std::runtime_error {
 public:
  NoFullGroupError(const std::string& participant, std::size_t rows);
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Start rows of the floor(N / 10) contiguous groups; the trailing N mod 10
/// rows are discarded. Throws NoFullGroupError when N < 10.
std::vector<std::size_t> group_starts(std::size_t rows, const std::string& participant = {});

/// The groups themselves, as 10 x W matrices.
std::vector<nn::Tensor> group_segments(const nn::Tensor& matrix, const std::string& participant = {});

/// The six orderings of three responses in lexicographic order
/// (abc, acb, bac, bca, cab, cba).
std::vector<Sample> permutation_augment(std::size_t participant, const ParticipantInfo& info);

struct BalanceResult {
  std::vector<Sample> samples;
  std::size_t depressed = 0;
  std::size_t non_depressed = 0;
  std::vector<std::string> warnings;  // recycled pool, skipped participants
};

/// Group resampling for interview corpora. Every majority-class participant
/// contributes one randomly chosen group. Minority groups are then drawn
/// round-robin over the minority participants (in list order, each
/// participant's groups in a shuffled order) without replacement until the
/// classes are equal; an exhausted pool is reshuffled and reused with a
/// warning. Participants without a full group are skipped with a warning.
BalanceResult balance_by_resampling(const std::vector<ParticipantInfo>& participants,
                                    const std::vector<std::size_t>& members, nn::Rng& rng);

/// Training samples for `members` (indices into `participants`):
/// three-response corpora get the depressed class permuted 6 ways and
/// controls in original order; interview corpora go through
/// balance_by_resampling.
BalanceResult build_training_set(const std::vector<ParticipantInfo>& participants,
                                 const std::vector<std::size_t>& members, bool interview, nn::Rng& rng);

/// One evaluation sample: a uniformly drawn group for interviews, the
/// original order for three-response corpora (no draw).
Sample select_eval_segment(std::size_t participant, const ParticipantInfo& info, bool interview, nn::Rng& rng);

/// Per-participant features, rows indexed by response.
struct ParticipantFeatures {
  std::vector<nn::Tensor> mels;  // one T x D spectrogram per response
  nn::Tensor text;               // responses x W
};

models::Example make_example(const Sample& s, const std::vector<ParticipantFeatures>& features);

/// JSON summary for the resample-report command.
nlohmann::json resample_report(const std::vector<ParticipantInfo>& participants, bool interview,
                               nn::Rng& rng);

}  // namespace moodpipe::sampling
