// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/sampling/sampling.hpp"

#include <algorithm>
#include <numeric>

namespace moodpipe::sampling {

const char* to_string(SampleKind k) {
  switch (k) {
    case SampleKind::kGroup: return "group";
    case SampleKind::kPermutation: return "permutation";
    case SampleKind::kOriginal: return "original";
  }
  return "unknown";
}

NoFullGroupError::NoFullGroupError(const std::string& participant, std::size_t rows)
    : std::runtime_error((participant.empty() ? std::string() : "participant " + participant + ": ") +
                         std::to_string(rows) + " responses, fewer than one full group of " +
                         std::to_string(kGroupSize)) {}

std::vector<std::size_t> group_starts(std::size_t rows, const std::string& participant) {
  if (rows < kGroupSize) throw NoFullGroupError(participant, rows);
  std::vector<std::size_t> starts(rows / kGroupSize);
  for (std::size_t g = 0; g < starts.size(); ++g) starts[g] = g * kGroupSize;
  return starts;
}

std::vector<nn::Tensor> group_segments(const nn::Tensor& matrix, const std::string& participant) {
  std::vector<nn::Tensor> out;
  for (std::size_t start : group_starts(matrix.rows(), participant)) {
    nn::Tensor g({kGroupSize, matrix.cols()});
    for (std::size_t r = 0; r < kGroupSize; ++r)
      for (std::size_t c = 0; c < matrix.cols(); ++c) g(r, c) = matrix(start + r, c);
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

Sample group_sample(std::size_t participant, const ParticipantInfo& info, std::size_t group) {
  Sample s;
  s.participant = participant;
  s.label = info.label;
  s.kind = SampleKind::kGroup;
  s.variant = group;
  s.responses.resize(kGroupSize);
  std::iota(s.responses.begin(), s.responses.end(), group * kGroupSize);
  return s;
}

Sample original_sample(std::size_t participant, const ParticipantInfo& info) {
  Sample s;
  s.participant = participant;
  s.label = info.label;
  s.kind = SampleKind::kOriginal;
  s.responses.resize(info.responses);
  std::iota(s.responses.begin(), s.responses.end(), std::size_t{0});
  return s;
}

}  // namespace

std::vector<Sample> permutation_augment(std::size_t participant, const ParticipantInfo& info) {
  if (info.responses != kThreeResponses) {
    throw SamplingError("participant " + info.id + ": permutation needs exactly 3 responses, has " +
                        std::to_string(info.responses));
  }
  std::vector<Sample> out;
  std::vector<std::size_t> order{0, 1, 2};
  std::size_t index = 0;
  do {
    Sample s;
    s.participant = participant;
    s.label = info.label;
    s.kind = SampleKind::kPermutation;
    s.variant = index++;
    s.responses = order;
    out.push_back(std::move(s));
  } while (std::next_permutation(order.begin(), order.end()));
  return out;
}

BalanceResult balance_by_resampling(const std::vector<ParticipantInfo>& participants,
                                    const std::vector<std::size_t>& members, nn::Rng& rng) {
  BalanceResult out;
  std::vector<std::size_t> by_class[2];
  for (std::size_t p : members) {
    const auto& info = participants.at(p);
    if (info.responses < kGroupSize) {
      out.warnings.push_back(NoFullGroupError(info.id, info.responses).what() + std::string("; skipped"));
      continue;
    }
    by_class[info.label == 1 ? 1 : 0].push_back(p);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw SamplingError("resampling needs at least one participant with a full group in each class");
  }
  const int majority = by_class[1].size() > by_class[0].size() ? 1 : 0;
  const int minority = 1 - majority;
  const std::size_t target = by_class[majority].size();

  std::vector<Sample> picked[2];
  for (std::size_t p : by_class[majority]) {
    const std::size_t groups = participants[p].responses / kGroupSize;
    picked[majority].push_back(group_sample(p, participants[p], rng.below(groups)));
  }

  const auto& pool = by_class[minority];
  std::vector<std::vector<std::size_t>> order(pool.size());
  auto reshuffle = [&] {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      order[i].resize(participants[pool[i]].responses / kGroupSize);
      std::iota(order[i].begin(), order[i].end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(order[i]));
    }
  };
  reshuffle();
  std::size_t round = 0;
  while (picked[minority].size() < target) {
    bool took = false;
    for (std::size_t i = 0; i < pool.size() && picked[minority].size() < target; ++i) {
      if (round < order[i].size()) {
        picked[minority].push_back(group_sample(pool[i], participants[pool[i]], order[i][round]));
        took = true;
      }
    }
    ++round;
    if (!took) {
      out.warnings.push_back("minority pool of " + std::to_string(picked[minority].size()) +
                             " groups exhausted before reaching " + std::to_string(target) +
                             "; recycling groups");
      reshuffle();
      round = 0;
    }
  }

  // Stable output: by class (non-depressed first), then draw order.
  out.samples = std::move(picked[0]);
  out.samples.insert(out.samples.end(), picked[1].begin(), picked[1].end());
  out.non_depressed = target;
  out.depressed = target;
  return out;
}

BalanceResult build_training_set(const std::vector<ParticipantInfo>& participants,
                                 const std::vector<std::size_t>& members, bool interview, nn::Rng& rng) {
  if (interview) return balance_by_resampling(participants, members, rng);
  BalanceResult out;
  for (std::size_t p : members) {
    const auto& info = participants.at(p);
    if (info.label == 1) {
      for (auto& s : permutation_augment(p, info)) out.samples.push_back(std::move(s));
      out.depressed += 6;
    } else {
      out.samples.push_back(original_sample(p, info));
      ++out.non_depressed;
    }
  }
  return out;
}

Sample select_eval_segment(std::size_t participant, const ParticipantInfo& info, bool interview, nn::Rng& rng) {
  if (!interview) return original_sample(participant, info);
  const auto starts = group_starts(info.responses, info.id);
  return group_sample(participant, info, rng.below(starts.size()));
}

models::Example make_example(const Sample& s, const std::vector<ParticipantFeatures>& features) {
  const ParticipantFeatures& f = features.at(s.participant);
  models::Example e;
  e.label = s.label;
  e.text = nn::Tensor({s.responses.size(), f.text.cols()});
  for (std::size_t i = 0; i < s.responses.size(); ++i) {
    const std::size_t r = s.responses[i];
    if (r >= f.mels.size() || r >= f.text.rows()) {
      throw SamplingError("sample refers to response " + std::to_string(r) + " of a participant with " +
                          std::to_string(f.mels.size()) + " responses");
    }
    e.mels.push_back(&f.mels[r]);
    for (std::size_t c = 0; c < f.text.cols(); ++c) e.text(i, c) = f.text(r, c);
  }
  return e;
}

nlohmann::json resample_report(const std::vector<ParticipantInfo>& participants, bool interview, nn::Rng& rng) {
  std::vector<std::size_t> members(participants.size());
  std::iota(members.begin(), members.end(), std::size_t{0});
  std::size_t pre[2] = {0, 0};
  for (const auto& p : participants) ++pre[p.label == 1 ? 1 : 0];
  const BalanceResult bal = build_training_set(participants, members, interview, rng);

  nlohmann::json groups = nlohmann::json::object();
  std::size_t discarded = 0;
  if (interview) {
    for (const auto& p : participants) {
      groups[p.id] = p.responses / kGroupSize;
      discarded += p.responses >= kGroupSize ? p.responses % kGroupSize : p.responses;
    }
  }
  return {{"mode", interview ? "group-resampling" : "permutation"},
          {"pre", {{"depressed", pre[1]}, {"non_depressed", pre[0]}}},
          {"post", {{"depressed", bal.depressed}, {"non_depressed", bal.non_depressed}}},
          {"groups_per_participant", groups},
          {"discarded_rows", discarded},
          {"warnings", bal.warnings}};
}

}  // namespace moodpipe::sampling
