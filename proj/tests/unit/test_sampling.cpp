// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <numeric>
#include <set>

#include "moodpipe/sampling/sampling.hpp"
#include "unit/test_util.hpp"

using namespace moodpipe;
using namespace moodpipe::sampling;

namespace {

std::vector<ParticipantInfo> interview_cohort(nn::Rng& rng, std::size_t depressed, std::size_t controls,
                                              std::size_t min_rows, std::size_t max_rows) {
  std::vector<ParticipantInfo> out;
  for (std::size_t i = 0; i < depressed + controls; ++i) {
    ParticipantInfo p;
    p.id = "p" + std::to_string(i);
    p.label = i < depressed ? 1 : 0;
    p.responses = min_rows + rng.below(max_rows - min_rows + 1);
    out.push_back(p);
  }
  return out;
}

std::vector<std::size_t> everyone(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("group counts are floor(N / 10)") {
  CHECK(group_starts(107).size() == 10);
  CHECK(group_starts(10).size() == 1);
  CHECK_THROWS_AS(group_starts(9, "p9"), NoFullGroupError);
  CHECK_THROWS_WITH(group_starts(9, "p9"), doctest::Contains("p9"));
  for (std::size_t n = 10; n < 300; ++n) {
    const auto s = group_starts(n);
    CHECK(s.size() == n / 10);
    CHECK(s.back() + kGroupSize <= n);
  }
  nn::Rng rng(401);
  const auto m = testutil::random_tensor({107, 3}, rng);
  const auto groups = group_segments(m);
  REQUIRE(groups.size() == 10);
  CHECK(groups[9](9, 2) == m(99, 2));
  CHECK(groups[3](0, 0) == m(30, 0));
}

TEST_CASE("balancing 30 depressed / 77 controls gives 77 / 77") {
  nn::Rng rng(402);
  const auto cohort = interview_cohort(rng, 30, 77, 30, 60);  // >= 90 depressed groups
  const auto res = balance_by_resampling(cohort, everyone(cohort.size()), rng);
  CHECK(res.depressed == 77);
  CHECK(res.non_depressed == 77);
  std::size_t counts[2] = {0, 0};
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::set<std::size_t> controls;
  for (const auto& s : res.samples) {
    ++counts[s.label];
    CHECK(s.label == cohort[s.participant].label);
    CHECK(s.responses.size() == kGroupSize);
    if (s.label == 1) CHECK(used.insert({s.participant, s.variant}).second);  // no redundancy
    else CHECK(controls.insert(s.participant).second);                        // one group each
  }
  CHECK(counts[0] == 77);
  CHECK(counts[1] == 77);
  CHECK(res.warnings.empty());
  // Round-robin reaches every depressed participant.
  std::set<std::size_t> sources;
  for (const auto& [p, g] : used) sources.insert(p);
  CHECK(sources.size() == 30);
}

TEST_CASE("a pool of exactly 77 minority groups is used exactly once") {
  std::vector<ParticipantInfo> cohort;
  // 7 participants x 11 groups = 77 depressed groups.
  for (int i = 0; i < 7; ++i) cohort.push_back({"d" + std::to_string(i), 1, 115});
  for (int i = 0; i < 77; ++i) cohort.push_back({"c" + std::to_string(i), 0, 12});
  nn::Rng rng(403);
  const auto res = balance_by_resampling(cohort, everyone(cohort.size()), rng);
  std::set<std::pair<std::size_t, std::size_t>> used;
  for (const auto& s : res.samples)
    if (s.label == 1) used.insert({s.participant, s.variant});
  CHECK(used.size() == 77);
  CHECK(res.warnings.empty());
}

TEST_CASE("short minority pool recycles with a warning") {
  std::vector<ParticipantInfo> cohort{{"d0", 1, 20}, {"d1", 1, 10}};
  for (int i = 0; i < 5; ++i) cohort.push_back({"c" + std::to_string(i), 0, 10});
  nn::Rng rng(404);
  const auto res = balance_by_resampling(cohort, everyone(cohort.size()), rng);
  CHECK(res.depressed == 5);
  CHECK(res.non_depressed == 5);
  REQUIRE_FALSE(res.warnings.empty());
  CHECK(res.warnings[0].find("recycling") != std::string::npos);
}

TEST_CASE("balanced input keeps one group per participant") {
  nn::Rng rng(405);
  const auto cohort = interview_cohort(rng, 8, 8, 10, 45);
  const auto res = balance_by_resampling(cohort, everyone(cohort.size()), rng);
  CHECK(res.samples.size() == 16);
  std::set<std::size_t> participants;
  for (const auto& s : res.samples) participants.insert(s.participant);
  CHECK(participants.size() == 16);
}

TEST_CASE("participants without a full group are skipped with a warning") {
  std::vector<ParticipantInfo> cohort{{"d0", 1, 25}, {"d1", 1, 9}, {"c0", 0, 10}, {"c1", 0, 30}};
  nn::Rng rng(406);
  const auto res = balance_by_resampling(cohort, everyone(4), rng);
  CHECK(res.warnings.size() == 1);
  CHECK(res.warnings[0].find("d1") != std::string::npos);
  for (const auto& s : res.samples) CHECK(s.participant != 1);
  CHECK_THROWS_AS(balance_by_resampling(cohort, {2, 3}, rng), SamplingError);
}

TEST_CASE("permutation augmentation") {
  const ParticipantInfo p{"x", 1, 3};
  const auto perms = permutation_augment(4, p);
  REQUIRE(perms.size() == 6);
  const std::vector<std::vector<std::size_t>> expect{{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                                     {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(perms[i].responses == expect[i]);
    CHECK(perms[i].label == 1);
    CHECK(perms[i].participant == 4);
    CHECK(perms[i].variant == i);
  }
  CHECK_THROWS_AS(permutation_augment(0, {"y", 1, 4}), SamplingError);
}

TEST_CASE("three-response depressed class grows exactly 6x") {
  std::vector<ParticipantInfo> cohort;
  for (int i = 0; i < 162; ++i) cohort.push_back({"v" + std::to_string(i), i < 30 ? 1 : 0, 3});
  nn::Rng rng(407);
  const auto res = build_training_set(cohort, everyone(162), false, rng);
  CHECK(res.depressed == 180);
  CHECK(res.non_depressed == 132);
  std::size_t dep = 0;
  for (const auto& s : res.samples) dep += s.label == 1;
  CHECK(dep == 180);
  // Controls are never permuted.
  for (const auto& s : res.samples)
    if (s.label == 0) CHECK(s.responses == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("identical responses still give six samples with equal features") {
  std::vector<ParticipantFeatures> feats(1);
  nn::Tensor m({4, 2}, 1.5);
  feats[0].mels = {m, m, m};
  feats[0].text = nn::Tensor({3, 5}, 0.25);
  const auto perms = permutation_augment(0, {"z", 1, 3});
  CHECK(perms.size() == 6);
  const auto first = make_example(perms[0], feats);
  for (const auto& s : perms) {
    const auto e = make_example(s, feats);
    CHECK(e.text == first.text);
    for (std::size_t i = 0; i < 3; ++i) CHECK(*e.mels[i] == *first.mels[i]);
  }
}

TEST_CASE("audio and text rows are permuted together") {
  nn::Rng rng(408);
  std::vector<ParticipantFeatures> feats(1);
  for (int r = 0; r < 3; ++r) feats[0].mels.push_back(nn::Tensor({2, 2}, static_cast<double>(r)));
  feats[0].text = nn::Tensor({3, 1});
  for (int r = 0; r < 3; ++r) feats[0].text[r] = 10.0 * r;
  std::set<std::vector<std::size_t>> seen;
  for (const auto& s : permutation_augment(0, {"a", 1, 3})) {
    CHECK(seen.insert(s.responses).second);
    const auto e = make_example(s, feats);
    for (std::size_t i = 0; i < 3; ++i) CHECK(e.text(i, 0) == 10.0 * (*e.mels[i])[0]);
  }
}

TEST_CASE("eval segment selection") {
  nn::Rng rng(409);
  const ParticipantInfo one{"one", 0, 14};
  CHECK(select_eval_segment(0, one, true, rng).variant == 0);
  const ParticipantInfo five{"five", 1, 57};
  nn::Rng a(7), b(7);
  CHECK(select_eval_segment(0, five, true, a) == select_eval_segment(0, five, true, b));
  std::map<std::size_t, int> freq;
  for (int i = 0; i < 10000; ++i) ++freq[select_eval_segment(0, five, true, rng).variant];
  REQUIRE(freq.size() == 5);
  for (const auto& [g, n] : freq) CHECK(std::abs(n / 10000.0 - 0.2) <= 0.02);
  const ParticipantInfo three{"t", 1, 3};
  const auto s = select_eval_segment(3, three, false, rng);
  CHECK(s.responses == std::vector<std::size_t>{0, 1, 2});
  CHECK(s.kind == SampleKind::kOriginal);
  CHECK_THROWS_AS(select_eval_segment(0, {"short", 0, 9}, true, rng), NoFullGroupError);
}

TEST_CASE("resample report") {
  nn::Rng rng(410);
  std::vector<ParticipantInfo> cohort{{"d0", 1, 107}, {"c0", 0, 10}, {"c1", 0, 23}, {"c2", 0, 8}};
  const auto j = resample_report(cohort, true, rng);
  CHECK(j["pre"]["depressed"] == 1);
  CHECK(j["pre"]["non_depressed"] == 3);
  CHECK(j["post"]["depressed"] == 2);
  CHECK(j["post"]["non_depressed"] == 2);
  CHECK(j["groups_per_participant"]["d0"] == 10);
  CHECK(j["discarded_rows"] == 7 + 0 + 3 + 8);
  CHECK(j["warnings"].size() == 1);
}
