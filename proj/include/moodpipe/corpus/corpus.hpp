// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "moodpipe/corpus/audio.hpp"

namespace moodpipe::corpus {

enum class Label : int { kNonDepressed = 0, kDepressed = 1 };
enum class Questionnaire { kSds, kPhq8 };
enum class CorpusKind { kThreeResponse, kInterview };

const char* to_string(Label l);
const char* to_string(Questionnaire q);
const char* to_string(CorpusKind k);
CorpusKind parse_corpus_kind(std::string_view s);

inline constexpr int kPhq8Max = 24;

class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index score raw * 1.25 >= 53, evaluated in integers: 5 * raw >= 212,
/// i.e. raw >= 43.
Label label_from_sds(int raw);

/// Depressed iff score >= 10; scores outside 0..24 throw LabelError naming
/// the participant.
Label label_from_phq8(int score, std::string_view participant = {});

struct Response {
  int index = 0;  // 1-based position in the interview
  Waveform audio;
  std::string transcript;
  std::filesystem::path audio_path;
  bool denoised = false;  // loaded from response_k.clean.wav
};

struct Participant {
  std::string id;
  std::vector<Response> responses;
  Questionnaire questionnaire = Questionnaire::kSds;
  int raw_score = 0;
  Label label = Label::kNonDepressed;
};

struct Issue {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::filesystem::path path;
  std::string participant;
  std::string message;
};

struct ValidationReport {
  std::vector<Issue> issues;

  bool ok() const;
  std::size_t error_count() const;
  std::vector<std::string> rejected_participants() const;
  nlohmann::json to_json() const;
};

struct ClassCounts {
  std::size_t depressed = 0;
  std::size_t non_depressed = 0;
};

struct Corpus {
  std::vector<Participant> participants;  // sorted by id
  CorpusKind kind = CorpusKind::kThreeResponse;
  std::filesystem::path root;

  ClassCounts counts() const;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  bool load_audio = true;
  TrimConfig trim;
};

struct LoadResult {
  Corpus corpus;  // only participants without errors
  ValidationReport report;
};

/// Reads `<root>/<id>/{meta.json, response_k.wav, response_k.txt}` with
/// optional `response_k.clean.wav` preferred over the raw recording.
/// Structural problems are collected into the report with their path; only
/// a missing or empty root throws.
LoadResult load_corpus(const std::filesystem::path& root, CorpusKind kind,
                       const LoadOptions& options = {});

/// Stable serialized form (audio as length + FNV-1a of the samples).
nlohmann::json to_json(const Corpus& corpus);

}  // namespace moodpipe::corpus
