// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/corpus/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <cctype>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include "moodpipe/features/embedding_io.hpp"

namespace moodpipe::corpus {

namespace fs = std::filesystem;

const char* to_string(Label l) {
  return l == Label::kDepressed ? "depressed" : "non-depressed";
}

const char* to_string(Questionnaire q) {
  return q == Questionnaire::kSds ? "sds" : "phq8";
}

const char* to_string(CorpusKind k) {
  return k == CorpusKind::kThreeResponse ? "three-response" : "interview";
}

CorpusKind parse_corpus_kind(std::string_view s) {
  if (s == "three-response") return CorpusKind::kThreeResponse;
  if (s == "interview") return CorpusKind::kInterview;
  throw std::invalid_argument("unknown corpus kind '" + std::string(s) +
                              "' (expected three-response or interview)");
}

Label label_from_sds(int raw) {
  if (raw < 0) throw LabelError("SDS raw score must be non-negative, got " + std::to_string(raw));
  return 5 * raw >= 4 * 53 ? Label::kDepressed : Label::kNonDepressed;
}

Label label_from_phq8(int score, std::string_view participant) {
  if (score < 0 || score > kPhq8Max) {
    std::string who = participant.empty() ? "" : "participant " + std::string(participant) + ": ";
    throw LabelError(who + "PHQ-8 score " + std::to_string(score) + " outside 0.." +
                     std::to_string(kPhq8Max));
  }
  return score >= 10 ? Label::kDepressed : Label::kNonDepressed;
}

bool ValidationReport::ok() const { return error_count() == 0; }

std::size_t ValidationReport::error_count() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const Issue& i) {
    return i.severity == Issue::Severity::kError;
  }));
}

std::vector<std::string> ValidationReport::rejected_participants() const {
  std::set<std::string> ids;
  for (const Issue& i : issues)
    if (i.severity == Issue::Severity::kError && !i.participant.empty()) ids.insert(i.participant);
  return {ids.begin(), ids.end()};
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const Issue& i : issues) {
    out.push_back({{"severity", i.severity == Issue::Severity::kError ? "error" : "warning"},
                   {"path", i.path.string()},
                   {"participant", i.participant},
                   {"message", i.message}});
  }
  return out;
}

ClassCounts Corpus::counts() const {
  ClassCounts c;
  for (const Participant& p : participants) {
    if (p.label == Label::kDepressed) ++c.depressed;
    else ++c.non_depressed;
  }
  return c;
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ParticipantLoader {
 public:
  ParticipantLoader(const fs::path& dir, CorpusKind kind, const LoadOptions& opt,
                    ValidationReport& report)
      : dir_(dir), id_(dir.filename().string()), kind_(kind), opt_(opt), report_(report) {}

  std::optional<Participant> load() {
    Participant p;
    p.id = id_;
    if (!read_meta(p)) return std::nullopt;
    const auto indices = response_indices();
    if (!indices) return std::nullopt;
    if (kind_ == CorpusKind::kThreeResponse && indices->size() != 3) {
      error(dir_, "three-response corpus needs exactly 3 responses, found " +
                      std::to_string(indices->size()));
      return std::nullopt;
    }
    for (int k : *indices) {
      auto r = load_response(k);
      if (r) p.responses.push_back(std::move(*r));
    }
    if (errors_ > 0) return std::nullopt;
    if (p.responses.empty()) {
      error(dir_, "no usable responses");
      return std::nullopt;
    }
    return p;
  }

 private:
  void error(const fs::path& path, std::string msg) {
    ++errors_;
    report_.issues.push_back({Issue::Severity::kError, path, id_, std::move(msg)});
  }
  void warn(const fs::path& path, std::string msg) {
    report_.issues.push_back({Issue::Severity::kWarning, path, id_, std::move(msg)});
  }

  // A rejected response is fatal for three-response corpora and dropped
  // with a warning for interviews.
  void reject(const fs::path& path, std::string msg) {
    if (kind_ == CorpusKind::kThreeResponse) error(path, std::move(msg));
    else warn(path, std::move(msg) + "; response dropped");
  }

  bool read_meta(Participant& p) {
    const fs::path meta = dir_ / "meta.json";
    if (!fs::exists(meta)) {
      error(meta, "missing meta.json");
      return false;
    }
    try {
      const auto j = nlohmann::json::parse(read_text(meta));
      const std::string q = j.at("questionnaire").get<std::string>();
      const auto& score = j.at("raw_score");
      if (!score.is_number_integer()) throw std::invalid_argument("raw_score must be an integer");
      p.raw_score = score.get<int>();
      if (q == "sds") {
        p.questionnaire = Questionnaire::kSds;
        p.label = label_from_sds(p.raw_score);
      } else if (q == "phq8") {
        p.questionnaire = Questionnaire::kPhq8;
        p.label = label_from_phq8(p.raw_score, id_);
      } else {
        throw std::invalid_argument("unknown questionnaire '" + q + "'");
      }
    } catch (const std::exception& e) {
      error(meta, std::string("malformed metadata: ") + e.what());
      return false;
    }
    return true;
  }

  std::optional<std::vector<int>> response_indices() {
    static const std::regex wav_re(R"(response_(\d+)\.wav)");
    std::vector<int> found;
    for (const auto& entry : fs::directory_iterator(dir_)) {
      std::smatch m;
      const std::string name = entry.path().filename().string();
      if (std::regex_match(name, m, wav_re)) found.push_back(std::stoi(m[1].str()));
    }
    std::sort(found.begin(), found.end());
    if (found.empty()) {
      error(dir_ / "response_1.wav", "missing file (no responses)");
      return std::nullopt;
    }
    for (std::size_t i = 0; i < found.size(); ++i) {
      if (found[i] != static_cast<int>(i + 1)) {
        error(dir_ / ("response_" + std::to_string(i + 1) + ".wav"), "missing file (responses must be numbered 1..n)");
        return std::nullopt;
      }
    }
    return found;
  }

  std::optional<Response> load_response(int k) {
    const std::string stem = "response_" + std::to_string(k);
    const fs::path raw_wav = dir_ / (stem + ".wav");
    const fs::path clean_wav = dir_ / (stem + ".clean.wav");
    const fs::path txt = dir_ / (stem + ".txt");
    Response r;
    r.index = k;
    r.denoised = fs::exists(clean_wav);
    r.audio_path = r.denoised ? clean_wav : raw_wav;
    if (!fs::exists(txt)) {
      error(txt, "missing file");
      return std::nullopt;
    }
    r.transcript = trim(read_text(txt));
    if (r.transcript.empty()) {
      reject(txt, "empty transcript");
      return std::nullopt;
    }
    if (!opt_.load_audio) return r;
    try {
      const auto pre = preprocess_audio(read_wav(r.audio_path), opt_.trim);
      if (!pre.accepted()) {
        reject(r.audio_path, std::string("audio rejected: ") + to_string(*pre.rejection));
        return std::nullopt;
      }
      r.audio = std::move(*pre.audio);
    } catch (const DecodeError& e) {
      error(r.audio_path, std::string("decode error: ") + e.what());
      return std::nullopt;
    }
    return r;
  }

  fs::path dir_;
  std::string id_;
  CorpusKind kind_;
  const LoadOptions& opt_;
  ValidationReport& report_;
  int errors_ = 0;
};

}  // namespace

LoadResult load_corpus(const fs::path& root, CorpusKind kind, const LoadOptions& options) {
  if (!fs::is_directory(root)) throw CorpusError(root.string() + ": corpus root is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  if (dirs.empty()) throw CorpusError(root.string() + ": corpus contains no participant directories");
  std::sort(dirs.begin(), dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  LoadResult result;
  result.corpus.kind = kind;
  result.corpus.root = root;
  std::set<std::string> seen;
  for (const fs::path& dir : dirs) {
    const std::string id = dir.filename().string();
    if (!seen.insert(id).second) {
      result.report.issues.push_back({Issue::Severity::kError, dir, id, "duplicate participant id"});
      continue;
    }
    ParticipantLoader loader(dir, kind, options, result.report);
    if (auto p = loader.load()) result.corpus.participants.push_back(std::move(*p));
  }
  return result;
}

nlohmann::json to_json(const Corpus& corpus) {
  nlohmann::json parts = nlohmann::json::array();
  for (const Participant& p : corpus.participants) {
    nlohmann::json responses = nlohmann::json::array();
    for (const Response& r : p.responses) {
      const auto* bytes = reinterpret_cast<const std::uint8_t*>(r.audio.samples.data());
      responses.push_back(
          {{"index", r.index},
           {"samples", r.audio.samples.size()},
           {"sample_rate", r.audio.sample_rate},
           {"audio_fnv1a", features::fnv1a64({bytes, r.audio.samples.size() * sizeof(float)})},
           {"denoised", r.denoised},
           {"transcript", r.transcript}});
    }
    parts.push_back({{"id", p.id},
                     {"questionnaire", to_string(p.questionnaire)},
                     {"raw_score", p.raw_score},
                     {"label", to_string(p.label)},
                     {"responses", responses}});
  }
  const ClassCounts c = corpus.counts();
  return {{"kind", to_string(corpus.kind)},
          {"depressed", c.depressed},
          {"non_depressed", c.non_depressed},
          {"participants", parts}};
}

}  // namespace moodpipe::corpus
