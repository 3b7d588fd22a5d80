// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/synth/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>
#include <toml.hpp>

#include "moodpipe/corpus/audio.hpp"
#include "moodpipe/nn/rng.hpp"

namespace moodpipe::synth {

namespace fs = std::filesystem;

namespace {

constexpr std::array kNegativeWords{"sad",     "tired",   "hopeless", "empty",     "worthless", "alone",  "lonely",
                                    "exhausted", "guilty", "numb",     "crying",    "heavy",     "worried", "afraid",
                                    "dark",    "lost",    "hurt",     "pointless", "sleepless", "restless"};
constexpr std::array kNeutralWords{"fine",   "work",   "weekend", "garden", "cooking", "music",  "walk",
                                   "friends", "coffee", "weather", "movie",  "travel",  "city",   "morning",
                                   "dinner", "book",   "project", "family", "sunny",   "busy"};
constexpr std::array kFillers{"i", "feel", "the", "a", "it", "was", "lately", "really", "quite", "usually"};

constexpr double kPitchHalfGap = (kControlPitchHz - kDepressedPitchHz) / 2.0;
constexpr int kRate = corpus::kTargetSampleRate;

struct Voice {
  double pitch_hz;
  double swap_probability;
};

corpus::Waveform make_audio(const Voice& v, nn::Rng& rng) {
  const auto pad_before = static_cast<std::size_t>(rng.uniform(0.1, 0.3) * kRate);
  const auto pad_after = static_cast<std::size_t>(rng.uniform(0.1, 0.3) * kRate);
  const auto voiced = static_cast<std::size_t>(rng.uniform(1.4, 2.0) * kRate);
  const double f = v.pitch_hz * rng.uniform(0.97, 1.03);
  const double amplitude = rng.uniform(0.2, 0.4);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::size_t ramp = kRate / 100;

  corpus::Waveform w;
  w.sample_rate = kRate;
  w.samples.assign(pad_before + voiced + pad_after, 0.0f);
  for (std::size_t i = 0; i < voiced; ++i) {
    const double t = static_cast<double>(i) / kRate;
    const double edge = std::min({1.0, static_cast<double>(i + 1) / ramp, static_cast<double>(voiced - i) / ramp});
    const double x = amplitude * edge * std::sin(2.0 * std::numbers::pi * f * t + phase) + 0.01 * rng.normal();
    w.samples[pad_before + i] = static_cast<float>(x);
  }
  return w;
}

std::string make_transcript(bool depressed, const Voice& v, nn::Rng& rng) {
  const std::size_t words = 6 + rng.below(5);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    const char* w;
    if (rng.uniform() < 0.4) {
      w = kFillers[rng.below(kFillers.size())];
    } else {
      const bool negative = depressed != (rng.uniform() < v.swap_probability);
      w = negative ? kNegativeWords[rng.below(kNegativeWords.size())]
                   : kNeutralWords[rng.below(kNeutralWords.size())];
    }
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out + "\n";
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::string participant_id(std::size_t index, std::size_t total) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(total).size());
  std::string n = std::to_string(index + 1);
  return "s" + std::string(width - n.size(), '0') + n;
}

nlohmann::json spec_json(const SynthSpec& s) {
  return {{"n_depressed", s.n_depressed},
          {"n_control", s.n_control},
          {"separability", s.sigma > 0.0 ? "noisy" : "separable"},
          {"sigma", s.sigma},
          {"kind", corpus::to_string(s.kind)},
          {"responses", s.responses()},
          {"seed", s.seed}};
}

}  // namespace

std::size_t SynthSpec::responses() const {
  return kind == corpus::CorpusKind::kThreeResponse ? 3 : interview_responses;
}

void SynthSpec::validate() const {
  if (n_depressed == 0 || n_control == 0) throw std::invalid_argument("synth: class counts must be at least 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("synth: sigma must be >= 0");
  if (kind == corpus::CorpusKind::kInterview && interview_responses == 0)
    throw std::invalid_argument("synth: interview corpora need at least one response");
}

double word_swap_probability(double sigma) {
  if (sigma <= 0.0) return 0.0;
  return 0.5 * std::erfc(1.0 / (sigma * std::numbers::sqrt2));
}

GenerateSummary generate(const SynthSpec& spec, const fs::path& root) {
  spec.validate();
  if (fs::exists(root) && !(fs::is_directory(root) && fs::is_empty(root)))
    throw std::runtime_error(root.string() + ": synth output directory must be empty or absent");
  fs::create_directories(root);

  const std::size_t total = spec.n_depressed + spec.n_control;
  std::vector<int> labels(total, 0);
  std::fill_n(labels.begin(), spec.n_depressed, 1);
  const nn::Rng base(spec.seed);
  nn::Rng assign = base.child(0);
  assign.shuffle(std::span<int>(labels));

  GenerateSummary summary;
  for (std::size_t i = 0; i < total; ++i) {
    nn::Rng rng = base.child(i + 1);
    const bool depressed = labels[i] == 1;
    Voice v{depressed ? kDepressedPitchHz : kControlPitchHz, word_swap_probability(spec.sigma)};
    if (spec.sigma > 0.0) v.pitch_hz = std::clamp(v.pitch_hz + spec.sigma * kPitchHalfGap * rng.normal(), 60.0, 500.0);

    const fs::path dir = root / participant_id(i, total);
    fs::create_directories(dir);
    write_file(dir / "meta.json", nlohmann::json{{"questionnaire", "sds"},
                                                 {"raw_score", depressed ? kDepressedScore : kControlScore}}
                                      .dump(2) + "\n");
    for (std::size_t k = 1; k <= spec.responses(); ++k) {
      const std::string stem = "response_" + std::to_string(k);
      corpus::write_wav(make_audio(v, rng), dir / (stem + ".wav"));
      write_file(dir / (stem + ".txt"), make_transcript(depressed, v, rng));
      summary.files += 2;
    }
    ++summary.files;
    ++(depressed ? summary.depressed : summary.control);
  }
  write_file(root / "synth.json", spec_json(spec).dump(2) + "\n");
  ++summary.files;
  return summary;
}

std::string to_toml(const SynthSpec& s) {
  toml::table t{{"n_depressed", static_cast<std::int64_t>(s.n_depressed)},
                {"n_control", static_cast<std::int64_t>(s.n_control)},
                {"sigma", s.sigma},
                {"kind", corpus::to_string(s.kind)},
                {"responses", static_cast<std::int64_t>(s.interview_responses)},
                {"seed", static_cast<std::int64_t>(s.seed)}};
  std::ostringstream out;
  out << t << "\n";
  return out.str();
}

SynthSpec spec_from_toml(std::string_view text, SynthSpec s) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw std::invalid_argument(std::string("synth spec: ") + std::string(e.description()));
  }
  static const std::set<std::string> known{"n_depressed", "n_control", "sigma", "kind", "responses", "seed"};
  for (const auto& [k, v] : t) {
    if (!known.contains(std::string(k.str()))) throw std::invalid_argument("synth spec: unknown key '" + std::string(k.str()) + "'");
  }
  auto count = [&](const char* key, std::size_t fallback) -> std::size_t {
    const auto* node = t.get(key);
    if (!node) return fallback;
    const auto v = node->value<std::int64_t>();
    if (!v || *v < 0) throw std::invalid_argument(std::string("synth spec: ") + key + " must be a non-negative integer");
    return static_cast<std::size_t>(*v);
  };
  s.n_depressed = count("n_depressed", s.n_depressed);
  s.n_control = count("n_control", s.n_control);
  s.interview_responses = count("responses", s.interview_responses);
  s.seed = count("seed", s.seed);
  if (const auto* node = t.get("sigma")) {
    const auto v = node->value<double>();
    if (!v) throw std::invalid_argument("synth spec: sigma must be a number");
    s.sigma = *v;
  }
  if (const auto* node = t.get("kind")) {
    const auto v = node->value<std::string>();
    if (!v) throw std::invalid_argument("synth spec: kind must be a string");
    s.kind = corpus::parse_corpus_kind(*v);
  }
  s.validate();
  return s;
}

}  // namespace moodpipe::synth
