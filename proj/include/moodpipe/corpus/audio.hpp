// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moodpipe::corpus {

inline constexpr int kTargetSampleRate = 16000;

/// Mono waveform, samples in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = kTargetSampleRate;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RIFF/WAVE PCM16 decoder; multi-channel input is averaged to mono.
Waveform decode_wav(std::span<const std::uint8_t> bytes,
                    const std::string& source = "<memory>");
Waveform read_wav(const std::filesystem::path& path);

/// Mono PCM16 RIFF/WAVE encoding; samples are clipped to [-1, 1].
std::vector<std::uint8_t> encode_wav(const Waveform& w);
void write_wav(const Waveform& w, const std::filesystem::path& path);

/// Windowed-sinc (Hann window, 16 zero crossings) sample-rate conversion.
Waveform resample(const Waveform& in, int target_rate);

bool is_supported_rate(int rate);

struct TrimConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  /// Frame RMS below this (full scale = 1.0) counts as silence.
  double silence_rms = 1e-4;
  double min_duration_s = 1.0;
};

enum class Rejection { kMute, kTooShort };
const char* to_string(Rejection r);

struct PreprocessResult {
  std::optional<Waveform> audio;
  std::optional<Rejection> rejection;

  bool accepted() const { return audio.has_value(); }
};

/// Per-frame RMS over frames of `frame` samples every `hop` samples. Input
/// shorter than one frame yields a single frame over what is there.
std::vector<double> frame_rms(std::span<const float> samples,
                              std::size_t frame, std::size_t hop);

/// Resample to 16 kHz, cut leading and trailing silent frames, then reject
/// mute or short audio. Applying it to its own output is the identity.
PreprocessResult preprocess_audio(const Waveform& raw,
                                  const TrimConfig& cfg = {});

}  // namespace moodpipe::corpus
