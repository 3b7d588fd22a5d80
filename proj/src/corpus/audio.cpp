// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/corpus/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "moodpipe/features/embedding_io.hpp"

namespace moodpipe::corpus {

namespace {

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t off) {
  return std::uint32_t{b[off]} | std::uint32_t{b[off + 1]} << 8 |
         std::uint32_t{b[off + 2]} << 16 | std::uint32_t{b[off + 3]} << 24;
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | b[off + 1] << 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

bool is_supported_rate(int rate) {
  return rate == 8000 || rate == 16000 || rate == 44100 || rate == 48000;
}

Waveform decode_wav(std::span<const std::uint8_t> bytes,
                    const std::string& source) {
  auto fail = [&](const std::string& what) {
    throw DecodeError(source + ": " + what);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail("not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size()) fail("truncated fmt chunk");
      const std::uint16_t format = le16(bytes, body);
      channels = le16(bytes, body + 2);
      rate = le32(bytes, body + 4);
      bits = le16(bytes, body + 14);
      if (format != 1) fail("unsupported format tag " + std::to_string(format) + " (PCM only)");
      if (bits != 16) fail("unsupported bit depth " + std::to_string(bits) + " (PCM16 only)");
      if (channels == 0) fail("zero channels");
      if (!is_supported_rate(static_cast<int>(rate)))
        fail("unsupported sample rate " + std::to_string(rate));
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) fail("data chunk before fmt chunk");
      if (body + size > bytes.size()) fail("truncated data chunk");
      const std::size_t frame_bytes = 2u * channels;
      const std::size_t frames = size / frame_bytes;
      Waveform w;
      w.sample_rate = static_cast<int>(rate);
      w.samples.resize(frames);
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const auto s = static_cast<std::int16_t>(le16(bytes, body + f * frame_bytes + 2 * c));
          acc += s / 32768.0;
        }
        w.samples[f] = static_cast<float>(acc / channels);
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  fail(have_fmt ? "missing data chunk" : "missing fmt chunk");
  return {};
}

Waveform read_wav(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = features::read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw DecodeError(e.what());
  }
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(2 * w.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate));
  put32(out, static_cast<std::uint32_t>(w.sample_rate * 2));
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (float s : w.samples) {
    const double clipped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
    put16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void write_wav(const Waveform& w, const std::filesystem::path& path) {
  features::write_file_bytes(path, encode_wav(w));
}

Waveform resample(const Waveform& in, int target_rate) {
  if (in.sample_rate == target_rate) return in;
  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(target_rate) / in.sample_rate;
  // Cutoff in cycles per input sample, slightly under the lower Nyquist.
  const double cutoff = 0.5 * std::min(1.0, ratio) * 0.97;
  const double half_width = kZeroCrossings / (2.0 * cutoff);
  const auto out_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(in.samples.size()) * ratio));
  const auto n_in = static_cast<long>(in.samples.size());

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double x = static_cast<double>(k) - t;
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += in.samples[static_cast<std::size_t>(k)] * 2.0 * cutoff *
             sinc(2.0 * cutoff * x) * window;
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

const char* to_string(Rejection r) {
  switch (r) {
    case Rejection::kMute: return "mute";
    case Rejection::kTooShort: return "too short";
  }
  return "unknown";
}

std::vector<double> frame_rms(std::span<const float> samples,
                              std::size_t frame, std::size_t hop) {
  std::vector<double> out;
  if (samples.empty()) return out;
  if (samples.size() < frame) {
    double ss = 0.0;
    for (float s : samples) ss += static_cast<double>(s) * s;
    out.push_back(std::sqrt(ss / static_cast<double>(samples.size())));
    return out;
  }
  const std::size_t n = (samples.size() - frame) / hop + 1;
  out.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    double ss = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      const double s = samples[f * hop + i];
      ss += s * s;
    }
    out.push_back(std::sqrt(ss / static_cast<double>(frame)));
  }
  return out;
}

PreprocessResult preprocess_audio(const Waveform& raw, const TrimConfig& cfg) {
  Waveform audio = resample(raw, kTargetSampleRate);
  const auto frame = static_cast<std::size_t>(std::lround(cfg.frame_ms * kTargetSampleRate / 1000.0));
  const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * kTargetSampleRate / 1000.0));

  const auto rms = frame_rms(audio.samples, frame, hop);
  auto loud = [&](double r) { return r >= cfg.silence_rms; };
  const auto first = std::find_if(rms.begin(), rms.end(), loud);
  if (first == rms.end()) return {std::nullopt, Rejection::kMute};
  const auto last = std::find_if(rms.rbegin(), rms.rend(), loud);

  const auto f0 = static_cast<std::size_t>(first - rms.begin());
  const auto f1 = static_cast<std::size_t>(rms.rend() - last) - 1;
  const std::size_t begin = f0 * hop;
  const std::size_t end = std::min(audio.samples.size(), f1 * hop + frame);
  audio.samples = std::vector<float>(audio.samples.begin() + static_cast<long>(begin),
                                     audio.samples.begin() + static_cast<long>(end));
  if (audio.duration_seconds() < cfg.min_duration_s) {
    return {std::nullopt, Rejection::kTooShort};
  }
  return {std::move(audio), std::nullopt};
}

}  // namespace moodpipe::corpus
