// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/features/audio_features.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace moodpipe::features {

std::size_t MelConfig::frame_length() const {
  return static_cast<std::size_t>(std::lround(frame_ms * sample_rate / 1000.0));
}

std::size_t MelConfig::hop_length() const {
  return static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
}

void MelConfig::validate() const {
  if (sample_rate <= 0 || n_mels == 0 || hop_length() == 0 || frame_length() == 0)
    throw std::invalid_argument("mel config: sample rate, bins, frame and hop must be positive");
  if (frame_length() > n_fft)
    throw std::invalid_argument("mel config: frame of " + std::to_string(frame_length()) +
                                " samples exceeds FFT size " + std::to_string(n_fft));
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate / 2.0))
    throw std::invalid_argument("mel config: need 0 <= fmin < fmax <= Nyquist");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

nn::Tensor mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin_hz);
  const double hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  nn::Tensor fb({cfg.n_mels, bins});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  return fb;
}

namespace {

struct FftwPlan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit FftwPlan(std::size_t n) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftwPlan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
};

}  // namespace

nn::Tensor mel_spectrogram(std::span<const float> samples, const MelConfig& cfg) {
  cfg.validate();
  const std::size_t frame = cfg.frame_length();
  const std::size_t hop = cfg.hop_length();
  if (samples.size() < frame) {
    throw std::invalid_argument("mel_spectrogram: " + std::to_string(samples.size()) +
                                " samples is shorter than one frame (" + std::to_string(frame) + ")");
  }
  const std::size_t frames = (samples.size() - frame) / hop + 1;
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const nn::Tensor fb = mel_filterbank(cfg);

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(frame));

  FftwPlan fft(cfg.n_fft);
  std::vector<double> power(bins);
  nn::Tensor out({frames, cfg.n_mels});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < cfg.n_fft; ++i)
      fft.in[i] = i < frame ? samples[t * hop + i] * window[i] : 0.0;
    fftw_execute(fft.plan);
    for (std::size_t k = 0; k < bins; ++k)
      power[k] = fft.out[k][0] * fft.out[k][0] + fft.out[k][1] * fft.out[k][1];
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += fb(m, k) * power[k];
      out(t, m) = std::log(e + cfg.log_offset);
    }
  }
  return out;
}

nn::Tensor mel_spectrogram(const corpus::Waveform& audio, const MelConfig& cfg) {
  if (audio.sample_rate != cfg.sample_rate) {
    throw std::invalid_argument("mel_spectrogram: audio at " + std::to_string(audio.sample_rate) +
                                " Hz, config expects " + std::to_string(cfg.sample_rate));
  }
  return mel_spectrogram(audio.samples, cfg);
}

NetVlad::NetVlad(const std::string& name, const NetVladConfig& cfg)
    : cfg_(cfg),
      centroids_(name + ".centroids", nn::Tensor({cfg.clusters, cfg.feature_dim})),
      assignment_weights_(name + ".assignment_weights", nn::Tensor({cfg.clusters, cfg.feature_dim})),
      assignment_bias_(name + ".assignment_bias", nn::Tensor({cfg.clusters})),
      projection_(name + ".projection", nn::Tensor({cfg.clusters * cfg.feature_dim, cfg.output_dim})) {
  if (cfg.clusters == 0 || cfg.feature_dim == 0 || cfg.output_dim == 0)
    throw nn::ShapeError(name + ": clusters, feature and output dims must be positive");
}

NetVladOutput NetVlad::forward(nn::Var frames) const {
  nn::Var vlad = aggregate(frames);
  return {vlad, project(vlad)};
}

nn::Var NetVlad::project(nn::Var vlads) const {
  return nn::matmul(vlads, vlads.tape->param(projection_));
}

nn::Var NetVlad::aggregate(nn::Var frames) const {
  using namespace nn;
  if (frames.cols() != cfg_.feature_dim) {
    throw ShapeError(centroids_.name + ": expected " + std::to_string(cfg_.feature_dim) +
                     " mel bins, got " + to_string(frames.shape()));
  }
  Tape& t = *frames.tape;
  Var logits = add_row(matmul(frames, transpose(t.param(assignment_weights_))),
                       t.param(assignment_bias_));
  Var assign = softmax_rows(logits);  // T x K
  Var weighted_sum = matmul(transpose(assign), frames);  // K x D
  Var mass = col_sum(assign);                            // 1 x K
  Var residual = sub(weighted_sum, scale_rows(t.param(centroids_), mass));
  Var intra = l2_normalize_rows(residual, cfg_.eps);
  Var flat = reshape(intra, {1, cfg_.clusters * cfg_.feature_dim});
  return l2_normalize_rows(flat, cfg_.eps);
}

void NetVlad::init(nn::Rng& rng) {
  for (nn::Parameter* p : {&centroids_, &assignment_weights_, &assignment_bias_, &projection_}) {
    for (double& v : p->value.values()) v = rng.uniform(-0.1, 0.1);
  }
}

void NetVlad::collect(nn::ParamList& out) {
  for (nn::Parameter* p : {&centroids_, &assignment_weights_, &assignment_bias_, &projection_})
    out.push_back(p);
}

nn::Tensor netvlad_embed(const NetVlad& layer, const nn::Tensor& frames) {
  nn::Tape tape;
  return layer.forward(tape.constant(frames)).embedding.value();
}

}  // namespace moodpipe::features
