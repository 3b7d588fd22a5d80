// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "moodpipe/corpus/audio.hpp"
#include "moodpipe/nn/layers.hpp"
#include "moodpipe/nn/tensor.hpp"

namespace moodpipe::features {

struct MelConfig {
  int sample_rate = 16000;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  std::size_t n_fft = 512;
  std::size_t n_mels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_offset = 1e-10;

  std::size_t frame_length() const;
  std::size_t hop_length() const;
  void validate() const;
};

double hz_to_mel(double hz);  // HTK: 2595 log10(1 + f / 700)
double mel_to_hz(double mel);

/// n_mels x (n_fft / 2 + 1) triangular weights; filter m rises from edge m
/// to its peak at edge m + 1 and falls to zero at edge m + 2, with n_mels + 2
/// edges evenly spaced on the mel scale.
nn::Tensor mel_filterbank(const MelConfig& cfg);

/// T x n_mels log Mel energies: periodic Hann window, |FFT|^2, mel
/// filterbank, log(x + log_offset). T = floor((S - frame) / hop) + 1.
nn::Tensor mel_spectrogram(std::span<const float> samples,
                           const MelConfig& cfg = {});
nn::Tensor mel_spectrogram(const corpus::Waveform& audio,
                           const MelConfig& cfg = {});

struct NetVladConfig {
  std::size_t feature_dim = 80;  // D
  std::size_t clusters = 8;      // K
  std::size_t output_dim = 256;  // E
  double eps = 1e-12;
};

struct NetVladOutput {
  nn::Var vlad;       // 1 x K*D, after intra and global normalization
  nn::Var embedding;  // 1 x E
};

/// Trainable NetVLAD aggregation followed by a linear projection.
///
///   a_k(x_i) = softmax_k(w_k . x_i + b_k)
///   V_k      = sum_i a_k(x_i) (x_i - c_k)
///
/// Each V_k is L2-normalized, the K x D result flattened row-major and
/// L2-normalized again, then projected to E dimensions. Norms are guarded
/// by max(||v||, eps).
class NetVlad {
 public:
  NetVlad() = default;
  NetVlad(const std::string& name, const NetVladConfig& cfg);

  NetVladOutput forward(nn::Var frames) const;
  /// Normalized VLAD (1 x K*D) without the projection.
  nn::Var aggregate(nn::Var frames) const;
  /// Rows of normalized VLADs (n x K*D) to embeddings (n x E).
  nn::Var project(nn::Var vlads) const;
  /// uniform(-0.1, 0.1) for all four blocks.
  void init(nn::Rng& rng);
  void collect(nn::ParamList& out);

  const NetVladConfig& config() const { return cfg_; }
  nn::Parameter& centroids() { return centroids_; }
  nn::Parameter& assignment_weights() { return assignment_weights_; }
  nn::Parameter& assignment_bias() { return assignment_bias_; }
  nn::Parameter& projection() { return projection_; }

 private:
  NetVladConfig cfg_;
  mutable nn::Parameter centroids_;           // K x D
  mutable nn::Parameter assignment_weights_;  // K x D
  mutable nn::Parameter assignment_bias_;     // K
  mutable nn::Parameter projection_;          // K*D x E
};

/// Embedding of one spectrogram without recording gradients.
nn::Tensor netvlad_embed(const NetVlad& layer, const nn::Tensor& frames);

}  // namespace moodpipe::features
