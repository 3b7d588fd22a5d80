// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "moodpipe/features/audio_features.hpp"
#include "moodpipe/nn/layers.hpp"

namespace moodpipe::models {

enum class Modality { kAudio, kText, kFusion };
const char* to_string(Modality m);
Modality parse_modality(std::string_view s);

/// One classifier input: S responses in a fixed order. `mels[s]` and
/// `text.row(s)` always describe the same response.
struct Example {
  std::vector<const nn::Tensor*> mels;  // S spectrograms, T_s x D
  nn::Tensor text;                      // S x W
  int label = 0;                        // 1 = depressed

  std::size_t steps() const { return text.rows(); }
};

using Batch = std::span<const Example* const>;

struct Prediction {
  std::array<double, 2> probabilities{0.5, 0.5};  // non-depressed, depressed
  int label = 0;
};

/// Two-layer classifier head: dropout, FC + ReLU, dropout, FC to 2 logits.
class Head {
 public:
  Head() = default;
  Head(const std::string& name, std::size_t in, std::size_t hidden, double dropout);

  nn::Var forward(nn::Var x, nn::Rng& rng, bool training) const;
  void init(nn::Rng& rng);
  void collect(nn::ParamList& out);

  nn::Linear& fc1() { return fc1_; }
  nn::Linear& fc2() { return fc2_; }

 private:
  nn::Linear fc1_, fc2_;
  double dropout_ = 0.0;
};

struct Attention {
  nn::Var alpha;  // B x T, rows sum to 1
  nn::Var y;      // B x H, sum_t alpha_t O_t
};

/// Scores c_t = tanh(O_t) w, alpha = softmax over t, y = sum_t alpha_t O_t.
/// `steps[t]` is O_t (B x H); `w` is H x 1.
Attention attention_pool(std::span<const nn::Var> steps, nn::Var w);

struct TextModelConfig {
  std::size_t input_dim = 1024;
  std::size_t hidden = 128;
  std::size_t layers = 2;
  std::size_t fc_hidden = 128;
  double dropout = 0.5;
};

struct ModelOutput {
  nn::Var repr;    // x_text or x_audio
  nn::Var logits;  // B x 2
  nn::Var probs;   // B x 2
  nn::Var alpha;   // text model only
};

/// BiLSTM over the response rows, O = O_f + O_b, attention pooling, head.
class TextModel {
 public:
  explicit TextModel(const TextModelConfig& cfg = {}, const std::string& name = "text");

  ModelOutput forward(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const;
  /// Representation only (the attention output y).
  nn::Var encode(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const;

  void init(nn::Rng& rng);
  void collect(nn::ParamList& out);
  void collect_encoder(nn::ParamList& out);

  const TextModelConfig& config() const { return cfg_; }
  std::size_t repr_dim() const { return cfg_.hidden; }
  nn::BiLstm& bilstm() { return bilstm_; }
  nn::Parameter& attention_weight() { return attn_w_; }
  Head& head() { return head_; }

 private:
  TextModelConfig cfg_;
  nn::BiLstm bilstm_;
  mutable nn::Parameter attn_w_;  // hidden x 1
  Head head_;
};

struct AudioModelConfig {
  features::NetVladConfig netvlad;
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t fc_hidden = 256;
  double dropout = 0.5;
};

/// NetVLAD per response, stacked GRU over responses, head on the final
/// hidden state of the top layer.
class AudioModel {
 public:
  explicit AudioModel(const AudioModelConfig& cfg = {}, const std::string& name = "audio");

  ModelOutput forward(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const;
  nn::Var encode(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const;

  void init(nn::Rng& rng);
  void collect(nn::ParamList& out);
  void collect_encoder(nn::ParamList& out);

  const AudioModelConfig& config() const { return cfg_; }
  std::size_t repr_dim() const { return cfg_.hidden; }
  features::NetVlad& netvlad() { return netvlad_; }
  nn::Gru& gru() { return gru_; }
  Head& head() { return head_; }

 private:
  AudioModelConfig cfg_;
  features::NetVlad netvlad_;
  nn::Gru gru_;
  Head head_;
};

/// Modal attention over [x_text | x_audio] and a single FC to 2 logits whose
/// weight rows split into the text slice and the audio slice.
class FusionHead {
 public:
  FusionHead() = default;
  FusionHead(const std::string& name, std::size_t text_dim, std::size_t audio_dim);

  /// softmax(modal_attention) as a 1 x 2 row (text, audio).
  nn::Var modal_weights(nn::Tape& tape) const;
  /// Combined logits: [a_t x_text | a_a x_audio] W + b.
  nn::Var logits(nn::Var x_text, nn::Var x_audio) const;
  /// Sum over modalities of the cross-entropy of softmax(a_m x_m w_m + b).
  nn::Var loss(nn::Var x_text, nn::Var x_audio, std::span<const int> labels) const;

  void init(nn::Rng& rng);
  void collect(nn::ParamList& out);

  std::size_t text_dim() const { return text_dim_; }
  nn::Parameter& modal_attention() { return modal_attention_; }
  nn::Linear& fc() { return fc_; }

 private:
  std::size_t text_dim_ = 0;
  std::size_t audio_dim_ = 0;
  mutable nn::Parameter modal_attention_;  // 2, initialized to zero
  mutable nn::Linear fc_;                  // (text_dim + audio_dim) x 2
};

nn::Var positive_class(nn::Var probs);
Prediction to_prediction(std::span<const double> probs_row);

}  // namespace moodpipe::models
