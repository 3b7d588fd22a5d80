// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/models/models.hpp"

#include <stdexcept>

namespace moodpipe::models {

using nn::Var;

const char* to_string(Modality m) {
  switch (m) {
    case Modality::kAudio: return "audio";
    case Modality::kText: return "text";
    case Modality::kFusion: return "fusion";
  }
  return "unknown";
}

Modality parse_modality(std::string_view s) {
  if (s == "audio") return Modality::kAudio;
  if (s == "text") return Modality::kText;
  if (s == "fusion") return Modality::kFusion;
  throw std::invalid_argument("unknown modality '" + std::string(s) + "' (expected audio, text or fusion)");
}

namespace {

std::size_t batch_steps(Batch batch) {
  if (batch.empty()) throw nn::ShapeError("empty batch");
  const std::size_t s = batch.front()->steps();
  if (s == 0) throw nn::ShapeError("example with no responses");
  for (const Example* e : batch) {
    if (e->steps() != s) {
      throw nn::ShapeError("batch mixes examples of " + std::to_string(s) + " and " +
                           std::to_string(e->steps()) + " responses");
    }
  }
  return s;
}

// Time-major text input: step t is B x W.
std::vector<Var> text_steps(nn::Tape& tape, Batch batch, std::size_t width) {
  const std::size_t S = batch_steps(batch);
  std::vector<Var> steps;
  steps.reserve(S);
  for (std::size_t t = 0; t < S; ++t) {
    nn::Tensor x({batch.size(), width});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const nn::Tensor& m = batch[b]->text;
      if (m.cols() != width) {
        throw nn::ShapeError("text input: expected width " + std::to_string(width) + ", got " +
                             nn::to_string(m.shape()));
      }
      for (std::size_t c = 0; c < width; ++c) x(b, c) = m(t, c);
    }
    steps.push_back(tape.constant(std::move(x)));
  }
  return steps;
}

}  // namespace

Head::Head(const std::string& name, std::size_t in, std::size_t hidden, double dropout)
    : fc1_(name + ".fc1", in, hidden), fc2_(name + ".fc2", hidden, 2), dropout_(dropout) {}

Var Head::forward(Var x, nn::Rng& rng, bool training) const {
  Var h = nn::relu(fc1_.forward(nn::dropout(x, dropout_, rng, training)));
  return fc2_.forward(nn::dropout(h, dropout_, rng, training));
}

void Head::init(nn::Rng& rng) {
  fc1_.init(rng);
  fc2_.init(rng);
}

void Head::collect(nn::ParamList& out) {
  fc1_.collect(out);
  fc2_.collect(out);
}

Attention attention_pool(std::span<const Var> steps, Var w) {
  if (steps.empty()) throw nn::ShapeError("attention over an empty sequence");
  std::vector<Var> scores;
  scores.reserve(steps.size());
  for (Var o : steps) scores.push_back(nn::matmul(nn::tanh(o), w));
  Var alpha = nn::softmax_rows(nn::concat_cols(scores));
  Var y;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    Var term = nn::scale_rows(steps[t], nn::slice_cols(alpha, t, 1));
    y = t == 0 ? term : nn::add(y, term);
  }
  return {alpha, y};
}

Var positive_class(Var probs) { return nn::slice_cols(probs, 1, 1); }

Prediction to_prediction(std::span<const double> row) {
  Prediction p;
  p.probabilities = {row[0], row[1]};
  p.label = row[1] > row[0] ? 1 : 0;
  return p;
}

// ---------------------------------------------------------------- text

TextModel::TextModel(const TextModelConfig& cfg, const std::string& name)
    : cfg_(cfg),
      bilstm_(name + ".bilstm", cfg.input_dim, cfg.hidden, cfg.layers, cfg.dropout),
      attn_w_(name + ".attention.w", nn::Tensor({cfg.hidden, 1})),
      head_(name + ".head", cfg.hidden, cfg.fc_hidden, cfg.dropout) {}

Var TextModel::encode(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const {
  const auto steps = text_steps(tape, batch, cfg_.input_dim);
  const auto o = bilstm_.forward(steps, rng, training);
  std::vector<Var> summed;
  summed.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) summed.push_back(nn::add(o.forward[t], o.backward[t]));
  return attention_pool(summed, tape.param(attn_w_)).y;
}

ModelOutput TextModel::forward(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const {
  const auto steps = text_steps(tape, batch, cfg_.input_dim);
  const auto o = bilstm_.forward(steps, rng, training);
  std::vector<Var> summed;
  summed.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) summed.push_back(nn::add(o.forward[t], o.backward[t]));
  const Attention att = attention_pool(summed, tape.param(attn_w_));
  Var logits = head_.forward(att.y, rng, training);
  return {att.y, logits, nn::softmax_rows(logits), att.alpha};
}

// w starts at zero, so attention is uniform until trained.
void TextModel::init(nn::Rng& rng) {
  bilstm_.init(rng);
  head_.init(rng);
}

void TextModel::collect_encoder(nn::ParamList& out) {
  bilstm_.collect(out);
  out.push_back(&attn_w_);
}

void TextModel::collect(nn::ParamList& out) {
  collect_encoder(out);
  head_.collect(out);
}

// ---------------------------------------------------------------- audio

AudioModel::AudioModel(const AudioModelConfig& cfg, const std::string& name)
    : cfg_(cfg),
      netvlad_(name + ".netvlad", cfg.netvlad),
      gru_(name + ".gru", cfg.netvlad.output_dim, cfg.hidden, cfg.layers, cfg.dropout),
      head_(name + ".head", cfg.hidden, cfg.fc_hidden, cfg.dropout) {}

Var AudioModel::encode(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const {
  const std::size_t S = batch_steps(batch);
  const std::size_t B = batch.size();
  // Row t * B + b holds response t of example b, so each step is a slice.
  std::vector<Var> vlads;
  vlads.reserve(S * B);
  for (std::size_t t = 0; t < S; ++t) {
    for (const Example* e : batch) {
      if (e->mels.size() != S) {
        throw nn::ShapeError("example has " + std::to_string(e->mels.size()) + " spectrograms for " +
                             std::to_string(S) + " responses");
      }
      vlads.push_back(netvlad_.aggregate(tape.constant(*e->mels[t])));
    }
  }
  Var embedded = netvlad_.project(nn::concat_rows(vlads));
  std::vector<Var> steps;
  steps.reserve(S);
  for (std::size_t t = 0; t < S; ++t) steps.push_back(nn::slice_rows(embedded, t * B, B));
  return gru_.forward(steps, rng, training).final_hidden;
}

ModelOutput AudioModel::forward(nn::Tape& tape, Batch batch, nn::Rng& rng, bool training) const {
  Var repr = encode(tape, batch, rng, training);
  Var logits = head_.forward(repr, rng, training);
  return {repr, logits, nn::softmax_rows(logits), {}};
}

void AudioModel::init(nn::Rng& rng) {
  netvlad_.init(rng);
  gru_.init(rng);
  head_.init(rng);
}

void AudioModel::collect_encoder(nn::ParamList& out) {
  netvlad_.collect(out);
  gru_.collect(out);
}

void AudioModel::collect(nn::ParamList& out) {
  collect_encoder(out);
  head_.collect(out);
}

// ---------------------------------------------------------------- fusion

FusionHead::FusionHead(const std::string& name, std::size_t text_dim, std::size_t audio_dim)
    : text_dim_(text_dim),
      audio_dim_(audio_dim),
      modal_attention_(name + ".modal_attention", nn::Tensor({2})),
      fc_(name + ".fc", text_dim + audio_dim, 2) {}

Var FusionHead::modal_weights(nn::Tape& tape) const {
  return nn::softmax_rows(nn::reshape(tape.param(modal_attention_), {1, 2}));
}

Var FusionHead::logits(Var x_text, Var x_audio) const {
  if (x_text.cols() != text_dim_ || x_audio.cols() != audio_dim_) {
    throw nn::ShapeError("fusion: expected text " + std::to_string(text_dim_) + " and audio " +
                         std::to_string(audio_dim_) + " features, got " + nn::to_string(x_text.shape()) +
                         " and " + nn::to_string(x_audio.shape()));
  }
  nn::Tape& t = *x_text.tape;
  Var a = modal_weights(t);
  const Var parts[] = {nn::scale_by(x_text, nn::slice_cols(a, 0, 1)),
                       nn::scale_by(x_audio, nn::slice_cols(a, 1, 1))};
  return fc_.forward(nn::concat_cols(parts));
}

Var FusionHead::loss(Var x_text, Var x_audio, std::span<const int> labels) const {
  if (x_text.cols() != text_dim_ || x_audio.cols() != audio_dim_)
    throw nn::ShapeError("fusion loss: representation widths do not match the head");
  nn::Tape& t = *x_text.tape;
  Var a = modal_weights(t);
  Var w = t.param(fc_.weight());
  Var b = t.param(fc_.bias());
  const Var w_text = nn::slice_rows(w, 0, text_dim_);
  const Var w_audio = nn::slice_rows(w, text_dim_, audio_dim_);
  auto modality_loss = [&](Var x, Var a_m, Var w_m) {
    Var logits = nn::add_row(nn::matmul(nn::scale_by(x, a_m), w_m), b);
    return nn::binary_cross_entropy(positive_class(nn::softmax_rows(logits)), labels);
  };
  const Var terms[] = {modality_loss(x_audio, nn::slice_cols(a, 1, 1), w_audio),
                       modality_loss(x_text, nn::slice_cols(a, 0, 1), w_text)};
  return nn::sum_scalars(terms);
}

void FusionHead::init(nn::Rng& rng) { fc_.init(rng); }

void FusionHead::collect(nn::ParamList& out) {
  out.push_back(&modal_attention_);
  fc_.collect(out);
}

}  // namespace moodpipe::models
