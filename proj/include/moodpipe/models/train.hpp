// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "moodpipe/models/models.hpp"

namespace moodpipe::models {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 8;  // >= dataset size means full-batch
  double lr = 1e-3;
  /// Stop once the epoch loss has not improved on its best by more than
  /// min_delta for this many epochs; 0 disables early stopping.
  std::size_t patience = 20;
  double min_delta = 1e-4;
};

struct TrainResult {
  std::vector<double> loss_curve;  // mean training loss per epoch
  bool early_stopped = false;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::size_t epoch, std::size_t batch, double value);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_, batch_;
};

/// Mean loss over the examples named by `indices`, built on `tape`.
using BatchLoss = std::function<nn::Var(nn::Tape& tape, std::span<const std::size_t> indices, nn::Rng& rng)>;

/// Adam mini-batch loop. Each epoch draws one shuffle of 0..n-1 from `rng`;
/// the loss builder may draw dropout masks from the same stream.
TrainResult train_loop(const nn::ParamList& params, std::size_t n, const BatchLoss& loss,
                       const TrainConfig& cfg, nn::Rng& rng);

struct ModelConfig {
  TextModelConfig text;
  AudioModelConfig audio;
};

struct ClassifierTraining {
  TrainResult text;    // empty for the audio model
  TrainResult audio;   // empty for the text model
  TrainResult fusion;  // fusion model only
};

/// One of the three models behind a common train / predict / checkpoint
/// interface. The fusion model trains in two stages: the text and audio
/// models first with their own heads, then, with both frozen, the modal
/// attention and fusion FC on their eval-mode representations.
///
/// Text, audio and the fusion head each draw from their own stream derived
/// from the seed, so the first stage of a fusion run reproduces standalone
/// text and audio runs with the same seed exactly.
class Classifier {
 public:
  explicit Classifier(Modality modality, const ModelConfig& cfg = {});

  /// Seeds the component streams and draws initial parameter values.
  void init(std::uint64_t seed);
  /// Continues each component's stream after init.
  ClassifierTraining train(std::span<const Example> data, const TrainConfig& cfg);
  /// Predictions of the whole model, or of one of its parts (a fusion
  /// model can also answer as its text or audio stage).
  std::vector<Prediction> predict(std::span<const Example> data, std::size_t batch = 32) const;
  std::vector<Prediction> predict_as(Modality part, std::span<const Example> data, std::size_t batch = 32) const;

  nn::ParamList parameters();
  void save(const std::filesystem::path& dir, const nlohmann::json& metadata = {});
  nlohmann::json load(const std::filesystem::path& dir);

  Modality modality() const { return modality_; }
  std::uint64_t seed() const { return seed_; }
  bool has(Modality part) const;
  TextModel& text() { return text_; }
  AudioModel& audio() { return audio_; }
  FusionHead& fusion() { return fusion_; }

 private:
  bool uses_text() const { return modality_ != Modality::kAudio; }
  bool uses_audio() const { return modality_ != Modality::kText; }

  Modality modality_;
  std::uint64_t seed_ = 0;
  TextModel text_;
  AudioModel audio_;
  FusionHead fusion_;
  nn::Rng text_rng_, audio_rng_, fusion_rng_;
};

nlohmann::json to_json(const ModelConfig& cfg);

}  // namespace moodpipe::models
